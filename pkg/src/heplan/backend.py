"""Mock execution of planned graphs on plaintext tensors.

Runs the actual numerics (conv, pooling, dense, polynomial activations)
while enforcing ciphertext semantics at every step: the level budget, join
equality in chain index and packing, and an optional bounded perturbation
at bootstraps standing in for approximate decryption. The point is to
check the static analyses against dynamic behavior, never to measure time.

Tensors are C,H,W (or flat) float64. Convolutions zero-pad SAME with the
asymmetric rule (extra padding goes bottom/right); pooling is VALID when
kernel == stride, otherwise SAME with padding excluded from the averages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import graph as g_
from .activations import coefficients_for, default_coefficients
from .errors import JoinMismatchError, LevelOverflowError, ShapeError
from .graph import CipherMeta, Graph, TileShape, infer_shapes, topo_order
from .levels import LevelRules, LevelTrace, op_level_cost
from .planner import Plan

__all__ = [
    "MockCiphertext",
    "NoiseConfig",
    "ExecutionResult",
    "execute",
    "cleartext_reference",
    "noise_bound",
    "random_inputs",
    "random_weights",
    "conv2d_same",
    "avg_pool",
    "polyact_eval",
    "dirac_project",
]


@dataclass(frozen=True)
class NoiseConfig:
    """Uniform perturbation bound applied wherever a bootstrap re-encodes
    the value; epsilon 0 makes execution exact."""

    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ShapeError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass
class MockCiphertext:
    """A plaintext tensor plus the ciphertext metadata the analyses track."""

    values: np.ndarray
    meta: CipherMeta


@dataclass(frozen=True)
class ExecutionResult:
    outputs: dict[str, np.ndarray]
    runtime_trace: LevelTrace
    op_census: dict[str, int]


def conv2d_same(x: np.ndarray, w: np.ndarray, stride: int = 1) -> np.ndarray:
    """SAME-padded 2-D convolution; x is (C,H,W), w is (O,C,kh,kw)."""
    c, h, width = x.shape
    out_c, in_c, kh, kw = w.shape
    if in_c != c:
        raise ShapeError(f"conv expects {in_c} input channels, got {c}")
    out_h = -(-h // stride)
    out_w = -(-width // stride)
    pad_h = max((out_h - 1) * stride + kh - h, 0)
    pad_w = max((out_w - 1) * stride + kw - width, 0)
    top, left = pad_h // 2, pad_w // 2
    xp = np.pad(x, ((0, 0), (top, pad_h - top), (left, pad_w - left)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride][:, :out_h, :out_w]
    return np.einsum("cijhw,ochw->oij", windows, w, optimize=True)


def avg_pool(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Average pooling matching :func:`heplan.graph.pool_out_size`."""
    c, h, w = x.shape
    if kernel == stride:
        if h < kernel or w < kernel:
            raise ShapeError(f"pool kernel {kernel} exceeds input {h}x{w}")
        out_h = (h - kernel) // stride + 1
        out_w = (w - kernel) // stride + 1
        trimmed = x[:, :out_h * stride, :out_w * stride]
        return trimmed.reshape(c, out_h, kernel, out_w, kernel).mean(axis=(2, 4))
    out_h = -(-h // stride)
    out_w = -(-w // stride)
    pad_h = max((out_h - 1) * stride + kernel - h, 0)
    pad_w = max((out_w - 1) * stride + kernel - w, 0)
    top, left = pad_h // 2, pad_w // 2
    xp = np.pad(x, ((0, 0), (top, pad_h - top), (left, pad_w - left)))
    ones = np.pad(np.ones((1, h, w)), ((0, 0), (top, pad_h - top), (left, pad_w - left)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(1, 2))
    cnt = np.lib.stride_tricks.sliding_window_view(ones, (kernel, kernel), axis=(1, 2))
    win = win[:, ::stride, ::stride][:, :out_h, :out_w]
    cnt = cnt[:, ::stride, ::stride][:, :out_h, :out_w]
    return win.sum(axis=(3, 4)) / cnt.sum(axis=(3, 4))


def polyact_eval(x: np.ndarray, coefs: tuple[float, ...]) -> np.ndarray:
    """Evaluate a polynomial (lowest power first) via Horner."""
    acc = np.full_like(x, coefs[-1])
    for c in reversed(coefs[:-1]):
        acc = acc * x + c
    return acc


def dirac_project(x: np.ndarray, out_channels: int) -> np.ndarray:
    """Identity path of a dirac conv: output channel o reads input channel
    o mod C (cyclic, so channel growth and shrinkage both work)."""
    c = x.shape[0]
    return x[np.arange(out_channels) % c]


def _dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    flat = x.reshape(-1)
    if w.shape[1] != flat.size:
        raise ShapeError(f"dense expects {w.shape[1]} features, got {flat.size}")
    return w @ flat + b


def _weight(weights: Mapping[str, np.ndarray], node_id: str, key: str) -> np.ndarray:
    name = f"{node_id}.{key}"
    if name not in weights:
        raise ShapeError(f"missing weight tensor {name!r}")
    return np.asarray(weights[name], dtype=np.float64)


def _apply_numeric(node: g_.Node, ins: list[np.ndarray],
                   weights: Mapping[str, np.ndarray],
                   coeffs: dict[int, tuple[float, ...]]) -> np.ndarray:
    """Shared numeric semantics of one op, HE bookkeeping excluded."""
    op = node.op
    if isinstance(op, g_.Conv):
        w = _weight(weights, node.id, "weight")
        if w.shape[0] != op.out_channels or w.shape[2] != op.kernel:
            raise ShapeError(
                f"conv {node.id!r} weight shape {w.shape} disagrees with attrs")
        y = conv2d_same(ins[0], w, op.stride)
        if op.dirac:
            scale = _weight(weights, node.id, "dirac")
            y = y + scale[:, None, None] * dirac_project(ins[0], op.out_channels)
        return y
    if isinstance(op, g_.AvgPool):
        return avg_pool(ins[0], op.kernel, op.stride)
    if isinstance(op, g_.Dense):
        return _dense(ins[0], _weight(weights, node.id, "weight"),
                      _weight(weights, node.id, "bias"))
    if isinstance(op, g_.PolyAct):
        return polyact_eval(ins[0], coefficients_for(op.degree, coeffs))
    if isinstance(op, g_.BatchNorm):
        scale = _weight(weights, node.id, "scale")
        shift = _weight(weights, node.id, "shift")
        if ins[0].ndim == 3:
            return ins[0] * scale[:, None, None] + shift[:, None, None]
        return ins[0] * scale + shift
    if isinstance(op, g_.Add):
        return ins[0] + ins[1]
    if isinstance(op, g_.Mul):
        return ins[0] * ins[1]
    # Bootstrap / Rescale / TileTransform / Output are numeric identities
    return ins[0]


def execute(p: Plan, inputs: Mapping[str, np.ndarray],
            weights: Mapping[str, np.ndarray],
            noise: NoiseConfig = NoiseConfig(),
            coeffs: dict[int, tuple[float, ...]] | None = None) -> ExecutionResult:
    """Run a plan, enforcing level budget and join equality as it goes."""
    coeffs = coeffs if coeffs is not None else default_coefficients()
    rules = p.rules
    cfg = p.cfg
    g = p.planned
    rng = np.random.default_rng(noise.seed)
    state: dict[str, MockCiphertext] = {}
    census: dict[str, int] = {}
    mismatches: list[tuple[str, int]] = []

    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        census[op.kind] = census.get(op.kind, 0) + 1
        if isinstance(op, g_.Input):
            if nid not in inputs:
                raise ShapeError(f"no tensor supplied for input {nid!r}")
            values = np.asarray(inputs[nid], dtype=np.float64)
            if op.dims is not None and tuple(values.shape) != op.dims:
                raise ShapeError(
                    f"input {nid!r} expects dims {op.dims}, got {tuple(values.shape)}")
            tile = op.tile if op.tile is not None else cfg.default_tile
            state[nid] = MockCiphertext(values, CipherMeta(0, tile, tuple(values.shape)))
            continue

        operands = [state[s] for s in node.inputs]
        ins = [o.values for o in operands]

        if isinstance(op, g_.Bootstrap):
            values = ins[0]
            if noise.epsilon > 0:
                values = values + rng.uniform(-noise.epsilon, noise.epsilon, values.shape)
            cidx = cfg.bootstrap_reset_to
            tile = operands[0].meta.tile
        elif isinstance(op, g_.Rescale):
            incoming = operands[0].meta.cidx
            if op.target_cidx < incoming:
                raise LevelOverflowError(
                    f"rescale {nid!r} target {op.target_cidx} below live index {incoming}")
            values = ins[0]
            cidx = op.target_cidx
            tile = operands[0].meta.tile
        elif isinstance(op, g_.TileTransform):
            values = ins[0]
            cidx = operands[0].meta.cidx
            tile = op.target_tile
        elif isinstance(op, (g_.Add, g_.Mul)):
            a, b = operands
            if a.meta.cidx != b.meta.cidx:
                mismatches.append((nid, abs(a.meta.cidx - b.meta.cidx)))
                raise JoinMismatchError(
                    f"join {nid!r} operands at chain indices "
                    f"{a.meta.cidx} vs {b.meta.cidx}")
            if a.meta.tile != b.meta.tile:
                raise JoinMismatchError(
                    f"join {nid!r} operands packed {a.meta.tile} vs {b.meta.tile}")
            if a.values.shape != b.values.shape:
                raise ShapeError(
                    f"join {nid!r} operand shapes {a.values.shape} vs {b.values.shape}")
            values = _apply_numeric(node, ins, weights, coeffs)
            cidx = a.meta.cidx + op_level_cost(op, rules)
            tile = a.meta.tile
        else:
            values = _apply_numeric(node, ins, weights, coeffs)
            cidx = operands[0].meta.cidx + op_level_cost(op, rules)
            tile = operands[0].meta.tile

        if cidx > cfg.max_level:
            raise LevelOverflowError(
                f"node {nid!r} would reach chain index {cidx} > max_level "
                f"{cfg.max_level}; the plan is unsafe")
        if not np.all(np.isfinite(values)):
            raise ShapeError(f"non-finite values at node {nid!r}")
        state[nid] = MockCiphertext(values, CipherMeta(cidx, tile, tuple(values.shape)))

    cidx_of = {nid: ct.meta.cidx for nid, ct in state.items()}
    depth = max(cidx_of[o] for o in g.outputs)
    trace = LevelTrace(cidx_of, depth, tuple(mismatches))
    outputs = {o: state[o].values for o in g.outputs}
    return ExecutionResult(outputs, trace, census)


def cleartext_reference(g: Graph, inputs: Mapping[str, np.ndarray],
                        weights: Mapping[str, np.ndarray],
                        coeffs: dict[int, tuple[float, ...]] | None = None
                        ) -> dict[str, np.ndarray]:
    """Same numerics with every ciphertext concern ignored.

    Accepts planned or unplanned graphs; planner-inserted nodes are
    numeric identities, so a plan and its source graph agree exactly.
    """
    coeffs = coeffs if coeffs is not None else default_coefficients()
    state: dict[str, np.ndarray] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        if isinstance(node.op, g_.Input):
            if nid not in inputs:
                raise ShapeError(f"no tensor supplied for input {nid!r}")
            state[nid] = np.asarray(inputs[nid], dtype=np.float64)
            continue
        ins = [state[s] for s in node.inputs]
        if isinstance(node.op, (g_.Add, g_.Mul)) and ins[0].shape != ins[1].shape:
            raise ShapeError(
                f"join {nid!r} operand shapes {ins[0].shape} vs {ins[1].shape}")
        state[nid] = _apply_numeric(node, ins, weights, coeffs)
    return {o: state[o] for o in g.outputs}


def noise_bound(p: Plan, inputs: Mapping[str, np.ndarray],
                weights: Mapping[str, np.ndarray],
                noise: NoiseConfig,
                coeffs: dict[int, tuple[float, ...]] | None = None
                ) -> dict[str, np.ndarray]:
    """Per-slot upper bound on |execute - cleartext_reference|.

    Propagates elementwise error bounds: bootstraps inject epsilon, linear
    ops transport bounds through absolute weights, joins combine them, and
    polynomial activations expand (v + e)^i - v^i binomially around the
    cleartext values.
    """
    coeffs = coeffs if coeffs is not None else default_coefficients()
    g = p.planned
    with np.errstate(over="ignore", invalid="ignore"):  # bounds may saturate to inf
        return _noise_bound_walk(p, g, inputs, weights, noise, coeffs)


def _noise_bound_walk(p: Plan, g: Graph, inputs, weights, noise: NoiseConfig,
                      coeffs) -> dict[str, np.ndarray]:
    clear: dict[str, np.ndarray] = {}
    err: dict[str, np.ndarray] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        if isinstance(op, g_.Input):
            clear[nid] = np.asarray(inputs[nid], dtype=np.float64)
            err[nid] = np.zeros_like(clear[nid])
            continue
        ins = [clear[s] for s in node.inputs]
        eins = [err[s] for s in node.inputs]
        clear[nid] = _apply_numeric(node, ins, weights, coeffs)
        if isinstance(op, g_.Bootstrap):
            err[nid] = eins[0] + noise.epsilon
        elif isinstance(op, g_.Conv):
            w = np.abs(_weight(weights, node.id, "weight"))
            e = conv2d_same(eins[0], w, op.stride)
            if op.dirac:
                scale = np.abs(_weight(weights, node.id, "dirac"))
                e = e + scale[:, None, None] * dirac_project(eins[0], op.out_channels)
            err[nid] = e
        elif isinstance(op, g_.AvgPool):
            err[nid] = avg_pool(eins[0], op.kernel, op.stride)
        elif isinstance(op, g_.Dense):
            err[nid] = np.abs(_weight(weights, node.id, "weight")) @ eins[0].reshape(-1)
        elif isinstance(op, g_.BatchNorm):
            scale = np.abs(_weight(weights, node.id, "scale"))
            if eins[0].ndim == 3:
                err[nid] = eins[0] * scale[:, None, None]
            else:
                err[nid] = eins[0] * scale
        elif isinstance(op, g_.Add):
            err[nid] = eins[0] + eins[1]
        elif isinstance(op, g_.Mul):
            a, b = ins
            ea, eb = eins
            err[nid] = np.abs(a) * eb + np.abs(b) * ea + ea * eb
        elif isinstance(op, g_.PolyAct):
            cs = coefficients_for(op.degree, coeffs)
            v = np.abs(ins[0])
            e = eins[0]
            bound = np.zeros_like(v)
            for i, c in enumerate(cs):
                if i == 0 or c == 0:
                    continue
                # |(v+e)^i - v^i| <= sum_j C(i,j) |v|^(i-j) e^j for j >= 1
                term = np.zeros_like(v)
                comb = 1.0
                for j in range(1, i + 1):
                    comb = comb * (i - j + 1) / j
                    term = term + comb * v ** (i - j) * e ** j
                bound = bound + abs(c) * term
            err[nid] = bound
        else:
            err[nid] = eins[0]
    return {o: err[o] for o in g.outputs}


def random_inputs(g: Graph, seed: int = 0, scale: float = 1.0
                  ) -> dict[str, np.ndarray]:
    """Seeded standard-normal tensors for every graph input."""
    rng = np.random.default_rng(seed)
    shapes = infer_shapes(g)
    out = {}
    for nid in topo_order(g):
        if isinstance(g.nodes[nid].op, g_.Input):
            out[nid] = rng.normal(0.0, scale, shapes[nid])
    return out


def random_weights(g: Graph, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded fan-in-scaled weights for every parameterized node."""
    rng = np.random.default_rng(seed)
    shapes = infer_shapes(g)
    out: dict[str, np.ndarray] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        if isinstance(op, g_.Conv):
            in_c = shapes[node.inputs[0]][0]
            fan_in = in_c * op.kernel * op.kernel
            out[f"{nid}.weight"] = rng.normal(
                0.0, 1.0 / np.sqrt(fan_in), (op.out_channels, in_c, op.kernel, op.kernel))
            if op.dirac:
                out[f"{nid}.dirac"] = rng.normal(1.0, 0.1, (op.out_channels,))
        elif isinstance(op, g_.Dense):
            fan_in = int(np.prod(shapes[node.inputs[0]]))
            out[f"{nid}.weight"] = rng.normal(
                0.0, 1.0 / np.sqrt(fan_in), (op.out_features, fan_in))
            out[f"{nid}.bias"] = rng.normal(0.0, 0.01, (op.out_features,))
        elif isinstance(op, g_.BatchNorm):
            ch = shapes[node.inputs[0]][0]
            out[f"{nid}.scale"] = rng.normal(1.0, 0.1, (ch,))
            out[f"{nid}.shift"] = rng.normal(0.0, 0.1, (ch,))
    return out
