"""Independent reference implementations the tests check against.

Deliberately written in a different style from the package code (memoized
recursion, direct enumeration) so a shared bug is unlikely.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from heplan.graph import Graph
from heplan.levels import LevelRules


def cidx_by_walk(g: Graph, rules: LevelRules) -> dict[str, int]:
    """Chain indices by memoized recursion straight from the edge rules."""
    memo: dict[str, int] = {}

    def walk(nid: str) -> int:
        if nid in memo:
            return memo[nid]
        node = g.nodes[nid]
        kind = node.op.kind
        if kind == "Input":
            c = 0
        elif kind in ("Conv", "Dense", "AvgPool"):
            c = walk(node.inputs[0]) + rules.cp_mult_cost
        elif kind == "PolyAct":
            c = walk(node.inputs[0]) + rules.polyact_depth(node.op.degree)
        elif kind == "BatchNorm":
            c = walk(node.inputs[0]) + rules.bn_cost
        elif kind == "Add":
            c = max(walk(node.inputs[0]), walk(node.inputs[1])) + rules.add_cost
        elif kind == "Mul":
            c = max(walk(node.inputs[0]), walk(node.inputs[1])) + rules.cc_mult_cost
        elif kind == "Output":
            c = walk(node.inputs[0])
        else:
            raise AssertionError(f"oracle cannot price op {kind}")
        memo[nid] = c
        return c

    for nid in g.nodes:
        walk(nid)
    return memo


def is_topological(g: Graph, order: tuple[str, ...]) -> bool:
    """Direct predecessor scan: every node after all of its inputs."""
    if sorted(order) != sorted(g.nodes):
        return False
    position = {nid: i for i, nid in enumerate(order)}
    return all(position[src] < position[nid]
               for nid in g.nodes for src in g.nodes[nid].inputs)


def balanced_tree_polyact_depth(degree: int) -> int:
    """Levels to evaluate a polynomial by a balanced power tree plus one
    cleartext coefficient multiply."""
    return math.ceil(math.log2(degree)) + 1


def chain_min_bootstraps(length: int, max_level: int) -> int:
    """Minimal bootstraps for a chain of unit-level multiplies, by direct
    enumeration of every reset-point subset."""
    positions = range(1, length + 1)  # reset after link i
    for k in range(length + 1):
        for combo in itertools.combinations(positions, k):
            level = 0
            feasible = True
            resets = set(combo)
            for i in range(1, length + 1):
                level += 1
                if level > max_level:
                    feasible = False
                    break
                if i in resets:
                    level = 0
            if feasible:
                return k
    raise AssertionError("unreachable")


class Interval:
    """Closed-interval arithmetic over elementwise tensors."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        assert np.all(self.lo <= self.hi + 1e-15)

    @classmethod
    def exact(cls, x: np.ndarray) -> "Interval":
        return cls(np.array(x, copy=True), np.array(x, copy=True))

    def widen(self, eps: float) -> "Interval":
        return Interval(self.lo - eps, self.hi + eps)

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def mul(self, other: "Interval") -> "Interval":
        cands = np.stack([self.lo * other.lo, self.lo * other.hi,
                          self.hi * other.lo, self.hi * other.hi])
        return Interval(cands.min(axis=0), cands.max(axis=0))

    def scale(self, w: float) -> "Interval":
        if w >= 0:
            return Interval(self.lo * w, self.hi * w)
        return Interval(self.hi * w, self.lo * w)

    def shift(self, b: float) -> "Interval":
        return Interval(self.lo + b, self.hi + b)


def interval_output_bounds(g: Graph, inputs, weights, epsilon: float,
                           coeffs, reset_nodes: set[str]) -> dict[str, "Interval"]:
    """Interval propagation through a planned graph; bootstrap nodes widen
    by epsilon. Returns output-name -> interval containing both the exact
    and any perturbed execution."""
    from heplan.graph import topo_order

    state: dict[str, Interval] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        kind = node.op.kind
        if kind == "Input":
            state[nid] = Interval.exact(np.asarray(inputs[nid], dtype=np.float64))
            continue
        ins = [state[s] for s in node.inputs]
        if kind == "Bootstrap":
            iv = ins[0].widen(epsilon) if nid in reset_nodes or epsilon > 0 else ins[0]
        elif kind == "Conv":
            w = np.asarray(weights[f"{nid}.weight"], dtype=np.float64)
            iv = _interval_conv(ins[0], w, node.op.stride)
            if node.op.dirac:
                scale = np.asarray(weights[f"{nid}.dirac"], dtype=np.float64)
                proj_lo = ins[0].lo[np.arange(node.op.out_channels) % ins[0].lo.shape[0]]
                proj_hi = ins[0].hi[np.arange(node.op.out_channels) % ins[0].hi.shape[0]]
                s = scale[:, None, None]
                lo2 = np.minimum(proj_lo * s, proj_hi * s)
                hi2 = np.maximum(proj_lo * s, proj_hi * s)
                iv = Interval(iv.lo + lo2, iv.hi + hi2)
        elif kind == "AvgPool":
            from heplan.backend import avg_pool
            iv = Interval(avg_pool(ins[0].lo, node.op.kernel, node.op.stride),
                          avg_pool(ins[0].hi, node.op.kernel, node.op.stride))
        elif kind == "Dense":
            w = np.asarray(weights[f"{nid}.weight"], dtype=np.float64)
            b = np.asarray(weights[f"{nid}.bias"], dtype=np.float64)
            wp, wn = np.maximum(w, 0), np.minimum(w, 0)
            lo = wp @ ins[0].lo.reshape(-1) + wn @ ins[0].hi.reshape(-1) + b
            hi = wp @ ins[0].hi.reshape(-1) + wn @ ins[0].lo.reshape(-1) + b
            iv = Interval(lo, hi)
        elif kind == "BatchNorm":
            scale = np.asarray(weights[f"{nid}.scale"], dtype=np.float64)
            shift = np.asarray(weights[f"{nid}.shift"], dtype=np.float64)
            sc = scale[:, None, None] if ins[0].lo.ndim == 3 else scale
            sh = shift[:, None, None] if ins[0].lo.ndim == 3 else shift
            lo = np.minimum(ins[0].lo * sc, ins[0].hi * sc) + sh
            hi = np.maximum(ins[0].lo * sc, ins[0].hi * sc) + sh
            iv = Interval(lo, hi)
        elif kind == "PolyAct":
            cs = coeffs[node.op.degree]
            acc = Interval.exact(np.full_like(ins[0].lo, cs[-1]))
            for c in reversed(cs[:-1]):
                acc = acc.mul(ins[0]).shift(c)
            iv = acc
        elif kind == "Add":
            iv = ins[0] + ins[1]
        elif kind == "Mul":
            iv = ins[0].mul(ins[1])
        else:  # Rescale, TileTransform, Output
            iv = ins[0]
        state[nid] = iv
    return {o: state[o] for o in g.outputs}


def _interval_conv(iv: Interval, w: np.ndarray, stride: int) -> Interval:
    from heplan.backend import conv2d_same
    wp, wn = np.maximum(w, 0), np.minimum(w, 0)
    lo = conv2d_same(iv.lo, wp, stride) + conv2d_same(iv.hi, wn, stride)
    hi = conv2d_same(iv.hi, wp, stride) + conv2d_same(iv.lo, wn, stride)
    return Interval(lo, hi)
