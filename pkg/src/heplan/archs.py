"""Builders for the HE-friendly ResNet variants.

Four wirings of the same bottleneck backbone:

* ``reference``          - classic mid-term skip add after every block
* ``skipless``           - no skip connections at all
* ``dirac``              - skipless, with the identity path folded into the
                           first two convs of every stride-1 block
* ``shared-source-dirac``- dirac, plus one long skip from the stem conv
                           output to each of the four stage outputs,
                           dimension-matched by a 1x1 conv and an average
                           pool

Builders emit raw graphs (ReLU/MaxPool) via :func:`build_raw`;
:func:`build` applies the HE-friendly substitutions on top.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError, UnknownPresetError, UnsupportedOpError
from .graph import (
    Add,
    AvgPool,
    BatchNorm,
    Conv,
    Dense,
    Graph,
    Input,
    MaxPool,
    Node,
    Output,
    PolyAct,
    ReLU,
    conv_out_size,
    pool_out_size,
)

__all__ = [
    "Variant",
    "SkipMode",
    "ArchConfig",
    "BlockSpec",
    "build",
    "build_raw",
    "make_he_friendly",
    "toy_preset",
    "preset",
    "PRESETS",
]

BOTTLENECK_EXPANSION = 4


class Variant(str, Enum):
    REFERENCE = "reference"
    SKIPLESS = "skipless"
    DIRAC_ONLY = "dirac"
    SHARED_SOURCE_DIRAC = "shared-source-dirac"


class SkipMode(str, Enum):
    MID_TERM = "mid-term"
    NONE = "none"
    SHARED_SOURCE_TARGET = "shared-source-target"


@dataclass(frozen=True)
class ArchConfig:
    """Parameters of one architecture build."""

    variant: Variant
    poly_degree: int = 8
    stage_blocks: tuple[int, int, int, int] = (3, 4, 6, 3)
    base_channels: int = 64
    input_dims: tuple[int, int, int] = (3, 32, 32)
    num_classes: int = 10
    stem_kernel: int = 7
    stem_pool_kernel: int = 3
    stem_pool_stride: int = 2
    name: str = ""

    def __post_init__(self):
        if self.poly_degree < 1:
            raise ConfigError(f"poly_degree must be >= 1, got {self.poly_degree}")
        if len(self.stage_blocks) != 4 or any(b < 1 for b in self.stage_blocks):
            raise ConfigError(f"stage_blocks must be 4 positive counts, got {self.stage_blocks}")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")
        if len(self.input_dims) != 3 or any(d < 1 for d in self.input_dims):
            raise ConfigError(f"input_dims must be (C, H, W), got {self.input_dims}")
        if not self.name:
            scale = "toy" if sum(self.stage_blocks) <= 4 else "resnet50"
            object.__setattr__(
                self, "name", f"{scale}-{self.variant.value}-deg{self.poly_degree}")


@dataclass(frozen=True)
class BlockSpec:
    """One bottleneck block: channel triple, stride, and skip wiring."""

    channels: tuple[int, int, int]  # in, mid, out
    stride: int
    skip: SkipMode
    dirac_on_first_two: bool = False

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.dirac_on_first_two and self.stride != 1:
            raise ConfigError("dirac parameterization requires stride 1")


class _GraphBuilder:
    def __init__(self, name: str):
        self.name = name
        self.nodes: list[Node] = []

    def add(self, node_id: str, op, inputs=(), params=None) -> str:
        self.nodes.append(Node(node_id, op, tuple(inputs), params))
        return node_id

    def finish(self, outputs: list[str]) -> Graph:
        return Graph(self.name, self.nodes, outputs)


def _block_specs(cfg: ArchConfig) -> list[list[BlockSpec]]:
    """Per-stage block specs implementing the selected variant."""
    specs: list[list[BlockSpec]] = []
    in_ch = cfg.base_channels
    for stage, count in enumerate(cfg.stage_blocks):
        mid = cfg.base_channels * (2 ** stage)
        out = mid * BOTTLENECK_EXPANSION
        stage_specs = []
        for i in range(count):
            stride = 2 if (stage > 0 and i == 0) else 1
            if cfg.variant is Variant.REFERENCE:
                skip = SkipMode.MID_TERM
                dirac = False
            else:
                skip = SkipMode.NONE
                dirac = (cfg.variant in (Variant.DIRAC_ONLY, Variant.SHARED_SOURCE_DIRAC)
                         and stride == 1)
            if (cfg.variant is Variant.SHARED_SOURCE_DIRAC and i == count - 1):
                skip = SkipMode.SHARED_SOURCE_TARGET
            stage_specs.append(BlockSpec((in_ch, mid, out), stride, skip, dirac))
            in_ch = out
        specs.append(stage_specs)
    return specs


def _emit_block(b: _GraphBuilder, prefix: str, spec: BlockSpec, entry: str) -> str:
    """Emit one bottleneck block; returns the id of its output value."""
    c_in, c_mid, c_out = spec.channels

    def conv(tag: str, src: str, out_ch: int, in_ch: int, kernel: int,
             stride: int, dirac: bool) -> str:
        params = {"weight": (out_ch, in_ch, kernel, kernel)}
        if dirac:
            params["dirac"] = (out_ch,)
        cid = b.add(f"{prefix}.{tag}", Conv(out_ch, kernel, stride, dirac), [src], params)
        return b.add(f"{prefix}.{tag}_bn", BatchNorm(), [cid],
                     {"scale": (out_ch,), "shift": (out_ch,)})

    x = conv("conv1", entry, c_mid, c_in, 1, 1, spec.dirac_on_first_two)
    x = b.add(f"{prefix}.act1", ReLU(), [x])
    x = conv("conv2", x, c_mid, c_mid, 3, spec.stride, spec.dirac_on_first_two)
    x = b.add(f"{prefix}.act2", ReLU(), [x])
    x = conv("conv3", x, c_out, c_mid, 1, 1, False)

    if spec.skip is SkipMode.MID_TERM:
        if spec.stride != 1 or c_in != c_out:
            shortcut = conv("proj", entry, c_out, c_in, 1, spec.stride, False)
        else:
            shortcut = entry
        x = b.add(f"{prefix}.add", Add(), [shortcut, x])
    x = b.add(f"{prefix}.act3", ReLU(), [x])
    return x


def build_raw(cfg: ArchConfig) -> Graph:
    """Build the variant with ReLU activations and a MaxPool stem."""
    b = _GraphBuilder(cfg.name)
    c, h, w = cfg.input_dims
    x = b.add("in", Input(dims=cfg.input_dims))
    x = b.add("stem.conv", Conv(cfg.base_channels, cfg.stem_kernel, 2), [x],
              {"weight": (cfg.base_channels, c, cfg.stem_kernel, cfg.stem_kernel)})
    stem_out = b.add("stem.bn", BatchNorm(), [x],
                     {"scale": (cfg.base_channels,), "shift": (cfg.base_channels,)})
    x = b.add("stem.act", ReLU(), [stem_out])
    x = b.add("stem.pool", MaxPool(cfg.stem_pool_kernel, cfg.stem_pool_stride), [x])

    stem_size = conv_out_size(h, cfg.stem_kernel, 2)
    size = pool_out_size(stem_size, cfg.stem_pool_kernel, cfg.stem_pool_stride)

    specs = _block_specs(cfg)
    for stage, stage_specs in enumerate(specs):
        for i, spec in enumerate(stage_specs):
            x = _emit_block(b, f"s{stage + 1}.b{i + 1}", spec, x)
            size = conv_out_size(size, 3, spec.stride)
        last = stage_specs[-1]
        if last.skip is SkipMode.SHARED_SOURCE_TARGET:
            x = _emit_shared_source(b, cfg, stage, last, stem_out, stem_size, size, x)

    x = b.add("head.pool", AvgPool(size, size), [x])
    feat = specs[-1][-1].channels[2]
    x = b.add("head.fc", Dense(cfg.num_classes), [x],
              {"weight": (cfg.num_classes, feat), "bias": (cfg.num_classes,)})
    out = b.add("out", Output(), [x])
    return b.finish([out])


def _emit_shared_source(b: _GraphBuilder, cfg: ArchConfig, stage: int,
                        last: BlockSpec, stem_out: str, stem_size: int,
                        stage_size: int, stage_out: str) -> str:
    """Adapter (1x1 conv then average pool) plus the long-skip add."""
    target_ch = last.channels[2]
    if stem_size % stage_size != 0:
        raise ConfigError(
            f"stage {stage + 1} output size {stage_size} does not divide the "
            f"stem conv output size {stem_size}; no average pool can match them")
    ratio = stem_size // stage_size
    a = b.add(f"ssrc.s{stage + 1}.conv", Conv(target_ch, 1, 1), [stem_out],
              {"weight": (target_ch, cfg.base_channels, 1, 1)})
    a = b.add(f"ssrc.s{stage + 1}.pool", AvgPool(ratio, ratio), [a])
    return b.add(f"ssrc.s{stage + 1}.add", Add(), [a, stage_out])


def make_he_friendly(g: Graph, poly_degree: int) -> Graph:
    """Replace MaxPool with AvgPool and ReLU with a polynomial activation.

    Every other node is kept as-is; node count and ids are preserved.
    """
    if poly_degree < 1:
        raise ConfigError(f"poly_degree must be >= 1, got {poly_degree}")
    nodes = []
    for node in g:
        op = node.op
        if isinstance(op, MaxPool):
            op = AvgPool(op.kernel, op.stride)
        elif isinstance(op, ReLU):
            op = PolyAct(poly_degree)
        elif op.planned_only:
            raise UnsupportedOpError(
                f"op {op.kind} at node {node.id!r} has no HE-friendly substitution")
        nodes.append(Node(node.id, op, node.inputs, node.params_meta))
    return Graph(g.name, nodes, g.outputs)


def build(cfg: ArchConfig) -> Graph:
    """Build the HE-friendly form of the configured variant."""
    return make_he_friendly(build_raw(cfg), cfg.poly_degree)


_TOY = dict(stage_blocks=(1, 1, 1, 1), base_channels=8, input_dims=(3, 16, 16),
            stem_kernel=3, stem_pool_kernel=2, stem_pool_stride=2)

PRESETS: dict[str, ArchConfig] = {
    "toy-ref": ArchConfig(Variant.REFERENCE, **_TOY),
    "toy-skipless": ArchConfig(Variant.SKIPLESS, **_TOY),
    "toy-dirac": ArchConfig(Variant.DIRAC_ONLY, **_TOY),
    "toy-ssd": ArchConfig(Variant.SHARED_SOURCE_DIRAC, **_TOY),
    "resnet50-ref": ArchConfig(Variant.REFERENCE),
    "resnet50-skipless": ArchConfig(Variant.SKIPLESS),
    "resnet50-dirac": ArchConfig(Variant.DIRAC_ONLY),
    "resnet50-ssd": ArchConfig(Variant.SHARED_SOURCE_DIRAC),
}


def preset(name: str, poly_degree: int | None = None) -> ArchConfig:
    """Look up a named preset, optionally overriding the activation degree."""
    if name not in PRESETS:
        raise UnknownPresetError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    cfg = PRESETS[name]
    if poly_degree is not None and poly_degree != cfg.poly_degree:
        cfg = dataclasses.replace(cfg, poly_degree=poly_degree, name="")
    return cfg


def toy_preset(name: str) -> ArchConfig:
    """Desk-scale presets; built graphs stay under 100 nodes."""
    if not name.startswith("toy-"):
        raise UnknownPresetError(f"not a toy preset: {name!r}")
    return preset(name)
