"""Computation-graph IR for networks executed under leveled HE.

A :class:`Graph` is an immutable, validated DAG of :class:`Node` objects.
Nodes carry an :class:`Op` describing what they compute; ciphertext
metadata (chain index, tile shape) is attached by the analyses in
:mod:`heplan.levels` and :mod:`heplan.planner`, not stored in the graph.

The on-disk form is the ``.hegraph`` document: a UTF-8 JSON object
``{"name": str, "nodes": [{"id", "op", "attrs", "inputs"}], "outputs": [str]}``
emitted in topological order with lexicographic tie-breaks, so emission is
canonical and diff-able.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Any, ClassVar, Iterable, Iterator, Mapping

from .errors import (
    CycleError,
    GraphSyntaxError,
    ShapeError,
    ValidationError,
)

__all__ = [
    "TileShape",
    "CipherMeta",
    "Op",
    "Input",
    "Conv",
    "AvgPool",
    "MaxPool",
    "ReLU",
    "Dense",
    "PolyAct",
    "BatchNorm",
    "Add",
    "Mul",
    "Bootstrap",
    "Rescale",
    "TileTransform",
    "Output",
    "Node",
    "Graph",
    "DEFAULT_TILE",
    "OP_REGISTRY",
    "topo_order",
    "parse_graph",
    "emit_graph",
    "infer_shapes",
    "propagate_tiles",
    "conv_out_size",
    "pool_out_size",
]


@dataclass(frozen=True, order=True)
class TileShape:
    """Packing of a tensor into ciphertext SIMD slots along three axes.

    Two tile shapes are compatible for elementwise ops iff they are equal
    component-wise; mismatched operands need an explicit transform first.
    """

    batch_tile: int
    channel_tile: int
    spatial_tile: int

    def __post_init__(self):
        for name in ("batch_tile", "channel_tile", "spatial_tile"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")

    def as_list(self) -> list[int]:
        return [self.batch_tile, self.channel_tile, self.spatial_tile]

    @classmethod
    def from_list(cls, raw: Any, *, node_id: str | None = None) -> "TileShape":
        if not (isinstance(raw, list) and len(raw) == 3):
            raise GraphSyntaxError(
                f"tile shape must be a 3-element list, got {raw!r}", node_id=node_id
            )
        try:
            return cls(*raw)
        except ValidationError as exc:
            raise GraphSyntaxError(str(exc), node_id=node_id) from exc


DEFAULT_TILE = TileShape(1, 1, 1)


@dataclass(frozen=True)
class CipherMeta:
    """Per-value ciphertext metadata: chain index, packing, logical shape."""

    cidx: int
    tile: TileShape
    tensor_dims: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.cidx, int) or self.cidx < 0:
            raise ValidationError(f"cidx must be a non-negative integer, got {self.cidx!r}")
        if not self.tensor_dims:
            raise ValidationError("tensor_dims must be non-empty")
        if any((not isinstance(d, int)) or d < 1 for d in self.tensor_dims):
            raise ValidationError(f"tensor_dims must be positive integers, got {self.tensor_dims!r}")


def _require_attr(attrs: Mapping[str, Any], key: str, kind: str, node_id: str | None):
    if key not in attrs:
        raise GraphSyntaxError(f"op {kind} requires attr {key!r}", node_id=node_id)
    return attrs[key]


def _int_attr(value: Any, key: str, node_id: str | None, minimum: int = 0) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise GraphSyntaxError(
            f"attr {key!r} must be an integer >= {minimum}, got {value!r}", node_id=node_id
        )
    return value


def _check_no_extra(attrs: Mapping[str, Any], allowed: frozenset[str],
                    kind: str, node_id: str | None):
    extra = set(attrs) - set(allowed)
    if extra:
        raise GraphSyntaxError(
            f"unknown attrs {sorted(extra)!r} for op {kind}", node_id=node_id
        )


OP_REGISTRY: dict[str, type["Op"]] = {}


def _register(cls: type["Op"]) -> type["Op"]:
    OP_REGISTRY[cls.kind] = cls
    return cls


@dataclass(frozen=True)
class Op:
    """Base class for node operations.

    ``arity`` is the required number of inputs; ``planned_only`` ops may
    appear only in planner output, ``raw_only`` ops only in graphs that
    have not yet been made HE-friendly.
    """

    kind: ClassVar[str] = ""
    arity: ClassVar[int] = 1
    planned_only: ClassVar[bool] = False
    raw_only: ClassVar[bool] = False
    _allowed: ClassVar[frozenset[str]] = frozenset()

    def attrs(self) -> dict[str, Any]:
        return {}

    @classmethod
    def from_attrs(cls, attrs: Mapping[str, Any], node_id: str | None = None) -> "Op":
        _check_no_extra(attrs, cls._allowed, cls.kind, node_id)
        return cls()


@_register
@dataclass(frozen=True)
class Input(Op):
    """Graph input. Optional explicit packing and logical dims."""

    kind: ClassVar[str] = "Input"
    arity: ClassVar[int] = 0
    _allowed: ClassVar[frozenset[str]] = frozenset({"tile", "dims"})

    tile: TileShape | None = None
    dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.dims is not None:
            if not self.dims or any((not isinstance(d, int)) or d < 1 for d in self.dims):
                raise ValidationError(f"input dims must be positive integers, got {self.dims!r}")

    def attrs(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.tile is not None:
            out["tile"] = self.tile.as_list()
        if self.dims is not None:
            out["dims"] = list(self.dims)
        return out

    @classmethod
    def from_attrs(cls, attrs, node_id=None):
        _check_no_extra(attrs, cls._allowed, cls.kind, node_id)
        tile = None
        if "tile" in attrs:
            tile = TileShape.from_list(attrs["tile"], node_id=node_id)
        dims = None
        if "dims" in attrs:
            raw = attrs["dims"]
            if not isinstance(raw, list) or not raw:
                raise GraphSyntaxError("attr 'dims' must be a non-empty list", node_id=node_id)
            dims = tuple(_int_attr(d, "dims", node_id, minimum=1) for d in raw)
        return cls(tile=tile, dims=dims)


@_register
@dataclass(frozen=True)
class Conv(Op):
    """2-D convolution with zero SAME padding; weights stay in cleartext.

    ``dirac`` folds an identity path into the kernel: the op computes
    ``scale * ident(x) + weight (*) x`` in one multiplication level.
    """

    kind: ClassVar[str] = "Conv"
    _allowed: ClassVar[frozenset[str]] = frozenset({"out_channels", "kernel", "stride", "dirac"})

    out_channels: int = 1
    kernel: int = 1
    stride: int = 1
    dirac: bool = False

    def __post_init__(self):
        if self.out_channels < 1 or self.kernel < 1 or self.stride < 1:
            raise ValidationError(
                f"Conv requires out_channels/kernel/stride >= 1, got "
                f"{self.out_channels}/{self.kernel}/{self.stride}"
            )

    def attrs(self) -> dict[str, Any]:
        return {
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "dirac": self.dirac,
        }

    @classmethod
    def from_attrs(cls, attrs, node_id=None):
        _check_no_extra(attrs, cls._allowed, cls.kind, node_id)
        dirac = attrs.get("dirac", False)
        if not isinstance(dirac, bool):
            raise GraphSyntaxError(f"attr 'dirac' must be a bool, got {dirac!r}", node_id=node_id)
        return cls(
            out_channels=_int_attr(_require_attr(attrs, "out_channels", cls.kind, node_id),
                                   "out_channels", node_id, 1),
            kernel=_int_attr(_require_attr(attrs, "kernel", cls.kind, node_id),
                             "kernel", node_id, 1),
            stride=_int_attr(attrs.get("stride", 1), "stride", node_id, 1),
            dirac=dirac,
        )


@dataclass(frozen=True)
class _Pool(Op):
    kernel: int = 1
    stride: int = 1
    _allowed: ClassVar[frozenset[str]] = frozenset({"kernel", "stride"})

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1:
            raise ValidationError(
                f"{self.kind} requires kernel/stride >= 1, got {self.kernel}/{self.stride}"
            )

    def attrs(self) -> dict[str, Any]:
        return {"kernel": self.kernel, "stride": self.stride}

    @classmethod
    def from_attrs(cls, attrs, node_id=None):
        _check_no_extra(attrs, cls._allowed, cls.kind, node_id)
        return cls(
            kernel=_int_attr(_require_attr(attrs, "kernel", cls.kind, node_id),
                             "kernel", node_id, 1),
            stride=_int_attr(_require_attr(attrs, "stride", cls.kind, node_id),
                             "stride", node_id, 1),
        )


@_register
@dataclass(frozen=True)
class AvgPool(_Pool):
    """Average pooling. Padding rule: VALID when kernel == stride, else SAME."""

    kind: ClassVar[str] = "AvgPool"


@_register
@dataclass(frozen=True)
class MaxPool(_Pool):
    """Max pooling; accepted only as pre-HE-friendly input."""

    kind: ClassVar[str] = "MaxPool"
    raw_only: ClassVar[bool] = True


@_register
@dataclass(frozen=True)
class ReLU(Op):
    """Rectifier; accepted only as pre-HE-friendly input."""

    kind: ClassVar[str] = "ReLU"
    raw_only: ClassVar[bool] = True


@_register
@dataclass(frozen=True)
class Dense(Op):
    """Fully connected layer over the flattened input."""

    kind: ClassVar[str] = "Dense"
    _allowed: ClassVar[frozenset[str]] = frozenset({"out_features"})

    out_features: int = 1

    def __post_init__(self):
        if self.out_features < 1:
            raise ValidationError(f"Dense requires out_features >= 1, got {self.out_features}")

    def attrs(self) -> dict[str, Any]:
        return {"out_features": self.out_features}

    @classmethod
    def from_attrs(cls, attrs, node_id=None):
        _check_no_extra(attrs, cls._allowed, cls.kind, node_id)
        return cls(out_features=_int_attr(
            _require_attr(attrs, "out_features", cls.kind, node_id), "out_features", node_id, 1))


@_register
@dataclass(frozen=True)
class PolyAct(Op):
    """Polynomial activation of a given degree."""

    kind: ClassVar[str] = "PolyAct"
    _allowed: ClassVar[frozenset[str]] = frozenset({"degree"})

    degree: int = 1

    def __post_init__(self):
        if self.degree < 1:
            raise ValidationError(f"PolyAct requires degree >= 1, got {self.degree}")

    def attrs(self) -> dict[str, Any]:
        return {"degree": self.degree}

    @classmethod
    def from_attrs(cls, attrs, node_id=None):
        _check_no_extra(attrs, cls._allowed, cls.kind, node_id)
        return cls(degree=_int_attr(
            _require_attr(attrs, "degree", cls.kind, node_id), "degree", node_id, 1))


@_register
@dataclass(frozen=True)
class BatchNorm(Op):
    """Per-channel affine normalization (folded scale and shift at inference)."""

    kind: ClassVar[str] = "BatchNorm"


@_register
@dataclass(frozen=True)
class Add(Op):
    """Elementwise addition; carries skip-connection joins."""

    kind: ClassVar[str] = "Add"
    arity: ClassVar[int] = 2


@_register
@dataclass(frozen=True)
class Mul(Op):
    """Elementwise ciphertext-ciphertext multiplication."""

    kind: ClassVar[str] = "Mul"
    arity: ClassVar[int] = 2


@_register
@dataclass(frozen=True)
class Bootstrap(Op):
    """Resets the chain index to the planner's configured level."""

    kind: ClassVar[str] = "Bootstrap"
    planned_only: ClassVar[bool] = True


@_register
@dataclass(frozen=True)
class Rescale(Op):
    """Aligns a ciphertext up to ``target_cidx`` (never downwards)."""

    kind: ClassVar[str] = "Rescale"
    planned_only: ClassVar[bool] = True
    _allowed: ClassVar[frozenset[str]] = frozenset({"target_cidx"})

    target_cidx: int = 0

    def __post_init__(self):
        if self.target_cidx < 0:
            raise ValidationError(f"Rescale target_cidx must be >= 0, got {self.target_cidx}")

    def attrs(self) -> dict[str, Any]:
        return {"target_cidx": self.target_cidx}

    @classmethod
    def from_attrs(cls, attrs, node_id=None):
        _check_no_extra(attrs, cls._allowed, cls.kind, node_id)
        return cls(target_cidx=_int_attr(
            _require_attr(attrs, "target_cidx", cls.kind, node_id), "target_cidx", node_id, 0))


@_register
@dataclass(frozen=True)
class TileTransform(Op):
    """Repacks a value into ``target_tile`` so a join's operands agree."""

    kind: ClassVar[str] = "TileTransform"
    planned_only: ClassVar[bool] = True
    _allowed: ClassVar[frozenset[str]] = frozenset({"target_tile"})

    target_tile: TileShape = DEFAULT_TILE

    def attrs(self) -> dict[str, Any]:
        return {"target_tile": self.target_tile.as_list()}

    @classmethod
    def from_attrs(cls, attrs, node_id=None):
        _check_no_extra(attrs, cls._allowed, cls.kind, node_id)
        return cls(target_tile=TileShape.from_list(
            _require_attr(attrs, "target_tile", cls.kind, node_id), node_id=node_id))


@_register
@dataclass(frozen=True)
class Output(Op):
    """Marks a graph output."""

    kind: ClassVar[str] = "Output"


@dataclass(frozen=True)
class Node:
    """One operation instance.

    ``params_meta`` records expected weight-tensor dims (name -> dims).
    It is in-memory metadata only: it is not serialized and does not
    participate in equality.
    """

    id: str
    op: Op
    inputs: tuple[str, ...] = ()
    params_meta: Mapping[str, tuple[int, ...]] | None = field(
        default=None, compare=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError(f"node id must be a non-empty string, got {self.id!r}")
        if not isinstance(self.inputs, tuple):
            object.__setattr__(self, "inputs", tuple(self.inputs))
        if len(self.inputs) != self.op.arity:
            raise ValidationError(
                f"op {self.op.kind} takes {self.op.arity} input(s), got {len(self.inputs)}",
                node_id=self.id,
            )


class Graph:
    """Validated, immutable DAG. Safe to share across threads once built."""

    __slots__ = ("name", "_nodes", "outputs", "_topo", "_dead", "_consumers")

    def __init__(self, name: str, nodes: Iterable[Node], outputs: Iterable[str]):
        self.name = name
        node_map: dict[str, Node] = {}
        for node in nodes:
            if node.id in node_map:
                raise ValidationError("duplicate node id", node_id=node.id)
            node_map[node.id] = node
        self._nodes = node_map
        self.outputs = tuple(outputs)
        self._validate()
        self._topo = self._compute_topo()
        self._dead = self._compute_dead()
        self._consumers: dict[str, tuple[str, ...]] | None = None

    @property
    def nodes(self) -> Mapping[str, Node]:
        return self._nodes

    @property
    def dead(self) -> frozenset[str]:
        """Nodes that do not reach any declared output."""
        return self._dead

    def node(self, node_id: str) -> Node:
        return self._nodes[node_id]

    def consumers(self) -> Mapping[str, tuple[str, ...]]:
        """Map node id -> ids of nodes consuming it (lazily computed)."""
        if self._consumers is None:
            acc: dict[str, list[str]] = {nid: [] for nid in self._nodes}
            for nid in self._topo:
                for src in self._nodes[nid].inputs:
                    acc[src].append(nid)
            self._consumers = {k: tuple(v) for k, v in acc.items()}
        return self._consumers

    def _validate(self):
        if not self.outputs:
            raise ValidationError(f"graph {self.name!r} declares no outputs")
        for out in self.outputs:
            if out not in self._nodes:
                raise ValidationError("output id not found", node_id=out)
        for node in self._nodes.values():
            for src in node.inputs:
                if src not in self._nodes:
                    raise ValidationError(
                        f"input id {src!r} does not exist", node_id=node.id)

    def _compute_topo(self) -> tuple[str, ...]:
        in_deg = {nid: len(n.inputs) for nid, n in self._nodes.items()}
        consumers: dict[str, list[str]] = {nid: [] for nid in self._nodes}
        for nid, node in self._nodes.items():
            for src in node.inputs:
                consumers[src].append(nid)
        ready = [nid for nid, deg in in_deg.items() if deg == 0]
        heapq.heapify(ready)
        order: list[str] = []
        while ready:
            nid = heapq.heappop(ready)
            order.append(nid)
            for consumer in consumers[nid]:
                in_deg[consumer] -= 1
                if in_deg[consumer] == 0:
                    heapq.heappush(ready, consumer)
        if len(order) != len(self._nodes):
            stuck = min(nid for nid, deg in in_deg.items() if deg > 0)
            raise CycleError("cycle detected", node_id=stuck)
        return tuple(order)

    def _compute_dead(self) -> frozenset[str]:
        live: set[str] = set()
        stack = list(self.outputs)
        while stack:
            nid = stack.pop()
            if nid in live:
                continue
            live.add(nid)
            stack.extend(self._nodes[nid].inputs)
        return frozenset(self._nodes) - live

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.name == other.name and self._nodes == other._nodes
                and self.outputs == other.outputs)

    def __hash__(self):
        return hash((self.name, frozenset(self._nodes), self.outputs))

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self) -> Iterator[Node]:
        for nid in self._topo:
            yield self._nodes[nid]

    def __repr__(self) -> str:
        return f"Graph({self.name!r}, {len(self._nodes)} nodes, outputs={list(self.outputs)!r})"


def topo_order(g: Graph) -> tuple[str, ...]:
    """Topological order of node ids, lexicographic tie-break. Deterministic."""
    return g._topo


def parse_graph(text: str) -> Graph:
    """Parse a ``.hegraph`` document into a validated Graph."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphSyntaxError(f"invalid JSON: {exc.msg}", line=exc.lineno, col=exc.colno) from exc
    if not isinstance(doc, dict):
        raise GraphSyntaxError("document root must be an object")
    extra = set(doc) - {"name", "nodes", "outputs"}
    if extra:
        raise GraphSyntaxError(f"unknown top-level keys {sorted(extra)!r}")
    for key in ("name", "nodes", "outputs"):
        if key not in doc:
            raise GraphSyntaxError(f"missing top-level key {key!r}")
    if not isinstance(doc["name"], str):
        raise GraphSyntaxError("'name' must be a string")
    if not isinstance(doc["nodes"], list):
        raise GraphSyntaxError("'nodes' must be a list")
    if not isinstance(doc["outputs"], list) or not all(isinstance(o, str) for o in doc["outputs"]):
        raise GraphSyntaxError("'outputs' must be a list of node ids")

    nodes: list[Node] = []
    for entry in doc["nodes"]:
        if not isinstance(entry, dict):
            raise GraphSyntaxError(f"node entry must be an object, got {entry!r}")
        extra = set(entry) - {"id", "op", "attrs", "inputs"}
        if extra:
            raise GraphSyntaxError(f"unknown node keys {sorted(extra)!r}",
                                   node_id=entry.get("id"))
        node_id = entry.get("id")
        if not isinstance(node_id, str) or not node_id:
            raise GraphSyntaxError(f"node id must be a non-empty string, got {node_id!r}")
        op_name = entry.get("op")
        if op_name not in OP_REGISTRY:
            raise GraphSyntaxError(f"unknown op {op_name!r}", node_id=node_id)
        attrs = entry.get("attrs", {})
        if not isinstance(attrs, dict):
            raise GraphSyntaxError("'attrs' must be an object", node_id=node_id)
        inputs = entry.get("inputs", [])
        if not isinstance(inputs, list) or not all(isinstance(i, str) for i in inputs):
            raise GraphSyntaxError("'inputs' must be a list of node ids", node_id=node_id)
        op = OP_REGISTRY[op_name].from_attrs(attrs, node_id)
        nodes.append(Node(node_id, op, tuple(inputs)))
    return Graph(doc["name"], nodes, doc["outputs"])


def emit_graph(g: Graph) -> str:
    """Serialize a Graph canonically; ``parse_graph(emit_graph(g)) == g``."""
    entries = []
    for nid in topo_order(g):
        node = g.nodes[nid]
        entries.append({
            "id": node.id,
            "op": node.op.kind,
            "attrs": node.op.attrs(),
            "inputs": list(node.inputs),
        })
    doc = {"name": g.name, "nodes": entries, "outputs": list(g.outputs)}
    return json.dumps(doc, indent=2) + "\n"


def conv_out_size(size: int, kernel: int, stride: int) -> int:
    """Output spatial size of a SAME-padded convolution."""
    return max(1, math.ceil(size / stride))


def pool_out_size(size: int, kernel: int, stride: int) -> int:
    """Output spatial size of a pool: VALID when kernel == stride, else SAME."""
    if kernel == stride:
        if size < kernel:
            raise ShapeError(f"pool kernel {kernel} exceeds input size {size}")
        return (size - kernel) // stride + 1
    return max(1, math.ceil(size / stride))


def infer_shapes(g: Graph, input_dims: Mapping[str, tuple[int, ...]] | None = None
                 ) -> dict[str, tuple[int, ...]]:
    """Propagate logical tensor dims through the graph.

    Input dims come from each Input's ``dims`` attr, overridable through
    ``input_dims``. Raises ShapeError when dims are unknown or operands of
    a join disagree.
    """
    dims: dict[str, tuple[int, ...]] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        if isinstance(op, Input):
            d = None
            if input_dims and nid in input_dims:
                d = tuple(input_dims[nid])
            elif op.dims is not None:
                d = op.dims
            if d is None:
                raise ShapeError(f"unknown dims for input {nid!r}")
            dims[nid] = d
        elif isinstance(op, Conv):
            c, h, w = _expect_chw(dims[node.inputs[0]], nid)
            dims[nid] = (op.out_channels,
                         conv_out_size(h, op.kernel, op.stride),
                         conv_out_size(w, op.kernel, op.stride))
        elif isinstance(op, (AvgPool, MaxPool)):
            c, h, w = _expect_chw(dims[node.inputs[0]], nid)
            dims[nid] = (c,
                         pool_out_size(h, op.kernel, op.stride),
                         pool_out_size(w, op.kernel, op.stride))
        elif isinstance(op, Dense):
            dims[nid] = (op.out_features,)
        elif isinstance(op, (Add, Mul)):
            a, b = (dims[i] for i in node.inputs)
            if a != b:
                raise ShapeError(f"join operands disagree: {a} vs {b} at node {nid!r}")
            dims[nid] = a
        else:
            dims[nid] = dims[node.inputs[0]]
    return dims


def _expect_chw(d: tuple[int, ...], nid: str) -> tuple[int, int, int]:
    if len(d) != 3:
        raise ShapeError(f"node {nid!r} requires C,H,W input dims, got {d}")
    return d


def propagate_tiles(g: Graph, default_tile: TileShape = DEFAULT_TILE
                    ) -> dict[str, TileShape]:
    """Tile shape of every node's output value.

    Packing is inherited: an Input's explicit tile (or the default) flows
    through every op unchanged; only TileTransform changes it. Joins take
    the left operand's tile, so callers that care about mismatches must
    compare operand tiles themselves.
    """
    tiles: dict[str, TileShape] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        if isinstance(op, Input):
            tiles[nid] = op.tile if op.tile is not None else default_tile
        elif isinstance(op, TileTransform):
            tiles[nid] = op.target_tile
        else:
            tiles[nid] = tiles[node.inputs[0]]
    return tiles
