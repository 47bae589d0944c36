"""Static chain-index propagation and multiplicative-depth analysis.

Every ciphertext starts at chain index 0; each multiplication level an op
consumes pushes the index up, and a ciphertext-ciphertext product of
operands at x and y lands at max(x, y) + 1. This module computes the
resolved index of every edge in a graph that contains no planner-inserted
ops; :func:`propagate_planned` is the variant used to re-check planner
output, where Bootstrap and Rescale are meaningful.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping

from . import graph as g_
from .errors import UnplannedOpError, UnsupportedOpError, ValidationError
from .graph import Graph, topo_order

__all__ = [
    "LevelRules",
    "LevelTrace",
    "propagate",
    "propagate_planned",
    "multiplicative_depth",
    "op_level_cost",
    "default_polyact_depth",
]


def default_polyact_depth(degree: int) -> int:
    """Levels consumed by a degree-d polynomial under a balanced product
    tree plus one cleartext coefficient multiplication."""
    return math.ceil(math.log2(degree + 1))


@dataclass(frozen=True)
class LevelRules:
    """Per-op level consumption.

    ``polyact_levels`` overrides the default activation depth for specific
    degrees, e.g. to model a different polynomial evaluator.
    """

    cc_mult_cost: int = 1
    cp_mult_cost: int = 1
    bn_cost: int = 0
    add_cost: int = 0
    polyact_levels: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        for name in ("cc_mult_cost", "cp_mult_cost", "bn_cost", "add_cost"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.polyact_levels is not None:
            table = tuple(sorted(self.polyact_levels))
            object.__setattr__(self, "polyact_levels", table)
            if any(d < 1 or lv < 0 for d, lv in table):
                raise ValidationError("polyact_levels entries must be (degree>=1, levels>=0)")
            levels = [lv for _, lv in table]
            if any(b < a for a, b in zip(levels, levels[1:])):
                raise ValidationError("polyact_levels must be monotone in degree")

    def polyact_depth(self, degree: int) -> int:
        if degree < 1:
            raise ValidationError(f"polynomial degree must be >= 1, got {degree}")
        if self.polyact_levels:
            for d, lv in self.polyact_levels:
                if d == degree:
                    return lv
        return default_polyact_depth(degree)


@dataclass(frozen=True)
class LevelTrace:
    """Resolved chain index of every node's output value.

    ``depth`` is the maximum over the graph's declared outputs.
    ``mismatches`` lists every Add whose operands arrived at unequal
    indices, with the absolute gap.
    """

    cidx_of: Mapping[str, int]
    depth: int
    mismatches: tuple[tuple[str, int], ...]

    def as_json(self) -> str:
        return json.dumps({nid: self.cidx_of[nid] for nid in sorted(self.cidx_of)},
                          indent=2) + "\n"


def op_level_cost(op: g_.Op, rules: LevelRules) -> int:
    """Levels the op adds on top of its (aligned) operand index."""
    if isinstance(op, (g_.Conv, g_.Dense, g_.AvgPool)):
        return rules.cp_mult_cost
    if isinstance(op, g_.PolyAct):
        return rules.polyact_depth(op.degree)
    if isinstance(op, g_.BatchNorm):
        return rules.bn_cost
    if isinstance(op, g_.Add):
        return rules.add_cost
    if isinstance(op, g_.Mul):
        return rules.cc_mult_cost
    if isinstance(op, (g_.Input, g_.Output)):
        return 0
    if op.planned_only:
        return 0
    raise UnsupportedOpError(f"op {op.kind} has no level rule; make the graph HE-friendly first")


def propagate(g: Graph, rules: LevelRules = LevelRules()) -> LevelTrace:
    """Chain indices for an unplanned graph.

    Raises UnplannedOpError on Bootstrap/Rescale/TileTransform and
    UnsupportedOpError on raw (non-HE-friendly) ops.
    """
    cidx: dict[str, int] = {}
    mismatches: list[tuple[str, int]] = []
    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        if op.planned_only:
            raise UnplannedOpError(
                f"planner op {op.kind} at node {nid!r}; expected an unplanned graph")
        if isinstance(op, g_.Input):
            cidx[nid] = 0
        elif isinstance(op, (g_.Add, g_.Mul)):
            left, right = (cidx[i] for i in node.inputs)
            cidx[nid] = max(left, right) + op_level_cost(op, rules)
            if isinstance(op, g_.Add) and left != right:
                mismatches.append((nid, abs(left - right)))
        else:
            cidx[nid] = cidx[node.inputs[0]] + op_level_cost(op, rules)
    depth = max(cidx[o] for o in g.outputs)
    return LevelTrace(cidx, depth, tuple(mismatches))


def propagate_planned(g: Graph, rules: LevelRules = LevelRules(), *,
                      reset_to: int = 0) -> LevelTrace:
    """Chain indices for a planned graph.

    Bootstrap resets to ``reset_to``; Rescale jumps to its target (which
    must not be below the incoming index). Raw ops are still rejected.
    """
    cidx: dict[str, int] = {}
    mismatches: list[tuple[str, int]] = []
    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        if isinstance(op, g_.Input):
            cidx[nid] = 0
        elif isinstance(op, g_.Bootstrap):
            cidx[nid] = reset_to
        elif isinstance(op, g_.Rescale):
            incoming = cidx[node.inputs[0]]
            if op.target_cidx < incoming:
                raise ValidationError(
                    f"rescale target {op.target_cidx} below incoming index {incoming}",
                    node_id=nid)
            cidx[nid] = op.target_cidx
        elif isinstance(op, g_.TileTransform):
            cidx[nid] = cidx[node.inputs[0]]
        elif isinstance(op, (g_.Add, g_.Mul)):
            left, right = (cidx[i] for i in node.inputs)
            cidx[nid] = max(left, right) + op_level_cost(op, rules)
            if isinstance(op, g_.Add) and left != right:
                mismatches.append((nid, abs(left - right)))
        else:
            cidx[nid] = cidx[node.inputs[0]] + op_level_cost(op, rules)
    depth = max(cidx[o] for o in g.outputs)
    return LevelTrace(cidx, depth, tuple(mismatches))


def multiplicative_depth(g: Graph, rules: LevelRules = LevelRules()) -> int:
    """Maximum chain index any output accumulates, bootstrap-free."""
    return propagate(g, rules).depth
