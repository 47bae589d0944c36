"""Bootstrap, rescale, and tile-transform insertion.

The greedy planner walks the graph once in topological order, tracking the
live chain index of every value:

* before any op that would push past ``max_level`` it bootstraps the
  offending operand (bootstraps are shared per source value, so a value
  feeding many consumers is reset once);
* at a binary join with unequal indices it normally rescales the lower
  operand up to the higher one, leaving bootstrap handling to later ops;
  when the higher value feeds at least ``fanout_threshold`` joins against
  lower operands it is bootstrapped once in advance instead, and each join
  rescales the fresh value up to its partner;
* joins whose operands are packed differently get a TileTransform on the
  side with the smaller producing subtree (tie: right operand).

:func:`plan_exhaustive` searches all bootstrap placements on small graphs
and serves as the greedy planner's optimality oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

from . import graph as g_
from .errors import HeplanError, InfeasibleError, TooLargeError, ValidationError
from .graph import DEFAULT_TILE, Graph, Node, TileShape, topo_order
from .levels import LevelRules, LevelTrace, op_level_cost, propagate, propagate_planned

__all__ = [
    "Strategy",
    "PlannerConfig",
    "Plan",
    "plan",
    "plan_exhaustive",
    "validate_plan",
]

EXHAUSTIVE_NODE_LIMIT = 12


class Strategy(str, Enum):
    GREEDY = "greedy"
    EXHAUSTIVE_TINY = "exhaustive-tiny"


@dataclass(frozen=True)
class PlannerConfig:
    """Level budget and placement policy.

    ``max_level`` defaults to 25, matching the usable depth of common
    bootstrappable parameter sets; it also leaves enough headroom that a
    bottleneck block fits without a forced mid-block reset, which is the
    regime where skip wiring visibly changes bootstrap counts.
    ``fanout_threshold`` may be ``math.inf`` to disable the
    bootstrap-in-advance rule entirely.
    """

    max_level: int = 25
    bootstrap_reset_to: int = 0
    fanout_threshold: int | float = 2
    strategy: Strategy = Strategy.GREEDY
    default_tile: TileShape = DEFAULT_TILE

    def __post_init__(self):
        if self.max_level < 1:
            raise ValidationError(f"max_level must be >= 1, got {self.max_level}")
        if not (0 <= self.bootstrap_reset_to < self.max_level):
            raise ValidationError(
                f"bootstrap_reset_to must lie in [0, max_level), got "
                f"{self.bootstrap_reset_to} with max_level {self.max_level}")
        if self.fanout_threshold < 1:
            raise ValidationError(
                f"fanout_threshold must be >= 1, got {self.fanout_threshold}")


@dataclass(frozen=True)
class Plan:
    """A planned graph plus insertion counters and its level trace."""

    planned: Graph
    bootstrap_count: int
    rescale_count: int
    transform_count: int
    trace: LevelTrace
    rules: LevelRules
    cfg: PlannerConfig


def _check_feasible_ops(g: Graph, rules: LevelRules, cfg: PlannerConfig):
    headroom = cfg.max_level - cfg.bootstrap_reset_to
    for node in g:
        cost = op_level_cost(node.op, rules)
        if cost > headroom:
            raise InfeasibleError(
                f"op {node.op.kind} at node {node.id!r} consumes {cost} levels but only "
                f"{headroom} are available after a bootstrap")


def _subtree_sizes(g: Graph) -> dict[str, int]:
    """Number of ancestors (inclusive) of every node."""
    sizes: dict[str, int] = {}
    ancestors: dict[str, frozenset[str]] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        acc: set[str] = {nid}
        for src in node.inputs:
            acc |= ancestors[src]
        ancestors[nid] = frozenset(acc)
        sizes[nid] = len(acc)
    return sizes


class _Inserter:
    """Accumulates planned nodes, generating fresh collision-free ids."""

    def __init__(self, g: Graph):
        self.taken = set(g.nodes)
        self.nodes: list[Node] = []
        self.counts = {"bs": 0, "rs": 0, "tt": 0}

    def _fresh(self, tag: str) -> str:
        name = f"__{tag}{self.counts[tag]}"
        self.counts[tag] += 1
        while name in self.taken:
            name = "_" + name
        self.taken.add(name)
        return name

    def emit(self, node: Node):
        self.nodes.append(node)

    def bootstrap(self, src: str) -> str:
        nid = self._fresh("bs")
        self.emit(Node(nid, g_.Bootstrap(), (src,)))
        return nid

    def rescale(self, src: str, target: int) -> str:
        nid = self._fresh("rs")
        self.emit(Node(nid, g_.Rescale(target), (src,)))
        return nid

    def transform(self, src: str, tile: TileShape) -> str:
        nid = self._fresh("tt")
        self.emit(Node(nid, g_.TileTransform(tile), (src,)))
        return nid


def plan(g: Graph, rules: LevelRules = LevelRules(),
         cfg: PlannerConfig = PlannerConfig()) -> Plan:
    """Plan the graph with the configured strategy."""
    if cfg.strategy is Strategy.EXHAUSTIVE_TINY:
        return plan_exhaustive(g, rules, cfg)
    return _plan_greedy(g, rules, cfg)


def _plan_greedy(g: Graph, rules: LevelRules, cfg: PlannerConfig) -> Plan:
    static = propagate(g, rules)  # also rejects planned/raw ops
    _check_feasible_ops(g, rules, cfg)
    sizes = _subtree_sizes(g)
    consumers = g.consumers()

    ins = _Inserter(g)
    live_c: dict[str, int] = {}
    live_t: dict[str, TileShape] = {}
    bs_of: dict[str, str] = {}  # value id -> its shared bootstrap node

    def bootstrapped(src: str) -> str:
        if src not in bs_of:
            nid = ins.bootstrap(src)
            live_c[nid] = cfg.bootstrap_reset_to
            live_t[nid] = live_t[src]
            bs_of[src] = nid
        return bs_of[src]

    def rescaled(src: str, target: int) -> str:
        nid = ins.rescale(src, target)
        live_c[nid] = target
        live_t[nid] = live_t[src]
        return nid

    def transformed(src: str, tile: TileShape) -> str:
        nid = ins.transform(src, tile)
        live_c[nid] = live_c[src]
        live_t[nid] = tile
        return nid

    def mismatch_fanout(value_id: str, level: int) -> int:
        """Joins fed by this value whose other operand sits strictly lower."""
        count = 0
        for cons_id in consumers[value_id]:
            cons = g.nodes[cons_id]
            if not isinstance(cons.op, (g_.Add, g_.Mul)):
                continue
            for slot, src in enumerate(cons.inputs):
                if src != value_id:
                    continue
                other = cons.inputs[1 - slot]
                other_c = live_c.get(other, static.cidx_of[other])
                if other_c < level:
                    count += 1
        return count

    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        if isinstance(op, g_.Input):
            live_c[nid] = 0
            live_t[nid] = op.tile if op.tile is not None else cfg.default_tile
            ins.emit(node)
            continue

        cost = op_level_cost(op, rules)
        if isinstance(op, (g_.Add, g_.Mul)):
            srcs = list(node.inputs)
            while max(live_c[srcs[0]], live_c[srcs[1]]) + cost > cfg.max_level:
                hi = 0 if live_c[srcs[0]] >= live_c[srcs[1]] else 1
                srcs[hi] = bootstrapped(srcs[hi])
            if live_c[srcs[0]] != live_c[srcs[1]]:
                hi = 0 if live_c[srcs[0]] > live_c[srcs[1]] else 1
                hi_id = srcs[hi]
                if (hi_id in g.nodes
                        and mismatch_fanout(hi_id, live_c[hi_id]) >= cfg.fanout_threshold):
                    srcs[hi] = bootstrapped(hi_id)
            if live_c[srcs[0]] != live_c[srcs[1]]:
                lo = 0 if live_c[srcs[0]] < live_c[srcs[1]] else 1
                srcs[lo] = rescaled(srcs[lo], live_c[srcs[1 - lo]])
            if live_t[srcs[0]] != live_t[srcs[1]]:
                if sizes[node.inputs[0]] < sizes[node.inputs[1]]:
                    srcs[0] = transformed(srcs[0], live_t[srcs[1]])
                else:
                    srcs[1] = transformed(srcs[1], live_t[srcs[0]])
            ins.emit(Node(nid, op, tuple(srcs), node.params_meta))
            live_c[nid] = live_c[srcs[0]] + cost
            live_t[nid] = live_t[srcs[0]]
        else:
            src = node.inputs[0]
            if live_c[src] + cost > cfg.max_level:
                src = bootstrapped(src)
            ins.emit(Node(nid, op, (src,), node.params_meta))
            live_c[nid] = live_c[src] + cost
            live_t[nid] = live_t[src]

    planned = Graph(g.name, ins.nodes, g.outputs)
    trace = propagate_planned(planned, rules, reset_to=cfg.bootstrap_reset_to)
    p = Plan(planned, ins.counts["bs"], ins.counts["rs"], ins.counts["tt"],
             trace, rules, cfg)
    violations = validate_plan(p)
    if violations:
        raise AssertionError(f"planner produced an invalid plan: {violations[0]}")
    return p


def _count_level_nodes(g: Graph, rules: LevelRules) -> int:
    return sum(1 for node in g if op_level_cost(node.op, rules) > 0)


def _feasible(g: Graph, rules: LevelRules, cfg: PlannerConfig,
              reset: frozenset[str]) -> bool:
    """Can the graph run within budget when exactly the values in ``reset``
    are bootstrapped at their producers (joins aligned by rescale)?"""
    eff: dict[str, int] = {}
    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        if isinstance(op, g_.Input):
            c = 0
        else:
            ins = [eff[s] for s in node.inputs]
            cost = op_level_cost(op, rules)
            base = max(ins) if len(ins) == 2 else ins[0]
            if base + cost > cfg.max_level:
                return False
            c = base + cost
        if nid in reset:
            c = cfg.bootstrap_reset_to
        eff[nid] = c
    return True


def _materialize(g: Graph, rules: LevelRules, cfg: PlannerConfig,
                 reset: frozenset[str]) -> Plan:
    """Build the planned graph for a fixed set of bootstrapped values."""
    sizes = _subtree_sizes(g)
    ins = _Inserter(g)
    live_c: dict[str, int] = {}
    live_t: dict[str, TileShape] = {}
    alias: dict[str, str] = {}  # original id -> id consumers must read

    for nid in topo_order(g):
        node = g.nodes[nid]
        op = node.op
        srcs = [alias[s] for s in node.inputs]
        if isinstance(op, g_.Input):
            live_c[nid] = 0
            live_t[nid] = op.tile if op.tile is not None else cfg.default_tile
            ins.emit(node)
        elif isinstance(op, (g_.Add, g_.Mul)):
            if live_c[srcs[0]] != live_c[srcs[1]]:
                lo = 0 if live_c[srcs[0]] < live_c[srcs[1]] else 1
                wrapped = ins.rescale(srcs[lo], live_c[srcs[1 - lo]])
                live_c[wrapped] = live_c[srcs[1 - lo]]
                live_t[wrapped] = live_t[srcs[lo]]
                srcs[lo] = wrapped
            if live_t[srcs[0]] != live_t[srcs[1]]:
                side = 0 if sizes[node.inputs[0]] < sizes[node.inputs[1]] else 1
                wrapped = ins.transform(srcs[side], live_t[srcs[1 - side]])
                live_c[wrapped] = live_c[srcs[side]]
                live_t[wrapped] = live_t[srcs[1 - side]]
                srcs[side] = wrapped
            ins.emit(Node(nid, op, tuple(srcs), node.params_meta))
            live_c[nid] = live_c[srcs[0]] + op_level_cost(op, rules)
            live_t[nid] = live_t[srcs[0]]
        else:
            ins.emit(Node(nid, op, tuple(srcs), node.params_meta))
            live_c[nid] = live_c[srcs[0]] + op_level_cost(op, rules)
            live_t[nid] = live_t[srcs[0]]
        if live_c[nid] > cfg.max_level:
            raise AssertionError("exhaustive candidate exceeded the budget")
        alias[nid] = nid
        if nid in reset:
            bs = ins.bootstrap(nid)
            live_c[bs] = cfg.bootstrap_reset_to
            live_t[bs] = live_t[nid]
            alias[nid] = bs

    planned = Graph(g.name, ins.nodes, g.outputs)
    trace = propagate_planned(planned, rules, reset_to=cfg.bootstrap_reset_to)
    return Plan(planned, ins.counts["bs"], ins.counts["rs"], ins.counts["tt"],
                trace, rules, cfg)


def plan_exhaustive(g: Graph, rules: LevelRules = LevelRules(),
                    cfg: PlannerConfig = PlannerConfig()) -> Plan:
    """Minimal-bootstrap plan by exhaustive search over value resets.

    Only graphs with at most 12 level-consuming nodes are accepted;
    intended as a test oracle for the greedy planner.
    """
    n_level = _count_level_nodes(g, rules)
    if n_level > EXHAUSTIVE_NODE_LIMIT:
        raise TooLargeError(
            f"graph has {n_level} level-consuming nodes; the exhaustive planner "
            f"accepts at most {EXHAUSTIVE_NODE_LIMIT}")
    greedy = _plan_greedy(g, rules, cfg)
    if greedy.bootstrap_count == 0:
        return greedy
    candidates = [nid for nid in topo_order(g)
                  if not isinstance(g.nodes[nid].op, g_.Output)]
    for k in range(greedy.bootstrap_count + 1):
        for combo in itertools.combinations(candidates, k):
            reset = frozenset(combo)
            if _feasible(g, rules, cfg, reset):
                p = _materialize(g, rules, cfg, reset)
                violations = validate_plan(p)
                if violations:
                    raise AssertionError(
                        f"exhaustive planner produced an invalid plan: {violations[0]}")
                return p
    return greedy  # unreachable: the greedy placement itself is feasible


def validate_plan(p: Plan) -> list[str]:
    """Re-check a plan from scratch; returns human-readable violations."""
    out: list[str] = []
    g = p.planned
    try:
        trace = propagate_planned(g, p.rules, reset_to=p.cfg.bootstrap_reset_to)
    except HeplanError as exc:
        return [f"level propagation failed: {exc}"]
    for nid, c in trace.cidx_of.items():
        if c > p.cfg.max_level:
            out.append(f"node {nid!r} reaches chain index {c} > max_level "
                       f"{p.cfg.max_level}")
    tiles = g_.propagate_tiles(g, p.cfg.default_tile)
    census = {"bs": 0, "rs": 0, "tt": 0}
    for node in g:
        if isinstance(node.op, (g_.Add, g_.Mul)):
            a, b = node.inputs
            if trace.cidx_of[a] != trace.cidx_of[b]:
                out.append(f"join {node.id!r} operands at unequal chain indices "
                           f"{trace.cidx_of[a]} vs {trace.cidx_of[b]}")
            if tiles[a] != tiles[b]:
                out.append(f"join {node.id!r} operands packed differently: "
                           f"{tiles[a]} vs {tiles[b]}")
        elif isinstance(node.op, g_.Bootstrap):
            census["bs"] += 1
        elif isinstance(node.op, g_.Rescale):
            census["rs"] += 1
        elif isinstance(node.op, g_.TileTransform):
            census["tt"] += 1
    if (census["bs"], census["rs"], census["tt"]) != (
            p.bootstrap_count, p.rescale_count, p.transform_count):
        out.append(
            f"counters {p.bootstrap_count}/{p.rescale_count}/{p.transform_count} "
            f"disagree with census {census['bs']}/{census['rs']}/{census['tt']}")
    if trace.cidx_of != dict(p.trace.cidx_of):
        out.append("stored trace disagrees with re-propagation")
    return out
