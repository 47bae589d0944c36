"""Chain-index propagation against the independent interpreter oracle."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heplan.archs import build, preset
from heplan.errors import UnplannedOpError, UnsupportedOpError, ValidationError
from heplan.graph import (
    Add,
    Bootstrap,
    Conv,
    Graph,
    Input,
    Mul,
    Node,
    Output,
    PolyAct,
    ReLU,
    Rescale,
)
from heplan.levels import (
    LevelRules,
    default_polyact_depth,
    multiplicative_depth,
    propagate,
    propagate_planned,
)

from .corpus import conv_chain_nodes, mul_chain, random_dag
from .oracles import balanced_tree_polyact_depth, cidx_by_walk

RULES = LevelRules()


def test_identity_graph_depth_zero():
    g = Graph("id", [Node("in", Input()), Node("out", Output(), ("in",))], ["out"])
    trace = propagate(g, RULES)
    assert trace.cidx_of == {"in": 0, "out": 0}
    assert trace.depth == 0
    assert trace.mismatches == ()


def test_cc_multiply_is_max_plus_one():
    # operands arriving at indices 2 and 3 -> product at 4
    nodes = [Node("a", Input()), Node("b", Input())]
    left = conv_chain_nodes(nodes, "l", "a", 2)
    right = conv_chain_nodes(nodes, "r", "b", 3)
    nodes += [Node("m", Mul(), (left, right)), Node("out", Output(), ("m",))]
    g = Graph("mul", nodes, ["out"])
    trace = propagate(g, RULES)
    assert trace.cidx_of[left] == 2
    assert trace.cidx_of[right] == 3
    assert trace.cidx_of["m"] == 4


def test_add_resolves_to_max_and_records_mismatch():
    nodes = [Node("a", Input())]
    hi = conv_chain_nodes(nodes, "h", "a", 5)
    lo = conv_chain_nodes(nodes, "l", "a", 1)
    nodes += [Node("s", Add(), (hi, lo)), Node("out", Output(), ("s",))]
    g = Graph("skip", nodes, ["out"])
    trace = propagate(g, RULES)
    assert trace.cidx_of["s"] == 5
    assert trace.cidx_of["s"] in (trace.cidx_of[hi], trace.cidx_of[lo])
    assert trace.mismatches == (("s", 4),)


def test_equal_operand_add_not_a_mismatch():
    nodes = [Node("a", Input())]
    x = conv_chain_nodes(nodes, "x", "a", 2)
    y = conv_chain_nodes(nodes, "y", "a", 2)
    nodes += [Node("s", Add(), (x, y)), Node("out", Output(), ("s",))]
    trace = propagate(Graph("even", nodes, ["out"]), RULES)
    assert trace.mismatches == ()


def test_planned_ops_rejected():
    g = Graph("p", [
        Node("in", Input()),
        Node("b", Bootstrap(), ("in",)),
        Node("out", Output(), ("b",)),
    ], ["out"])
    with pytest.raises(UnplannedOpError):
        propagate(g, RULES)


def test_raw_ops_rejected():
    g = Graph("r", [
        Node("in", Input()),
        Node("a", ReLU(), ("in",)),
        Node("out", Output(), ("a",)),
    ], ["out"])
    with pytest.raises(UnsupportedOpError):
        propagate(g, RULES)


class TestDepth:
    def test_chain_of_five_multiplies(self):
        assert multiplicative_depth(mul_chain(5), RULES) == 5

    def test_polyact_degree8_depth(self):
        g = Graph("act", [
            Node("in", Input()),
            Node("a", PolyAct(8), ("in",)),
            Node("out", Output(), ("a",)),
        ], ["out"])
        assert multiplicative_depth(g, RULES) == 4

    @pytest.mark.parametrize("degree", [2, 4, 8])
    def test_default_polyact_depth_matches_tree_oracle(self, degree):
        assert default_polyact_depth(degree) == balanced_tree_polyact_depth(degree)

    def test_reference_at_least_skipless(self):
        ref = build(preset("toy-ref"))
        skl = build(preset("toy-skipless"))
        assert multiplicative_depth(ref, RULES) >= multiplicative_depth(skl, RULES)


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(40))
    def test_random_dags_match_interpreter(self, seed):
        g = random_dag(seed, max_nodes=30)
        trace = propagate(g, RULES)
        assert dict(trace.cidx_of) == cidx_by_walk(g, RULES)

    def test_toy_preset_matches_interpreter(self):
        g = build(preset("toy-ref"))
        trace = propagate(g, RULES)
        oracle = cidx_by_walk(g, RULES)
        assert dict(trace.cidx_of) == oracle
        assert trace.depth == max(oracle[o] for o in g.outputs)

    def test_nondefault_rules_match_interpreter(self):
        rules = LevelRules(cc_mult_cost=2, cp_mult_cost=3, bn_cost=1,
                           polyact_levels=((2, 1), (4, 2), (8, 5)))
        for seed in range(10):
            g = random_dag(seed + 100, max_nodes=25)
            assert dict(propagate(g, rules).cidx_of) == cidx_by_walk(g, rules)


class TestMonotonicity:
    @given(st.integers(0, 2_000))
    @settings(max_examples=40, deadline=None)
    def test_higher_degree_never_lowers_any_index(self, seed):
        g = random_dag(seed, max_nodes=20)

        def bump(graph, to_degree):
            nodes = [Node(n.id, PolyAct(to_degree) if isinstance(n.op, PolyAct) else n.op,
                          n.inputs) for n in graph]
            return Graph(graph.name, nodes, graph.outputs)

        low = propagate(bump(g, 2), RULES).cidx_of
        high = propagate(bump(g, 8), RULES).cidx_of
        assert all(high[nid] >= low[nid] for nid in low)


class TestRules:
    def test_negative_costs_rejected(self):
        with pytest.raises(ValidationError):
            LevelRules(cp_mult_cost=-1)

    def test_polyact_override_must_be_monotone(self):
        with pytest.raises(ValidationError):
            LevelRules(polyact_levels=((2, 5), (4, 1)))

    def test_polyact_override_applies(self):
        rules = LevelRules(polyact_levels=((8, 2),))
        assert rules.polyact_depth(8) == 2
        assert rules.polyact_depth(4) == default_polyact_depth(4)

    def test_defaults(self):
        assert default_polyact_depth(2) == 2
        assert default_polyact_depth(4) == 3
        assert default_polyact_depth(8) == 4


class TestPlannedPropagation:
    def test_bootstrap_resets_and_rescale_jumps(self):
        nodes = [Node("in", Input())]
        end = conv_chain_nodes(nodes, "c", "in", 4)
        nodes += [
            Node("bs", Bootstrap(), (end,)),
            Node("rs", Rescale(3), ("bs",)),
            Node("out", Output(), ("rs",)),
        ]
        g = Graph("p", nodes, ["out"])
        trace = propagate_planned(g, RULES, reset_to=1)
        assert trace.cidx_of["bs"] == 1
        assert trace.cidx_of["rs"] == 3

    def test_rescale_below_incoming_rejected(self):
        nodes = [Node("in", Input())]
        end = conv_chain_nodes(nodes, "c", "in", 4)
        nodes += [Node("rs", Rescale(2), (end,)), Node("out", Output(), ("rs",))]
        g = Graph("p", nodes, ["out"])
        with pytest.raises(ValidationError):
            propagate_planned(g, RULES)


def test_trace_json_export():
    g = mul_chain(3)
    text = propagate(g, RULES).as_json()
    import json
    doc = json.loads(text)
    assert doc["m2"] == 3 and doc["in"] == 0
