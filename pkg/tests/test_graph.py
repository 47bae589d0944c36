"""Graph IR: validation, topological order, parse/emit round-trips."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heplan.errors import CycleError, GraphSyntaxError, ShapeError, ValidationError
from heplan.graph import (
    Add,
    CipherMeta,
    Conv,
    DEFAULT_TILE,
    Dense,
    Graph,
    Input,
    Node,
    Output,
    PolyAct,
    TileShape,
    emit_graph,
    infer_shapes,
    parse_graph,
    propagate_tiles,
    topo_order,
)

from .corpus import random_dag
from .oracles import is_topological

MINIMAL_DOC = """
{
  "name": "minimal",
  "nodes": [
    {"id": "in", "op": "Input", "attrs": {}, "inputs": []},
    {"id": "out", "op": "Output", "attrs": {}, "inputs": ["in"]}
  ],
  "outputs": ["out"]
}
"""


class TestTileShape:
    def test_components_must_be_positive(self):
        with pytest.raises(ValidationError):
            TileShape(0, 1, 1)
        with pytest.raises(ValidationError):
            TileShape(1, -2, 1)

    def test_compatibility_is_equality(self):
        assert TileShape(1, 2, 4) == TileShape(1, 2, 4)
        assert TileShape(1, 2, 4) != TileShape(1, 4, 2)

    def test_round_trip_list(self):
        t = TileShape(2, 8, 16)
        assert TileShape.from_list(t.as_list()) == t


class TestCipherMeta:
    def test_rejects_negative_cidx(self):
        with pytest.raises(ValidationError):
            CipherMeta(-1, DEFAULT_TILE, (3,))

    def test_rejects_empty_dims(self):
        with pytest.raises(ValidationError):
            CipherMeta(0, DEFAULT_TILE, ())


class TestNode:
    def test_arity_is_enforced(self):
        with pytest.raises(ValidationError):
            Node("a", Add(), ("x",))
        with pytest.raises(ValidationError):
            Node("a", Input(), ("x",))

    def test_params_meta_ignored_by_equality(self):
        a = Node("c", Conv(4, 3), ("x",), {"weight": (4, 1, 3, 3)})
        b = Node("c", Conv(4, 3), ("x",), None)
        assert a == b


class TestGraphValidation:
    def test_minimal_graph(self):
        g = parse_graph(MINIMAL_DOC)
        assert len(g) == 2
        assert g.outputs == ("out",)

    def test_cycle_is_rejected(self):
        doc = {
            "name": "cyc",
            "nodes": [
                {"id": "a", "op": "BatchNorm", "attrs": {}, "inputs": ["b"]},
                {"id": "b", "op": "BatchNorm", "attrs": {}, "inputs": ["a"]},
            ],
            "outputs": ["b"],
        }
        with pytest.raises(CycleError) as exc:
            parse_graph(json.dumps(doc))
        assert "cycle" in str(exc.value)
        assert exc.value.node_id in ("a", "b")

    def test_dangling_input_names_node(self):
        with pytest.raises(ValidationError) as exc:
            Graph("g", [Node("x", Input()), Node("y", Output(), ("ghost",))], ["y"])
        assert exc.value.node_id == "y"

    def test_duplicate_id(self):
        with pytest.raises(ValidationError):
            Graph("g", [Node("x", Input()), Node("x", Input())], ["x"])

    def test_dead_nodes_flagged_not_rejected(self):
        g = Graph("g", [
            Node("in", Input()),
            Node("dead", Conv(1, 1), ("in",)),
            Node("out", Output(), ("in",)),
        ], ["out"])
        assert g.dead == {"dead"}


class TestTopoOrder:
    def test_chain(self):
        g = Graph("g", [
            Node("a", Input()),
            Node("b", Conv(1, 1), ("a",)),
            Node("c", Output(), ("b",)),
        ], ["c"])
        assert topo_order(g) == ("a", "b", "c")

    def test_diamond_lexicographic_tie_break(self):
        g = Graph("g", [
            Node("a", Input()),
            Node("c", Conv(1, 1), ("a",)),
            Node("b", Conv(2, 1), ("a",)),
            Node("d", Add(), ("b", "c")),
        ], ["d"])
        assert topo_order(g) == ("a", "b", "c", "d")

    @pytest.mark.parametrize("seed", range(10))
    def test_random_dag_against_predecessor_scan(self, seed):
        g = random_dag(seed, max_nodes=50)
        assert is_topological(g, topo_order(g))


class TestParseErrors:
    def test_bad_json_carries_position(self):
        with pytest.raises(GraphSyntaxError) as exc:
            parse_graph("{\n  broken\n}")
        assert exc.value.line == 2

    def test_unknown_op(self):
        doc = {"name": "g", "nodes": [{"id": "n", "op": "Softmax", "inputs": []}],
               "outputs": ["n"]}
        with pytest.raises(GraphSyntaxError) as exc:
            parse_graph(json.dumps(doc))
        assert "Softmax" in str(exc.value) and exc.value.node_id == "n"

    def test_unknown_attr(self):
        doc = {"name": "g", "nodes": [
            {"id": "n", "op": "Conv",
             "attrs": {"out_channels": 1, "kernel": 1, "padding": 3}, "inputs": ["n"]}],
            "outputs": ["n"]}
        with pytest.raises(GraphSyntaxError) as exc:
            parse_graph(json.dumps(doc))
        assert "padding" in str(exc.value)

    def test_missing_required_attr(self):
        doc = {"name": "g", "nodes": [
            {"id": "in", "op": "Input", "inputs": []},
            {"id": "n", "op": "PolyAct", "attrs": {}, "inputs": ["in"]}],
            "outputs": ["n"]}
        with pytest.raises(GraphSyntaxError):
            parse_graph(json.dumps(doc))

    def test_arity_mismatch_is_validation_error(self):
        doc = {"name": "g", "nodes": [
            {"id": "in", "op": "Input", "inputs": []},
            {"id": "n", "op": "Add", "inputs": ["in"]}],
            "outputs": ["n"]}
        with pytest.raises(ValidationError):
            parse_graph(json.dumps(doc))


class TestRoundTrip:
    def test_minimal_canonical_document(self):
        g = parse_graph(MINIMAL_DOC)
        text = emit_graph(g)
        doc = json.loads(text)
        assert [n["id"] for n in doc["nodes"]] == ["in", "out"]
        assert parse_graph(text) == g

    @pytest.mark.parametrize("seed", range(20))
    def test_parse_emit_identity_random(self, seed):
        g = random_dag(seed, max_nodes=30, tiles=(seed % 2 == 0))
        assert parse_graph(emit_graph(g)) == g

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_parse_emit_identity_property(self, seed):
        g = random_dag(seed, max_nodes=25, tiles=True)
        assert parse_graph(emit_graph(g)) == g

    def test_emit_idempotent(self):
        g = random_dag(7, max_nodes=40)
        once = emit_graph(g)
        twice = emit_graph(parse_graph(once))
        assert once == twice

    @pytest.mark.parametrize("seed", range(8))
    def test_emit_stable_under_insertion_order(self, seed):
        g = random_dag(seed, max_nodes=25)
        nodes = list(g.nodes.values())
        random.Random(seed + 999).shuffle(nodes)
        shuffled = Graph(g.name, nodes, g.outputs)
        assert emit_graph(shuffled) == emit_graph(g)

    def test_planned_ops_round_trip(self):
        doc = {
            "name": "planned",
            "nodes": [
                {"id": "in", "op": "Input",
                 "attrs": {"tile": [1, 2, 4], "dims": [1, 4, 4]}, "inputs": []},
                {"id": "bs", "op": "Bootstrap", "attrs": {}, "inputs": ["in"]},
                {"id": "rs", "op": "Rescale", "attrs": {"target_cidx": 3},
                 "inputs": ["bs"]},
                {"id": "tt", "op": "TileTransform", "attrs": {"target_tile": [1, 1, 1]},
                 "inputs": ["rs"]},
                {"id": "out", "op": "Output", "attrs": {}, "inputs": ["tt"]},
            ],
            "outputs": ["out"],
        }
        g = parse_graph(json.dumps(doc))
        assert parse_graph(emit_graph(g)) == g


class TestShapes:
    def test_conv_pool_dense_shapes(self):
        g = Graph("g", [
            Node("in", Input(dims=(3, 32, 32))),
            Node("c", Conv(8, 7, 2), ("in",)),
            Node("p", __import__("heplan.graph", fromlist=["AvgPool"]).AvgPool(2, 2), ("c",)),
            Node("d", Dense(10), ("p",)),
            Node("out", Output(), ("d",)),
        ], ["out"])
        shapes = infer_shapes(g)
        assert shapes["c"] == (8, 16, 16)
        assert shapes["p"] == (8, 8, 8)
        assert shapes["d"] == (10,)

    def test_missing_input_dims(self):
        g = Graph("g", [Node("in", Input()), Node("out", Output(), ("in",))], ["out"])
        with pytest.raises(ShapeError):
            infer_shapes(g)
        assert infer_shapes(g, {"in": (3, 8, 8)})["out"] == (3, 8, 8)

    def test_join_shape_disagreement(self):
        g = Graph("g", [
            Node("a", Input(dims=(1, 4, 4))),
            Node("b", Input(dims=(1, 2, 2))),
            Node("j", Add(), ("a", "b")),
            Node("out", Output(), ("j",)),
        ], ["out"])
        with pytest.raises(ShapeError):
            infer_shapes(g)


class TestTiles:
    def test_inheritance_and_default(self):
        t = TileShape(1, 4, 16)
        g = Graph("g", [
            Node("a", Input(tile=t)),
            Node("b", Input()),
            Node("c", Conv(1, 1), ("a",)),
            Node("o1", Output(), ("c",)),
            Node("o2", Output(), ("b",)),
        ], ["o1", "o2"])
        tiles = propagate_tiles(g)
        assert tiles["c"] == t
        assert tiles["b"] == DEFAULT_TILE
