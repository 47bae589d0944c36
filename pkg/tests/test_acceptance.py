"""Acceptance suite: one test per exit criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS lines.
"""

import time

import numpy as np
import pytest

from heplan.activations import default_coefficients
from heplan.archs import build, preset
from heplan.backend import (
    NoiseConfig,
    cleartext_reference,
    conv2d_same,
    dirac_project,
    execute,
    random_inputs,
    random_weights,
)
from heplan.costs import CostWeights, calibrate, fit_minimax, plan_features, price
from heplan.graph import Add, Mul, emit_graph, parse_graph, propagate_tiles
from heplan.levels import LevelRules, propagate
from heplan.planner import PlannerConfig, plan, plan_exhaustive, validate_plan

from .corpus import fanout_fixture, mul_chain, random_dag
from .oracles import cidx_by_walk

RULES = LevelRules()

# Published reference points the ratio bands are anchored to.
CPU_HOURS = {(2, "ref"): 12.33, (2, "ssd"): 10.40,
             (4, "ref"): 11.36, (4, "ssd"): 8.69,
             (8, "ref"): 18.06, (8, "ssd"): 13.38}


def _ok(name: str):
    print(f"PASS: {name}")


@pytest.fixture(scope="module")
def level_corpus():
    return [random_dag(seed, max_nodes=30) for seed in range(500)]


@pytest.fixture(scope="module")
def planner_corpus():
    return [random_dag(10_000 + seed, max_nodes=16, max_level_nodes=12)
            for seed in range(200)]


@pytest.fixture(scope="module")
def resnet_plans():
    plans = {}
    elapsed = {}
    for degree in (2, 4, 8):
        for variant in ("ref", "ssd", "skipless"):
            g = build(preset(f"resnet50-{variant}", degree))
            start = time.perf_counter()
            plans[(degree, variant)] = plan(g, RULES, PlannerConfig())
            elapsed[(degree, variant)] = time.perf_counter() - start
    return plans, elapsed


def test_level_analysis_oracle_equivalence(level_corpus):
    """500 random DAGs: propagate matches the brute-force interpreter exactly."""
    start = time.perf_counter()
    checked = 0
    for g in level_corpus:
        trace = propagate(g, RULES)
        oracle = cidx_by_walk(g, RULES)
        assert dict(trace.cidx_of) == oracle, g.name
        checked += len(oracle)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    _ok(f"level-analysis oracle equivalence (500 graphs, {checked} nodes, "
        f"{elapsed:.2f}s)")


def test_observation_suite(level_corpus):
    """Every add resolves to one operand's index; planning never raises an
    add beyond its higher operand."""
    adds_seen = 0
    for g in level_corpus[:200]:
        static = propagate(g, RULES)
        p = plan(g, RULES, PlannerConfig(max_level=8))
        recorded = dict(static.mismatches)
        for node in g:
            if not isinstance(node.op, Add):
                continue
            adds_seen += 1
            left, right = (static.cidx_of[i] for i in node.inputs)
            assert static.cidx_of[node.id] in (left, right)
            planned_add = p.trace.cidx_of[node.id]
            assert planned_add <= max(left, right)
            if node.id in recorded:
                delta = recorded[node.id]
                assert delta == abs(left - right) >= 1
                assert planned_add - min(left, right) <= delta
    assert adds_seen > 100
    _ok(f"observation suite ({adds_seen} adds, zero violations)")


def test_planner_safety_and_optimality(planner_corpus):
    """Plans re-validate; greedy stays within one bootstrap of minimal in
    at least 95% of small graphs; the 10-multiply chain needs exactly 2."""
    cfg = PlannerConfig(max_level=5)
    within_one = 0
    for g in planner_corpus:
        greedy = plan(g, RULES, cfg)
        assert validate_plan(greedy) == []
        assert max(greedy.trace.cidx_of.values()) <= cfg.max_level
        tiles = propagate_tiles(greedy.planned, cfg.default_tile)
        for node in greedy.planned:
            if isinstance(node.op, (Add, Mul)):
                a, b = node.inputs
                assert greedy.trace.cidx_of[a] == greedy.trace.cidx_of[b]
                assert tiles[a] == tiles[b]
        exact = plan_exhaustive(g, RULES, cfg)
        assert exact.bootstrap_count <= greedy.bootstrap_count
        within_one += greedy.bootstrap_count <= exact.bootstrap_count + 1
    fraction = within_one / len(planner_corpus)
    assert fraction >= 0.95, f"only {fraction:.1%} within one of minimal"

    chain_cfg = PlannerConfig(max_level=4)
    assert plan(mul_chain(10), RULES, chain_cfg).bootstrap_count == 2
    assert plan_exhaustive(mul_chain(10), RULES, chain_cfg).bootstrap_count == 2
    _ok(f"planner safety + optimality band ({fraction:.1%} within one of "
        f"minimal; chain-10 at budget 4 -> 2 bootstraps)")


def test_fanout_economy():
    """A hot value feeding three cheaper adds: one shared bootstrap when the
    fan-out rule is armed, three rescales when it is off."""
    g = fanout_fixture()
    armed = plan(g, RULES, PlannerConfig(fanout_threshold=2))
    assert armed.bootstrap_count == 1
    off = plan(g, RULES, PlannerConfig(fanout_threshold=float("inf")))
    assert off.bootstrap_count == 0
    assert off.rescale_count == 3
    _ok("fan-out economy (1 shared bootstrap armed; 3 rescales disarmed)")


def test_architecture_ordering(resnet_plans):
    """Full-scale variants under default rules: bootstrap ratio bands and
    orderings; each analysis under 5 s."""
    plans, elapsed = resnet_plans
    for key, seconds in elapsed.items():
        assert seconds < 5.0, f"{key} took {seconds:.2f}s"
    for degree in (2, 4, 8):
        ref = plans[(degree, "ref")].bootstrap_count
        ssd = plans[(degree, "ssd")].bootstrap_count
        skl = plans[(degree, "skipless")].bootstrap_count
        assert skl <= ssd <= ref, (degree, skl, ssd, ref)
        if degree in (4, 8):
            ratio = ref / ssd
            assert 1.2 <= ratio <= 1.8, (degree, ratio)
    r8 = plans[(8, "ref")].bootstrap_count / plans[(8, "ssd")].bootstrap_count
    r4 = plans[(4, "ref")].bootstrap_count / plans[(4, "ssd")].bootstrap_count
    _ok(f"architecture ordering (deg-8 ratio {r8:.2f}, deg-4 ratio {r4:.2f}, "
        f"orderings hold at 2/4/8, all analyses < 5s)")


def test_cost_calibration(resnet_plans):
    """Synthesize-then-fit recovers weights to 1e-6; the six published CPU
    cells fit within 15% each; fitted degree-8 CPU ratio in [1.2, 1.45]."""
    truth = CostWeights(9.0, 0.8, 0.6, 0.4, 0.3, 0.2, 0.5)
    observations = []
    for seed in range(24):
        p = plan(random_dag(seed, max_nodes=22, tiles=True), RULES,
                 PlannerConfig(max_level=5))
        observations.append((p, price(p, truth).total_cpu_seconds))
    recovered = calibrate(observations).weights
    for field in ("w_bootstrap", "w_rescale", "w_transform", "w_cc_mult",
                  "w_cp_mult", "w_add", "w_polyact_per_level"):
        got, want = getattr(recovered, field), getattr(truth, field)
        assert abs(got - want) <= 1e-6 * want, field

    plans, _ = resnet_plans
    cells = [(plans[key], hours * 3600.0) for key, hours in sorted(CPU_HOURS.items())]
    fit = fit_minimax(cells)
    assert max(fit.relative_errors) <= 0.15, fit.relative_errors
    ref8 = price(plans[(8, "ref")], fit.weights).total_cpu_seconds
    ssd8 = price(plans[(8, "ssd")], fit.weights).total_cpu_seconds
    ratio = ref8 / ssd8
    assert 1.2 <= ratio <= 1.45, ratio
    _ok(f"cost calibration (round-trip exact; worst cell error "
        f"{max(fit.relative_errors):.1%}; deg-8 cpu ratio {ratio:.3f})")


def test_mock_backend_transparency():
    """Toy presets run encrypted-mock vs cleartext within 1e-4; runtime
    traces equal static; the two dirac forms agree over 1000 trials."""
    for name in ("toy-ref", "toy-skipless", "toy-dirac", "toy-ssd"):
        g = build(preset(name, 8))
        p = plan(g, RULES, PlannerConfig())
        inputs = random_inputs(g, seed=21, scale=0.5)
        weights = random_weights(g, seed=22)
        result = execute(p, inputs, weights, NoiseConfig())
        clear = cleartext_reference(p.planned, inputs, weights)
        for out in result.outputs:
            assert np.max(np.abs(result.outputs[out] - clear[out])) <= 1e-4
        assert dict(result.runtime_trace.cidx_of) == dict(p.trace.cidx_of)

    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        in_c = int(rng.integers(1, 5))
        out_c = int(rng.integers(1, 5))
        x = rng.normal(size=(in_c, 4, 4))
        w = rng.normal(size=(out_c, in_c, 3, 3)) / 3.0
        a = rng.normal(size=out_c)
        explicit = conv2d_same(x, w, 1) + a[:, None, None] * dirac_project(x, out_c)
        ident = np.zeros_like(w)
        for o in range(out_c):
            ident[o, o % in_c, 1, 1] = a[o]
        folded = conv2d_same(x, ident + w, 1)
        worst = max(worst, float(np.max(np.abs(explicit - folded))))
    assert worst <= 1e-6
    _ok(f"mock-backend transparency (4 presets exact to 1e-4; dirac forms "
        f"agree to {worst:.2e} over 1000 trials)")


def test_parser_round_trip(level_corpus, resnet_plans):
    """parse-emit identity across the corpus and full-scale graphs; second
    emit byte-identical."""
    plans, _ = resnet_plans
    graphs = list(level_corpus[:100])
    graphs += [random_dag(seed, max_nodes=30, tiles=True) for seed in range(50)]
    graphs += [build(preset(f"resnet50-{v}", 8)) for v in ("ref", "ssd", "skipless")]
    graphs += [plans[(8, "ref")].planned, plans[(8, "ssd")].planned]
    biggest = 0
    for g in graphs:
        text = emit_graph(g)
        reparsed = parse_graph(text)
        assert reparsed == g, g.name
        assert emit_graph(reparsed) == text, g.name
        biggest = max(biggest, len(g))
    _ok(f"parser round-trip ({len(graphs)} graphs, largest {biggest} nodes, "
        f"emit idempotent)")
