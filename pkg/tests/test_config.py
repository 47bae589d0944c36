"""key=value config parsing and typed loaders."""

import math

import pytest

from heplan.config import (
    activation_coeffs_path,
    load_cost_weights,
    load_level_rules,
    load_noise_config,
    load_planner_config,
    parse_config,
)
from heplan.costs import DEFAULT_WEIGHTS
from heplan.errors import ConfigError
from heplan.planner import Strategy

SAMPLE = """
# level rules
rules.cp_mult_cost = 1
rules.polyact_depth.8 = 5   # trailing comment

planner.max_level = 9
planner.bootstrap_reset_to = 2
planner.fanout_threshold = inf
planner.strategy = exhaustive-tiny

cost.w_bootstrap = 12.5
cost.w_rescale = 0.5

noise.epsilon = 1e-3
noise.seed = 7
"""


def test_parse_and_load_all_sections():
    cfg = parse_config(SAMPLE)
    rules = load_level_rules(cfg)
    assert rules.cp_mult_cost == 1
    assert rules.polyact_depth(8) == 5
    assert rules.polyact_depth(4) == 3  # untouched default

    pcfg = load_planner_config(cfg)
    assert pcfg.max_level == 9
    assert pcfg.bootstrap_reset_to == 2
    assert pcfg.fanout_threshold == math.inf
    assert pcfg.strategy is Strategy.EXHAUSTIVE_TINY

    weights = load_cost_weights(cfg)
    assert weights.w_bootstrap == 12.5
    assert weights.w_rescale == 0.5
    assert weights.w_cp_mult == DEFAULT_WEIGHTS.w_cp_mult

    noise = load_noise_config(cfg)
    assert noise.epsilon == pytest.approx(1e-3)
    assert noise.seed == 7


def test_defaults_from_empty_config():
    cfg = parse_config("")
    assert load_planner_config(cfg).max_level == 25
    assert load_cost_weights(cfg) == DEFAULT_WEIGHTS
    assert load_noise_config(cfg).epsilon == 0.0


def test_max_level_override():
    cfg = parse_config("planner.max_level = 9")
    assert load_planner_config(cfg, max_level_override=30).max_level == 30


def test_unknown_namespace():
    with pytest.raises(ConfigError):
        parse_config("network.depth = 5")


def test_unknown_key_in_namespace():
    with pytest.raises(ConfigError):
        load_level_rules(parse_config("rules.latency = 5"))
    with pytest.raises(ConfigError):
        load_planner_config(parse_config("planner.max_depth = 5"))
    with pytest.raises(ConfigError):
        load_cost_weights(parse_config("cost.w_mystery = 5"))


def test_malformed_lines():
    with pytest.raises(ConfigError):
        parse_config("rules.cp_mult_cost")
    with pytest.raises(ConfigError):
        parse_config("rules.cp_mult_cost =")
    with pytest.raises(ConfigError):
        parse_config("rules.cp_mult_cost = 1\nrules.cp_mult_cost = 2")


def test_bad_values():
    with pytest.raises(ConfigError):
        load_planner_config(parse_config("planner.max_level = many"))
    with pytest.raises(ConfigError):
        load_noise_config(parse_config("noise.epsilon = tiny"))
    with pytest.raises(ConfigError):
        load_planner_config(parse_config("planner.strategy = quantum"))


def test_activation_coeffs_path():
    assert activation_coeffs_path(parse_config("")) is None
    cfg = parse_config("backend.activation_coeffs = /tmp/alt.json")
    assert activation_coeffs_path(cfg) == "/tmp/alt.json"
    with pytest.raises(ConfigError):
        activation_coeffs_path(parse_config("backend.mystery = 1"))
