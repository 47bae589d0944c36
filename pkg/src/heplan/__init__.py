"""heplan: chain-index analysis, bootstrap planning, and cost estimation
for CNN inference under leveled homomorphic encryption."""

from .archs import ArchConfig, Variant, build, build_raw, make_he_friendly, preset, toy_preset
from .backend import NoiseConfig, cleartext_reference, execute, noise_bound
from .costs import (
    CostReport,
    CostWeights,
    DEFAULT_WEIGHTS,
    FALLBACK_WEIGHTS,
    calibrate,
    compare,
    price,
)
from .graph import (
    CipherMeta,
    DEFAULT_TILE,
    Graph,
    Node,
    TileShape,
    emit_graph,
    parse_graph,
    topo_order,
)
from .levels import LevelRules, LevelTrace, multiplicative_depth, propagate, propagate_planned
from .planner import Plan, PlannerConfig, Strategy, plan, plan_exhaustive, validate_plan

__version__ = "0.1.0"
