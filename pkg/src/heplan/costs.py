"""Linear cost model over planned graphs.

A plan is priced as ``sum(count(op class) * weight(op class))`` in seconds
of accumulated CPU time. Polynomial activations are charged per consumed
level, so deeper activations cost proportionally more. Weights can be
fitted to observed runtimes with :func:`calibrate` (non-negative least
squares over the plans' op-count features).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import nnls

from . import graph as g_
from .errors import InfeasibleNonNegativityError, RankDeficientError, ValidationError
from .planner import Plan

__all__ = [
    "CostWeights",
    "CostReport",
    "ComparisonRow",
    "CalibrationResult",
    "DEFAULT_WEIGHTS",
    "FALLBACK_WEIGHTS",
    "plan_features",
    "price",
    "calibrate",
    "fit_minimax",
    "compare",
    "comparison_csv",
]

FEATURE_NAMES = ("bootstrap", "rescale", "transform", "cc_mult", "cp_mult",
                 "add", "polyact_levels")

_WEIGHT_OF_FEATURE = {
    "bootstrap": "w_bootstrap",
    "rescale": "w_rescale",
    "transform": "w_transform",
    "cc_mult": "w_cc_mult",
    "cp_mult": "w_cp_mult",
    "add": "w_add",
    "polyact_levels": "w_polyact_per_level",
}


@dataclass(frozen=True)
class CostWeights:
    """Seconds of accumulated CPU time per op instance (per level for
    polynomial activations)."""

    w_bootstrap: float
    w_rescale: float
    w_transform: float
    w_cc_mult: float
    w_cp_mult: float
    w_add: float
    w_polyact_per_level: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{f.name} must be a non-negative real, got {v!r}")
        if not self.w_bootstrap > self.w_rescale:
            raise ValidationError(
                f"w_bootstrap ({self.w_bootstrap}) must exceed w_rescale "
                f"({self.w_rescale}); bootstrapping dominates per-op cost")

    def of_feature(self, feature: str) -> float:
        return getattr(self, _WEIGHT_OF_FEATURE[feature])


# Fitted against the published per-architecture CPU-hour totals at the three
# activation degrees (see scripts/calibrate_default_weights.py); regenerate
# after any planner change. w_cc_mult and w_transform never occur in the
# calibration family, so they borrow the cp-mult and rescale scales.
DEFAULT_WEIGHTS = CostWeights(
    w_bootstrap=1368.4196503817243,
    w_rescale=724.7171218964486,
    w_transform=724.7171218964486,
    w_cc_mult=286.40192319423767,
    w_cp_mult=286.40192319423767,
    w_add=0.0,
    w_polyact_per_level=37.66485760091425,
)

# Deliberately arbitrary round numbers for uncalibrated runs.
FALLBACK_WEIGHTS = CostWeights(
    w_bootstrap=0.025,
    w_rescale=0.001,
    w_transform=0.001,
    w_cc_mult=0.001,
    w_cp_mult=0.0005,
    w_add=0.0001,
    w_polyact_per_level=0.001,
)


@dataclass(frozen=True)
class CostReport:
    """Priced plan: total seconds plus a per-op-class breakdown."""

    variant_name: str
    total_cpu_seconds: float
    breakdown: Mapping[str, tuple[int, float]]  # class -> (count, subtotal)

    def count(self, feature: str) -> int:
        return self.breakdown.get(feature, (0, 0.0))[0]

    def as_json(self) -> str:
        doc = {
            "variant": self.variant_name,
            "total_cpu_seconds": self.total_cpu_seconds,
            "breakdown": {k: {"count": c, "subtotal": s}
                          for k, (c, s) in self.breakdown.items()},
        }
        return json.dumps(doc, indent=2) + "\n"

    def as_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["variant", "op_class", "count", "subtotal_seconds"])
        for k, (c, s) in self.breakdown.items():
            writer.writerow([self.variant_name, k, c, f"{s:.9g}"])
        writer.writerow([self.variant_name, "total", "", f"{self.total_cpu_seconds:.9g}"])
        return buf.getvalue()


def plan_features(p: Plan) -> dict[str, int]:
    """Op-count feature vector of a plan.

    ``polyact_levels`` sums the levels each activation actually consumed
    (taken from the plan's trace); everything else is a node census.
    """
    feats = dict.fromkeys(FEATURE_NAMES, 0)
    for node in p.planned:
        op = node.op
        if isinstance(op, g_.Bootstrap):
            feats["bootstrap"] += 1
        elif isinstance(op, g_.Rescale):
            feats["rescale"] += 1
        elif isinstance(op, g_.TileTransform):
            feats["transform"] += 1
        elif isinstance(op, g_.Mul):
            feats["cc_mult"] += 1
        elif isinstance(op, (g_.Conv, g_.Dense, g_.AvgPool)):
            feats["cp_mult"] += 1
        elif isinstance(op, g_.Add):
            feats["add"] += 1
        elif isinstance(op, g_.PolyAct):
            feats["polyact_levels"] += (p.trace.cidx_of[node.id]
                                        - p.trace.cidx_of[node.inputs[0]])
    return feats


def price(p: Plan, w: CostWeights = DEFAULT_WEIGHTS) -> CostReport:
    """Price a plan; total equals the sum of the breakdown subtotals."""
    feats = plan_features(p)
    breakdown: dict[str, tuple[int, float]] = {}
    polyact_nodes = sum(1 for n in p.planned if isinstance(n.op, g_.PolyAct))
    for name in FEATURE_NAMES:
        count = polyact_nodes if name == "polyact_levels" else feats[name]
        subtotal = feats[name] * w.of_feature(name)
        breakdown[name] = (count, subtotal)
    total = sum(s for _, s in breakdown.values())
    return CostReport(p.planned.name, total, breakdown)


@dataclass(frozen=True)
class CalibrationResult:
    weights: CostWeights
    residual: float
    relative_errors: tuple[float, ...]


def calibrate(observations: Sequence[tuple[Plan, float]],
              free: Sequence[str] | None = None,
              fixed: Mapping[str, float] | None = None,
              rtol: float | None = None) -> CalibrationResult:
    """Fit non-negative weights to observed CPU seconds.

    ``free`` names the weight features being fitted (default: all seven);
    ``fixed`` pins the rest to given values (default 0). With ``rtol`` set,
    the fit must reproduce every observation within that relative error or
    InfeasibleNonNegativityError is raised when the non-negativity
    constraint is what blocks it.
    """
    free = tuple(free) if free is not None else FEATURE_NAMES
    fixed = dict(fixed or {})
    unknown = [f for f in list(free) + list(fixed) if f not in FEATURE_NAMES]
    if unknown:
        raise ValidationError(f"unknown cost features {unknown!r}")
    if len(observations) < len(free):
        raise RankDeficientError(
            f"{len(observations)} observation(s) cannot determine {len(free)} weights")

    rows = []
    y = []
    for p, seconds in observations:
        feats = plan_features(p)
        base = sum(feats[name] * value for name, value in fixed.items())
        rows.append([float(feats[name]) for name in free])
        y.append(float(seconds) - base)
    a = np.asarray(rows)
    b = np.asarray(y)
    if np.linalg.matrix_rank(a) < len(free):
        raise RankDeficientError(
            "op-count matrix is rank deficient for the requested free weights; "
            "drop collinear features or add observations")

    x, rnorm = nnls(a, b)
    fitted = a @ x
    rel = tuple(abs(f - obs) / abs(obs) if obs else abs(f - obs)
                for f, obs in zip(fitted, b))
    if rtol is not None and any(r > rtol for r in rel):
        unconstrained, *_ = np.linalg.lstsq(a, b, rcond=None)
        un_rel = np.abs(a @ unconstrained - b) / np.where(b == 0, 1.0, np.abs(b))
        if (unconstrained < 0).any() and (un_rel <= rtol).all():
            raise InfeasibleNonNegativityError(
                f"fit within rtol={rtol} requires negative weights "
                f"(unconstrained solution: {unconstrained.tolist()})")
        raise InfeasibleNonNegativityError(
            f"no non-negative fit reaches rtol={rtol}; worst relative error "
            f"{max(rel):.4g}")

    values = dict.fromkeys(FEATURE_NAMES, 0.0)
    values.update(fixed)
    values.update({name: float(v) for name, v in zip(free, x)})
    weights = CostWeights(**{_WEIGHT_OF_FEATURE[k]: v for k, v in values.items()})
    return CalibrationResult(weights, float(rnorm), rel)


def fit_minimax(observations: Sequence[tuple[Plan, float]],
                fill: Mapping[str, float] | None = None) -> CalibrationResult:
    """Fit non-negative weights minimizing the worst relative error.

    This is the fit behind the shipped default weights: when the target is
    a per-observation relative band, the Chebyshev criterion is the right
    one, whereas :func:`calibrate` keeps the least-squares contract.
    Features absent from every observation get the ``fill`` values
    (default 0).
    """
    from scipy.optimize import linprog

    feats = [plan_features(p) for p, _ in observations]
    names = [f for f in FEATURE_NAMES if any(ft[f] for ft in feats)]
    if not names:
        raise RankDeficientError("no nonzero features in the observations")
    a = np.array([[ft[f] for f in names] for ft in feats], dtype=float)
    y = np.array([float(seconds) for _, seconds in observations])
    if np.any(y <= 0):
        raise ValidationError("observed seconds must be positive for a relative fit")
    n, m = a.shape
    cost = np.zeros(m + 1)
    cost[-1] = 1.0
    rows, rhs = [], []
    for i in range(n):
        rows.append(np.concatenate([a[i], [-y[i]]]))
        rhs.append(y[i])
        rows.append(np.concatenate([-a[i], [-y[i]]]))
        rhs.append(-y[i])
    res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=[(0, None)] * (m + 1), method="highs")
    if not res.success:
        raise InfeasibleNonNegativityError(f"minimax fit failed: {res.message}")
    x, worst = res.x[:-1], float(res.x[-1])
    fitted = a @ x
    rel = tuple(abs(f - obs) / obs for f, obs in zip(fitted, y))
    values = dict.fromkeys(FEATURE_NAMES, 0.0)
    values.update(fill or {})
    values.update({name: float(v) for name, v in zip(names, x)})
    weights = CostWeights(**{_WEIGHT_OF_FEATURE[k]: v for k, v in values.items()})
    return CalibrationResult(weights, worst, rel)


@dataclass(frozen=True)
class ComparisonRow:
    variant: str
    bootstraps: int
    rescales: int
    transforms: int
    cpu_seconds: float
    ratio_vs_ref: float
    bootstrap_ratio_vs_ref: float


def _ratio(ref: float, val: float) -> float:
    if ref == val == 0:
        return 1.0
    if val == 0:
        return math.inf
    return ref / val


def compare(reports: Sequence[CostReport]) -> list[ComparisonRow]:
    """Ratios of every report against the first one (the reference)."""
    if len(reports) < 2:
        raise ValidationError("compare needs at least two reports")
    ref = reports[0]
    rows = []
    for rep in reports:
        rows.append(ComparisonRow(
            variant=rep.variant_name,
            bootstraps=rep.count("bootstrap"),
            rescales=rep.count("rescale"),
            transforms=rep.count("transform"),
            cpu_seconds=rep.total_cpu_seconds,
            ratio_vs_ref=_ratio(ref.total_cpu_seconds, rep.total_cpu_seconds),
            bootstrap_ratio_vs_ref=_ratio(ref.count("bootstrap"), rep.count("bootstrap")),
        ))
    return rows


def comparison_csv(rows: Iterable[ComparisonRow],
                   degrees: Sequence[int] | None = None) -> str:
    """Render comparison rows as CSV; ``degrees`` adds a degree column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["variant", "bootstraps", "rescales", "transforms",
              "cpu_seconds", "ratio_vs_ref", "bootstrap_ratio_vs_ref"]
    if degrees is not None:
        header.insert(1, "degree")
    writer.writerow(header)
    for i, row in enumerate(rows):
        record = [row.variant, row.bootstraps, row.rescales, row.transforms,
                  f"{row.cpu_seconds:.9g}", f"{row.ratio_vs_ref:.6g}",
                  f"{row.bootstrap_ratio_vs_ref:.6g}"]
        if degrees is not None:
            record.insert(1, degrees[i])
        writer.writerow(record)
    return buf.getvalue()
