"""Command-line front end.

    heplan analyze  --preset toy-ref --degree 8 --out results/
    heplan compare  --preset resnet50-ref --preset resnet50-ssd --degree 2 --degree 4 --degree 8
    heplan validate --preset toy-ssd --seed 7
    heplan run      --graph model.hegraph --tensors weights.hetensors --inputs x.hetensors

Exit codes: 0 success, 1 analysis/validation failure (the first failed
invariant is named on stderr), 2 configuration or I/O problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import archs, backend, config as config_mod, costs
from .activations import default_coefficients, load_coefficients
from .errors import ConfigError, HeplanError
from .graph import Graph, PolyAct, Node, emit_graph, parse_graph
from .levels import LevelRules, propagate
from .planner import Plan, PlannerConfig, plan, validate_plan
from .tensorio import load_tensors, save_tensors

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


@dataclass
class RunManifest:
    """Resolved run parameters; every referenced path is checked upfront."""

    targets: list[tuple[str, str]]  # (kind 'preset'|'graph', identifier)
    degrees: list[int]
    config_path: Path | None
    weights_config_path: Path | None
    tensors_path: Path | None
    inputs_path: Path | None
    out_dir: Path | None
    max_level: int | None
    fmt: str
    seed: int
    raw_config: dict[str, str] = field(default_factory=dict)

    def validate(self):
        for kind, ident in self.targets:
            if kind == "preset" and ident not in archs.PRESETS:
                raise ConfigError(
                    f"unknown preset {ident!r}; available: "
                    f"{', '.join(sorted(archs.PRESETS))}")
            if kind == "graph" and not Path(ident).is_file():
                raise ConfigError(f"graph file not found: {ident}")
        for path in (self.config_path, self.weights_config_path,
                     self.tensors_path, self.inputs_path):
            if path is not None and not path.is_file():
                raise ConfigError(f"file not found: {path}")
        if self.config_path is not None:
            self.raw_config = config_mod.read_config(self.config_path)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)


def _manifest(args: argparse.Namespace) -> RunManifest:
    targets: list[tuple[str, str]] = []
    for name in getattr(args, "preset", None) or []:
        targets.append(("preset", name))
    for path in getattr(args, "graph", None) or []:
        targets.append(("graph", path))
    m = RunManifest(
        targets=targets,
        degrees=list(getattr(args, "degree", None) or []),
        config_path=Path(args.config) if getattr(args, "config", None) else None,
        weights_config_path=(Path(args.weights_config)
                             if getattr(args, "weights_config", None) else None),
        tensors_path=Path(args.tensors) if getattr(args, "tensors", None) else None,
        inputs_path=Path(args.inputs) if getattr(args, "inputs", None) else None,
        out_dir=Path(args.out) if getattr(args, "out", None) else None,
        max_level=getattr(args, "max_level", None),
        fmt=getattr(args, "format", "table"),
        seed=getattr(args, "seed", 0) or 0,
    )
    m.validate()
    return m


def _load_target(m: RunManifest, kind: str, ident: str, degree: int | None) -> Graph:
    """Build a preset or load a file, ending with an HE-friendly graph."""
    if kind == "preset":
        return archs.build(archs.preset(ident, degree))
    text = Path(ident).read_text(encoding="utf-8")
    g = parse_graph(text)
    raw = any(node.op.raw_only for node in g)
    if raw:
        g = archs.make_he_friendly(g, degree if degree is not None else 8)
    elif degree is not None:
        g = _re_degree(g, degree)
    return g


def _re_degree(g: Graph, degree: int) -> Graph:
    """Re-parameterize every polynomial activation to the given degree."""
    nodes = [Node(n.id, PolyAct(degree) if isinstance(n.op, PolyAct) else n.op,
                  n.inputs, n.params_meta) for n in g]
    return Graph(g.name, nodes, g.outputs)


def _planning_inputs(m: RunManifest) -> tuple[LevelRules, PlannerConfig]:
    rules = config_mod.load_level_rules(m.raw_config)
    cfg = config_mod.load_planner_config(m.raw_config, m.max_level)
    return rules, cfg


def _cost_weights(m: RunManifest) -> costs.CostWeights:
    if m.weights_config_path is not None:
        return config_mod.load_cost_weights(
            config_mod.read_config(m.weights_config_path))
    return config_mod.load_cost_weights(m.raw_config)


def _analyze_one(m: RunManifest, kind: str, ident: str, degree: int | None
                 ) -> tuple[Plan, costs.CostReport]:
    g = _load_target(m, kind, ident, degree)
    rules, cfg = _planning_inputs(m)
    p = plan(g, rules, cfg)
    report = costs.price(p, _cost_weights(m))
    return p, report


def cmd_analyze(args: argparse.Namespace) -> int:
    m = _manifest(args)
    if len(m.targets) != 1:
        raise ConfigError("analyze expects exactly one --preset or --graph")
    if len(m.degrees) > 1:
        raise ConfigError("analyze accepts at most one --degree")
    kind, ident = m.targets[0]
    degree = m.degrees[0] if m.degrees else None
    p, report = _analyze_one(m, kind, ident, degree)

    out = m.out_dir or Path("heplan-out")
    out.mkdir(parents=True, exist_ok=True)
    stem = p.planned.name
    (out / f"{stem}.report.json").write_text(report.as_json(), encoding="utf-8")
    (out / f"{stem}.report.csv").write_text(report.as_csv(), encoding="utf-8")
    (out / f"{stem}.planned.hegraph").write_text(emit_graph(p.planned), encoding="utf-8")
    counters = {
        "bootstraps": p.bootstrap_count,
        "rescales": p.rescale_count,
        "transforms": p.transform_count,
        "depth": p.trace.depth,
        "max_level": p.cfg.max_level,
    }
    (out / f"{stem}.counters.json").write_text(
        json.dumps(counters, indent=2) + "\n", encoding="utf-8")

    if m.fmt == "json":
        print(report.as_json(), end="")
    elif m.fmt == "csv":
        print(report.as_csv(), end="")
    else:
        print(f"{stem}: bootstraps={p.bootstrap_count} rescales={p.rescale_count} "
              f"transforms={p.transform_count} depth={p.trace.depth} "
              f"cpu={report.total_cpu_seconds:.3f}s")
        for name, (count, subtotal) in report.breakdown.items():
            print(f"  {name:<16} count={count:<8} subtotal={subtotal:.3f}s")
    print(f"wrote reports to {out}/", file=sys.stderr)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    m = _manifest(args)
    if len(m.targets) < 2:
        raise ConfigError("compare expects at least two targets")
    degrees = m.degrees or [8]
    reports: list[costs.CostReport] = []
    row_degrees: list[int] = []
    for degree in degrees:
        per_degree = [
            costs.price(_analyze_one(m, kind, ident, degree)[0], _cost_weights(m))
            for kind, ident in m.targets
        ]
        reports.extend(costs.compare(per_degree))
        row_degrees.extend([degree] * len(per_degree))
    text = costs.comparison_csv(reports, degrees=row_degrees)
    out = m.out_dir or Path("heplan-out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(text, encoding="utf-8")
    if m.fmt == "json":
        doc = [dataclasses.asdict(r) | {"degree": d}
               for r, d in zip(reports, row_degrees)]
        print(json.dumps(doc, indent=2))
    else:
        print(text, end="")
    print(f"wrote {out / 'compare.csv'}", file=sys.stderr)
    return EXIT_OK


def _coeffs(m: RunManifest):
    path = config_mod.activation_coeffs_path(m.raw_config)
    return load_coefficients(path) if path else default_coefficients()


def cmd_validate(args: argparse.Namespace) -> int:
    m = _manifest(args)
    if len(m.targets) != 1:
        raise ConfigError("validate expects exactly one --preset or --graph")
    kind, ident = m.targets[0]
    degree = m.degrees[0] if m.degrees else None
    g = _load_target(m, kind, ident, degree)
    rules, cfg = _planning_inputs(m)
    noise = config_mod.load_noise_config(m.raw_config, seed_override=m.seed)
    coeffs = _coeffs(m)

    if any(node.op.planned_only for node in g):
        from .levels import propagate_planned
        trace = propagate_planned(g, rules, reset_to=cfg.bootstrap_reset_to)
        bs, rs, tt = _census(g)
        p = Plan(g, bs, rs, tt, trace, rules, cfg)
    else:
        p = plan(g, rules, cfg)

    violations = validate_plan(p)
    if violations:
        first = violations[0]
        label = "LevelOverflowError" if "max_level" in first else "JoinMismatchError"
        print(f"FAIL {label}: {first}")
        return EXIT_FAILURE
    print(f"plan ok: bootstraps={p.bootstrap_count} rescales={p.rescale_count} "
          f"transforms={p.transform_count} depth={p.trace.depth}")

    weights = (load_tensors(m.tensors_path) if m.tensors_path
               else backend.random_weights(g, m.seed))
    inputs = backend.random_inputs(g, m.seed, scale=0.5)
    try:
        result = backend.execute(p, inputs, weights, noise, coeffs)
    except HeplanError as exc:
        print(f"FAIL {type(exc).__name__}: {exc}")
        return EXIT_FAILURE

    if dict(result.runtime_trace.cidx_of) != dict(p.trace.cidx_of):
        print("FAIL TraceMismatch: runtime chain indices disagree with the plan")
        return EXIT_FAILURE
    print("runtime trace matches the static trace")

    clear = backend.cleartext_reference(p.planned, inputs, weights, coeffs)
    if noise.epsilon == 0:
        worst = max(float(np.max(np.abs(result.outputs[o] - clear[o])))
                    for o in result.outputs)
        if worst > 1e-4:
            print(f"FAIL TransparencyError: max |encrypted - cleartext| = {worst:.3g}")
            return EXIT_FAILURE
        print(f"cleartext equivalence ok (max abs diff {worst:.3g})")
    else:
        bounds = backend.noise_bound(p, inputs, weights, noise, coeffs)
        for o in result.outputs:
            diff = np.abs(result.outputs[o] - clear[o])
            if np.any(diff > bounds[o] + 1e-12):
                print(f"FAIL NoiseBoundError: output {o!r} exceeds the noise bound")
                return EXIT_FAILURE
        print(f"noise bound ok at epsilon={noise.epsilon:g}")
    return EXIT_OK


def _census(g: Graph) -> tuple[int, int, int]:
    bs = sum(1 for n in g if n.op.kind == "Bootstrap")
    rs = sum(1 for n in g if n.op.kind == "Rescale")
    tt = sum(1 for n in g if n.op.kind == "TileTransform")
    return bs, rs, tt


def cmd_run(args: argparse.Namespace) -> int:
    m = _manifest(args)
    if len(m.targets) != 1 or m.targets[0][0] != "graph":
        raise ConfigError("run expects exactly one --graph")
    if m.tensors_path is None or m.inputs_path is None:
        raise ConfigError("run requires --tensors and --inputs")
    g = _load_target(m, *m.targets[0], degree=None)
    rules, cfg = _planning_inputs(m)
    noise = config_mod.load_noise_config(m.raw_config, seed_override=m.seed)
    coeffs = _coeffs(m)
    already_planned = any(node.op.planned_only for node in g)
    if already_planned:
        from .levels import propagate_planned
        trace = propagate_planned(g, rules, reset_to=cfg.bootstrap_reset_to)
        bs, rs, tt = _census(g)
        p = Plan(g, bs, rs, tt, trace, rules, cfg)
    else:
        p = plan(g, rules, cfg)
    weights = load_tensors(m.tensors_path)
    inputs = load_tensors(m.inputs_path)
    result = backend.execute(p, inputs, weights, noise, coeffs)
    out = m.out_dir or Path("heplan-out")
    out.mkdir(parents=True, exist_ok=True)
    save_tensors(out / "outputs.hetensors", result.outputs)
    (out / "trace.json").write_text(p.trace.as_json(), encoding="utf-8")
    print(f"wrote {out / 'outputs.hetensors'}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heplan",
        description="Plan and price CNN inference under leveled HE")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, multi_target: bool):
        p.add_argument("--preset", action="append",
                       help="named architecture preset (repeatable)" if multi_target
                       else "named architecture preset")
        p.add_argument("--graph", action="append", metavar="PATH",
                       help=".hegraph document to load (repeatable)" if multi_target
                       else ".hegraph document to load")
        p.add_argument("--degree", action="append", type=int,
                       help="polynomial activation degree (repeatable for compare)")
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--weights-config", dest="weights_config",
                       help="config file supplying cost.* weights")
        p.add_argument("--max-level", dest="max_level", type=int,
                       help="override planner.max_level")
        p.add_argument("--out", help="output directory (default heplan-out)")
        p.add_argument("--format", choices=("csv", "json", "table"), default="table")
        p.add_argument("--seed", type=int, default=0)

    p_analyze = sub.add_parser("analyze", help="plan one graph and price it")
    common(p_analyze, multi_target=False)
    p_analyze.set_defaults(func=cmd_analyze)

    p_compare = sub.add_parser("compare", help="plan several targets and tabulate ratios")
    common(p_compare, multi_target=True)
    p_compare.set_defaults(func=cmd_compare)

    p_validate = sub.add_parser("validate",
                                help="plan, execute, and check static/dynamic agreement")
    common(p_validate, multi_target=False)
    p_validate.add_argument("--tensors", help="named-tensor weights file")
    p_validate.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="execute a graph on given tensors")
    common(p_run, multi_target=False)
    p_run.add_argument("--tensors", required=True, help="named-tensor weights file")
    p_run.add_argument("--inputs", required=True, help="named-tensor inputs file")
    p_run.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HeplanError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
