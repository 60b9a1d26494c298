"""Command line entry point: ``monowalk {simulate,sweep,criterion,dirichlet}``.

Exit codes: 0 success, 2 configuration error, 3 truncation rate above the
configured threshold.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import potential
from .harness import (ConfigError, ExperimentConfig, emit, run_experiment, summarize, sweep, to_csv,
                      truncation_exceeded)

EXIT_OK, EXIT_CONFIG, EXIT_TRUNCATED = 0, 2, 3


def _site(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.replace("(", "").replace(")", "").split(","))
    except ValueError:
        raise ConfigError(f"cannot parse site {text!r}") from None


def _params(items: list[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k] = yaml.safe_load(v)
    return out


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    results = run_experiment(cfg, args.workers)
    out = Path(args.out or cfg.output.get("dir", "."))
    stem = cfg.output.get("stem", Path(args.config).stem)
    emit(results, "csv", out / f"{stem}.csv")
    emit(results, "jsonl", out / f"{stem}.jsonl")
    summ = summarize(results)
    emit(summ, "csv", out / f"{stem}_summary.csv")
    print(json.dumps(summ.scalars(), sort_keys=True))
    if truncation_exceeded(results, cfg.truncation_threshold):
        print(f"truncation rate {summ.truncation_rate:.3f} exceeds {cfg.truncation_threshold}", file=sys.stderr)
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    try:
        grid = yaml.safe_load(Path(args.grid).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read grid {args.grid}: {exc}") from None
    if not isinstance(grid, dict):
        raise ConfigError("grid file must map config paths to value lists")
    rows = sweep(cfg, grid, args.workers)
    text = to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if any(r["truncation_rate"] > cfg.truncation_threshold for r in rows):
        return EXIT_TRUNCATED
    return EXIT_OK


def _schedule_from(p: dict):
    if "table" in p:
        return potential.TableSchedule(p["table"])
    return potential.PowerSchedule(p.get("a", 1.0), p.get("alpha", 0.0))


def cmd_criterion(args) -> int:
    p = _params(args.params)
    if "d" not in p:
        raise ConfigError("criterion needs d=<dimension>")
    d = int(p["d"])
    fam = args.family
    try:
        if fam == "egs":
            reps = [potential.egs_criterion(_schedule_from(p), d, int(p.get("k_max", 10_000)))]
        elif fam == "obt-box":
            reps = [potential.obt_box_criterion(_schedule_from(p), d, int(p.get("k_max", 10_000)))]
        elif fam == "egs-bracket":
            k_max = int(p.get("k_max", 20))
            reps = list(potential.egs_bracket(_schedule_from(p), d, p.get("c", 1), range(int(p.get("k_min", 4)),
                                                                                       k_max + 1)))
        elif fam == "s-star":
            sites = [tuple(s) for s in p.get("sites", [])]
            r = int(p.get("radius", 0))
            reps = [potential.s_star(sites, d, lambda x: r, int(p.get("truncation", 8)))]
        else:
            raise ConfigError(f"unknown criterion family {fam!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for rep in reps:
        sys.stdout.write(f"# series={rep.series} cutoff={rep.cutoff} verdict={rep.verdict}\n")
        sys.stdout.write(rep.to_csv())
    return EXIT_OK


def _domain_problem(spec: dict, d: int, target, start) -> potential.DirichletProblem:
    kind = spec.get("kind", "ball")
    if kind == "ball":
        mask, offset = potential.ball_mask(d, spec.get("radius", 5), spec.get("metric", "graph"))
        sites = [tuple(int(v) for v in z) for z in np.argwhere(mask) + np.array(offset)]
    elif kind == "interval":
        n = int(spec["n"])
        sites = [(x,) for x in range(-n, n + 1)]
    elif kind == "sites":
        sites = [tuple(z) for z in spec["sites"]]
    else:
        raise ConfigError(f"unknown domain kind {kind!r}")
    if any(len(z) != d for z in sites):
        raise ConfigError("domain sites do not match --dim")
    siteset = set(sites)
    if "killing" in spec:
        killing = [tuple(z) for z in spec["killing"]]
    else:
        killing = [z for z in sites if any(
            tuple(c + (s if i == a else 0) for i, c in enumerate(z)) not in siteset
            for a in range(d) for s in (-1, 1))]
    killing = [z for z in killing if z not in target]
    return potential.DirichletProblem.from_sites(sites, target, killing, start)


def cmd_dirichlet(args) -> int:
    try:
        spec = yaml.safe_load(Path(args.domain).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read domain spec {args.domain}: {exc}") from None
    if not isinstance(spec, dict):
        raise ConfigError("domain spec must be a mapping")
    target = [_site(s) for s in args.target]
    start = _site(args.start)
    if any(len(z) != args.dim for z in target + [start]):
        raise ConfigError(f"--start and --target must have {args.dim} coordinates")
    try:
        prob = _domain_problem(spec, args.dim, target, start)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        sol = potential.solve_hit_probability(prob, method=args.method)
    except potential.SolverError as exc:
        raise ConfigError(f"ill-posed problem: {exc}") from None
    print(json.dumps({"start": list(start), "h": sol.value, "residual": sol.residual,
                      "unknowns": sol.n_unknowns, "method": sol.method}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monowalk", description="Random walks on monotone growing domains.")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="run an experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (default: config output.dir or .)")
    s.add_argument("--workers", type=int, help="overrides MONOWALK_WORKERS")
    s.set_defaults(fn=cmd_simulate)
    s = sub.add_parser("sweep", help="run a config over a parameter grid")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out")
    s.add_argument("--workers", type=int)
    s.set_defaults(fn=cmd_sweep)
    s = sub.add_parser("criterion", help="evaluate a criterion series")
    s.add_argument("--family", required=True, choices=("egs", "obt-box", "egs-bracket", "s-star"))
    s.add_argument("--params", nargs="*", default=[], help="key=value pairs, e.g. d=3 alpha=1.5 k_max=1000")
    s.set_defaults(fn=cmd_criterion)
    s = sub.add_parser("dirichlet", help="solve a hitting probability")
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--domain", required=True, help="YAML domain spec")
    s.add_argument("--target", nargs="+", default=None)
    s.add_argument("--start", required=True)
    s.add_argument("--method", default="auto", choices=("auto", "direct", "cg"))
    s.set_defaults(fn=cmd_dirichlet)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "target", "unset") is None:
        args.target = [",".join(["0"] * args.dim)]
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
