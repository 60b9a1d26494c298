"""Config-driven experiments: seeded replicas, sweeps, summaries and output files.

Replica ``i`` of an experiment draws every random number from streams keyed by
(master_seed, i), so results do not depend on scheduling or on which other
replicas were run.  Worker count comes from ``MONOWALK_WORKERS`` (default 1).
"""

from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import egs as egs_mod
from . import interactions as inter
from . import lattice, psrw, walker
from .lattice import ModelError
from .potential import PowerSchedule, TableSchedule, s_estimator
from .rng import Streams, domain_seed, stream

SCHEMA_VERSION = 1
WORKERS_ENV = "MONOWALK_WORKERS"

MODELS = ("srw", "obt", "pobt", "fobt", "fobt-biased", "robt", "extended", "egs", "layered", "psrw", "coupled")
PY_MODELS = ("srw", "obt", "pobt", "fobt", "fobt-biased", "robt", "extended")
DOMAINS = ("point", "ball", "box", "bernoulli", "full")


class ConfigError(ValueError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass
class ExperimentConfig:
    model: str
    d: int
    horizon: int
    replicas: int = 1
    master_seed: int = 0
    checkpoints: Any = "pow2"
    r_max: Optional[int] = None
    params: dict = field(default_factory=dict)
    domain: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    truncation_threshold: float = 0.0

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        _require(not extra, f"unknown config keys: {sorted(extra)}")
        missing = {"model", "d", "horizon"} - set(raw)
        _require(not missing, f"missing config keys: {sorted(missing)}")
        cfg = cls(**copy.deepcopy(raw))
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_yaml(text)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        _require(self.model in MODELS, f"unknown model {self.model!r}; choose from {MODELS}")
        for name in ("d", "horizon", "replicas", "master_seed"):
            v = getattr(self, name)
            _require(isinstance(v, int) and not isinstance(v, bool), f"{name} must be an integer")
        _require(1 <= self.d <= lattice.MAX_DIM, f"d must lie in [1, {lattice.MAX_DIM}]")
        _require(self.horizon >= 1, "horizon must be >= 1")
        _require(self.replicas >= 1, "replicas must be >= 1")
        _require(self.master_seed >= 0, "master_seed must be >= 0")
        _require(self.r_max is None or (isinstance(self.r_max, int) and self.r_max >= 1), "r_max must be >= 1")
        _require(0.0 <= float(self.truncation_threshold) <= 1.0, "truncation_threshold must lie in [0, 1]")
        if self.checkpoints != "pow2":
            _require(isinstance(self.checkpoints, list) and self.checkpoints
                     and all(isinstance(c, int) and 1 <= c <= self.horizon for c in self.checkpoints),
                     "checkpoints must be 'pow2' or a list of times in [1, horizon]")
        _require(isinstance(self.params, dict) and isinstance(self.domain, dict), "params/domain must be mappings")
        self._validate_model()

    def _validate_model(self) -> None:
        p, m, d = self.params, self.model, self.d
        if m in PY_MODELS:
            kind = self.domain.get("kind", "full" if m == "srw" else "ball")
            _require(kind in DOMAINS, f"unknown domain kind {kind!r}")
            if kind == "ball":
                _require(self.domain.get("radius", 1) >= 1, "ball radius must be >= 1")
                _require(self.domain.get("metric", "graph") in ("graph", "euclidean", "euclidean-projected"),
                         "ball metric must be graph or euclidean")
            if kind == "bernoulli":
                _require(0 <= self.domain.get("p", 0.5) < 1, "bernoulli p must lie in [0, 1)")
        if m == "pobt":
            _require(0 < p.get("eps", 1.0) <= 1, "pobt eps must lie in (0, 1]")
            _require(p.get("rule", "all") in inter.RULES, f"pobt rule must be one of {inter.RULES}")
        if m == "robt":
            _require(p.get("radius", 2) >= 1 and p.get("max_edges", 1) >= 1, "robt radius/max_edges must be >= 1")
        if m in ("fobt-biased", "coupled"):
            _require(d == 2, f"{m} is planar: d must be 2")
        if m == "coupled":
            _require(0 <= p.get("p", 0.0) < 1, "coupled p must lie in [0, 1)")
        if m == "extended":
            _require(p.get("boundary", "uniform") in ("uniform", "drift-to-origin"), "unknown boundary policy")
            _require(0 <= p.get("delta", 0.0) < 1, "delta must lie in [0, 1)")
            _require(0 < p.get("c", 0.5) < 1, "contraction c must lie in (0, 1)")
            _require(p.get("growth") in (None, "obt"), "growth must be null or obt")
        if m == "egs":
            _require(p.get("metric", "euclidean") in egs_mod.METRICS, "unknown EGS metric")
            _require(float(eval_fraction(p.get("c", 1))) >= 1, "EGS c must be >= 1")
            if "table" in p:
                _require(all(isinstance(v, int) and v >= 1 for v in p["table"]), "EGS table entries must be >= 1")
            else:
                _require(p.get("a", 1.0) > 0, "EGS schedule a must be positive")
        if m == "layered":
            _require(d == 1, "the layered chain lives on Z_+ (d = 1)")
            try:
                egs_mod.LayeredChain(p.get("p_plus", 0.5), p.get("q", 1.0), p.get("N", 1))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if m == "psrw":
            strat = p.get("strategy", "guided")
            _require(strat in psrw.STRATEGIES, f"psrw strategy must be one of {psrw.STRATEGIES}")
            if strat == "guided":
                _require(d >= 2, "guided probing needs d >= 2")
                _require(p.get("L", 4) >= 2, "L must be >= 2")
                _require(p.get("variant", "d3-full") in psrw.VARIANTS, "unknown guided variant")
            if strat == "line":
                _require(p.get("M", 1) >= 1, "M must be >= 1")
            if strat.startswith("unguided"):
                _require(d >= 2, "unguided strategies need d >= 2")
                _require(p.get("M", 0 if strat == "unguided-coupon" else 1) >= 0, "M must be >= 0")


def eval_fraction(v):
    from fractions import Fraction
    return Fraction(str(v))


def checkpoint_list(cfg: ExperimentConfig) -> list[int]:
    pts = walker.pow2_checkpoints(cfg.horizon) if cfg.checkpoints == "pow2" else sorted(set(cfg.checkpoints))
    if cfg.model == "psrw":
        pts = sorted(set(pts) | {max(1, cfg.horizon // 2)})
    return pts


# -- replicas ---------------------------------------------------------------------------------


@dataclass
class ReplicaResult:
    replica: int
    checkpoints: list
    n0: list
    last_return: list
    truncated: bool = False
    extra: dict = field(default_factory=dict)
    stopping: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def record(self, wall: bool = True) -> dict:
        out = {"schema": SCHEMA_VERSION, **asdict(self)}
        if not wall:
            out.pop("wall_time")
        return out


def _ints(a) -> list:
    return [int(v) for v in np.asarray(a)]


def build_domain(cfg: ExperimentConfig, replica: int) -> lattice.GrowingDomain:
    dcfg = cfg.domain
    kind = dcfg.get("kind", "full" if cfg.model == "srw" else "ball")
    d = cfg.d
    if kind == "point":
        return lattice.induced(d, [lattice.origin(d)])
    if kind == "ball":
        return lattice.ball(lattice.origin(d), eval_fraction(dcfg.get("radius", 1)), dcfg.get("metric", "graph"))
    if kind == "box":
        return lattice.box(d, dcfg.get("halfwidth", 1))
    if kind == "bernoulli":
        return lattice.bernoulli_domain(dcfg.get("p", 0.5), dcfg.get("halfwidth", 0),
                                        domain_seed(cfg.master_seed, replica), d)
    return lattice.full_lattice(d)


def build_policy(cfg: ExperimentConfig):
    p, m = cfg.params, cfg.model
    if m == "srw":
        return walker.NoInteraction()
    if m == "obt":
        return inter.OBT()
    if m == "pobt":
        return inter.POBT(p.get("eps", 1.0), p.get("rule", "all"))
    if m == "fobt":
        dirs = p.get("directions", "all")
        return inter.FOBT(dirs if dirs == "all" else [tuple(x) for x in dirs])
    if m == "fobt-biased":
        return inter.FobtBiased()
    if m == "robt":
        return inter.ROBT(p.get("radius", 2), p.get("max_edges", 1))
    if m == "extended":
        bp = (inter.DriftToOrigin(p.get("delta", 0.0)) if p.get("boundary", "uniform") == "drift-to-origin"
              else inter.UniformBoundary())
        r = int(p.get("radius", 1))
        return inter.ExtendedSRW(bp, radius_fn=lambda x, _r=r: _r, c=p.get("c", 0.5), growth=p.get("growth"))
    raise ConfigError(f"model {m!r} has no Python policy")


def _schedule(p: dict):
    if "table" in p:
        return TableSchedule(p["table"])
    return PowerSchedule(p.get("a", 1.0), p.get("alpha", 0.0))


def run_replica(cfg: ExperimentConfig, replica: int) -> ReplicaResult:
    t0 = time.perf_counter()
    cps = checkpoint_list(cfg)
    seed, p, m = cfg.master_seed, cfg.params, cfg.model
    res = ReplicaResult(replica, cps, [], [])
    if m == "srw" and cfg.domain.get("kind", "full") == "full" and cfg.r_max is None:
        from .kernels import srw_kernel
        n0, last, _ = srw_kernel(stream(seed, replica), cfg.d, cfg.horizon, np.asarray(cps, dtype=np.int64),
                                 np.zeros((0, cfg.d), dtype=np.int64))
        res.n0, res.last_return = _ints(n0), _ints(last)
    elif m in PY_MODELS:
        dom = build_domain(cfg, replica)
        st = walker.WalkState.start(dom)
        out = walker.run(st, build_policy(cfg), cfg.horizon, Streams.from_seed(seed, replica), checkpoints=cps,
                         thin=cfg.horizon + 1, r_max=cfg.r_max, dist_cap=p.get("dist_cap", 64))
        res.n0 = [c.N0 for c in out.checkpoints]
        res.last_return = [c.last_return for c in out.checkpoints]
        res.checkpoints = [c.t for c in out.checkpoints]
        res.truncated = out.truncated
        res.extra = {"domain_sites": [c.domain_sites for c in out.checkpoints],
                     "dist": [c.dist for c in out.checkpoints]}
        recs = out.log.records
        res.stopping = {"records": len(recs), "hits": sum(r.hit for r in recs)}
    elif m == "egs":
        r = egs_mod.egs_run(cfg.d, _schedule(p), cfg.horizon, stream(seed, replica), c=eval_fraction(p.get("c", 1)),
                            metric=p.get("metric", "euclidean"), checkpoints=cps)
        res.n0, res.last_return, res.truncated = _ints(r.n0), _ints(r.last_return), r.truncated
        res.extra = {"k": _ints(r.k), "dist_l1": _ints(r.dist_l1)}
    elif m == "layered":
        chain = egs_mod.LayeredChain(p.get("p_plus", 0.5), p.get("q", 1.0), p.get("N", 1))
        r = egs_mod.layered_chain_run(chain, cfg.horizon, stream(seed, replica), checkpoints=cps)
        res.n0, res.last_return, res.truncated = _ints(r.n0), _ints(r.last_return), r.overflow
        res.extra = {"frontier": _ints(r.frontier)}
        est = s_estimator(r.records, egs_mod.layered_resolver(chain, r.max_w + 3))
        res.stopping = {"records": len(r.records), "hits": sum(x.hit for x in r.records),
                        "S_hat": float(est.total), "verdict": est.verdict}
    elif m == "psrw":
        strat = p.get("strategy", "guided")
        if strat == "guided":
            r = psrw.guided_run(cfg.d, p.get("L", 4), cfg.horizon, stream(seed, replica),
                                p.get("variant", "d3-full"), p.get("need"), checkpoints=cps)
        elif strat == "line":
            r = psrw.line_run(cfg.d, p.get("M", 1), cfg.horizon, stream(seed, replica), checkpoints=cps)
        else:
            extra = p.get("M", 0 if strat == "unguided-coupon" else 1)
            r = psrw.coupon_run(cfg.d, cfg.horizon, stream(seed, replica, "walk"), stream(seed, replica, "aux"),
                                extra, checkpoints=cps)
        rep = r.report()
        res.n0, res.last_return = _ints(r.n0), _ints(r.last_return)
        res.extra = {"probes": _ints(r.probes), "domain_sites": _ints(r.sites),
                     "mbar": [float(v) for v in rep.mbar], "trailing_mbar": rep.trailing}
    elif m == "coupled":
        r = inter.coupled_biased_run(p.get("p", 0.0), domain_seed(seed, replica), cfg.horizon,
                                     stream(seed, replica), checkpoints=cps)
        res.n0, res.last_return = _ints(r.n0), _ints(r.last_return)
        res.extra = {"diff1": _ints(r.diff1), "violations": r.violations, "snn": r.snn, "snn_free": r.snn_free}
    res.wall_time = time.perf_counter() - t0
    return res


def _run_one(args):
    raw, i = args
    return run_replica(ExperimentConfig.from_dict(raw), i)


def worker_count(workers: Optional[int] = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_experiment(config, workers: Optional[int] = None, replicas=None) -> list[ReplicaResult]:
    """Run every replica (or the given subset of indices), ordered by index."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    idx = list(range(cfg.replicas)) if replicas is None else sorted(replicas)
    n = worker_count(workers)
    if n == 1 or len(idx) == 1:
        return [run_replica(cfg, i) for i in idx]
    raw = cfg.to_dict()
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_one, [(raw, i) for i in idx]))


# -- sweeps and summaries ------------------------------------------------------------------------


def set_path(d: dict, path: str, value) -> None:
    keys = path.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def sweep(config, grid: dict, workers: Optional[int] = None) -> list[dict]:
    """One summary row per cell of the cross product of ``grid`` (dotted config paths)."""
    if not grid:
        raise ConfigError("empty sweep grid")
    base = config.to_dict() if isinstance(config, ExperimentConfig) else copy.deepcopy(config)
    keys = list(grid)
    for k in keys:
        _require(isinstance(grid[k], list) and grid[k], f"grid entry {k!r} must be a non-empty list")
        _require(k.split(".")[0] in ExperimentConfig.__dataclass_fields__, f"grid key {k!r} is not a config path")
    rows = []
    for values in itertools.product(*(grid[k] for k in keys)):
        raw = copy.deepcopy(base)
        for k, v in zip(keys, values):
            set_path(raw, k, v)
        summ = summarize(run_experiment(ExperimentConfig.from_dict(raw), workers))
        row = dict(zip(keys, values))
        row.update(summ.scalars())
        rows.append(row)
    return rows


@dataclass
class Summary:
    checkpoints: list
    n0_median: list
    n0_q25: list
    n0_q75: list
    last_return_median: float
    final_n0_median: float
    truncation_rate: float
    n0_slope: float
    replicas: int
    extra_medians: dict = field(default_factory=dict)

    def scalars(self) -> dict:
        out = {"replicas": self.replicas, "final_n0_median": self.final_n0_median,
               "last_return_median": self.last_return_median, "truncation_rate": self.truncation_rate,
               "n0_slope": self.n0_slope}
        out.update(self.extra_medians)
        return out


def loglog_slope(t, y) -> float:
    """Least-squares slope of log y against log t over points with t, y > 0."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (t > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(t[ok]), np.log(y[ok]), 1)[0])


def _carry(values: list, n: int) -> list:
    return list(values) + [values[-1]] * (n - len(values)) if values else [0] * n


def summarize(results: list[ReplicaResult]) -> Summary:
    if not results:
        raise ValueError("nothing to summarize")
    # truncated replicas stop early; their walker is frozen, so carry values forward
    cps = max((r.checkpoints for r in results), key=len)
    n0 = np.array([_carry(r.n0, len(cps)) for r in results], dtype=float)
    med = np.median(n0, axis=0)
    last = np.array([r.last_return[-1] for r in results], dtype=float)
    extra = {}
    for key in sorted(results[0].extra):
        vals = [r.extra.get(key) for r in results]
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            extra[f"{key}_median"] = float(np.median(vals))
        elif all(isinstance(v, list) and v and isinstance(v[-1], (int, float)) for v in vals):
            extra[f"{key}_final_median"] = float(np.median([v[-1] for v in vals]))
    return Summary(list(cps), med.tolist(), np.quantile(n0, 0.25, axis=0).tolist(),
                   np.quantile(n0, 0.75, axis=0).tolist(), float(np.median(last)), float(med[-1]),
                   float(np.mean([r.truncated for r in results])), loglog_slope(cps, med), len(results), extra)


# -- output -------------------------------------------------------------------------------------------

RESULT_COLUMNS = ("replica", "t", "N0", "last_return", "truncated")
SUMMARY_COLUMNS = ("t", "n0_median", "n0_q25", "n0_q75")


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def to_csv(obj) -> str:
    if isinstance(obj, Summary):
        rows = zip(obj.checkpoints, obj.n0_median, obj.n0_q25, obj.n0_q75)
        return _csv_text(SUMMARY_COLUMNS, rows)
    if obj and isinstance(obj[0], dict):
        cols = list(obj[0])
        return _csv_text(cols, ([row.get(c) for c in cols] for row in obj))
    if not obj:
        return _csv_text(RESULT_COLUMNS, [])
    rows = ((r.replica, t, n, lr, int(r.truncated))
            for r in obj for t, n, lr in zip(r.checkpoints, r.n0, r.last_return))
    return _csv_text(RESULT_COLUMNS, rows)


def to_jsonl(obj, wall: bool = True) -> str:
    if isinstance(obj, Summary):
        recs = [{"schema": SCHEMA_VERSION, **asdict(obj)}]
    else:
        recs = [r.record(wall) if isinstance(r, ReplicaResult) else {"schema": SCHEMA_VERSION, **r} for r in obj]
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in recs)


def emit(obj, fmt: str, path) -> Path:
    """Write results, a summary or sweep rows as CSV or JSONL."""
    if fmt == "csv":
        text = to_csv(obj)
    elif fmt == "jsonl":
        text = to_jsonl(obj)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {fmt} output to {path}: {exc}") from exc
    return path


def read_csv(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_jsonl(path) -> list[dict]:
    return [json.loads(ln) for ln in Path(path).read_text().splitlines() if ln.strip()]


def truncation_exceeded(results: list[ReplicaResult], threshold: float) -> bool:
    return bool(results) and float(np.mean([r.truncated for r in results])) > threshold


__all__ = ["ConfigError", "ExperimentConfig", "ReplicaResult", "Summary", "run_experiment", "run_replica", "sweep",
           "summarize", "emit", "to_csv", "to_jsonl", "read_csv", "read_jsonl", "loglog_slope", "ModelError"]
