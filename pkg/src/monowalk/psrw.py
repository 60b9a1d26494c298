"""Probing simple random walks: guided (stretched lattice), line, and unguided
(hitting-measure) probe strategies, with probe-budget accounting.

The walker starts at 0 with D_0 = {0}; every probe adds one site together
with all its edges to sites already present.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .lattice import GrowingDomain, ModelError, Site, coord_bits, induced, neighbors, origin, site_key
from .walker import pick, pow2_checkpoints

VARIANTS = {"d3-full": 0, "d2-biased": 1, "fixed": 2}
STRATEGIES = ("guided", "line", "unguided-coupon", "unguided-plus-M")


# -- budget ------------------------------------------------------------------------------


@dataclass
class ProbeBudget:
    """Per-step probe counts m(t), t = 1, 2, ..."""

    m: list = field(default_factory=list)

    def record(self, count: int) -> None:
        if count < 0:
            raise ValueError("probe counts are non-negative")
        self.m.append(int(count))

    @property
    def cumsum(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.m, dtype=np.int64))

    @property
    def mbar(self) -> np.ndarray:
        c = self.cumsum
        return c / np.arange(1, c.size + 1) if c.size else np.zeros(0)

    def trailing_mbar(self) -> float:
        return trailing_half_mbar(self.cumsum)


def trailing_half_mbar(cumsum: np.ndarray, times: Optional[np.ndarray] = None) -> float:
    """Average probe count over the second half (T/2, T] of the run."""
    c = np.asarray(cumsum)
    if c.size == 0:
        return float("nan")
    if times is None:
        T = c.size
        h = T // 2
        before = c[h - 1] if h > 0 else 0
        return float(c[-1] - before) / (T - h)
    times = np.asarray(times)
    T = int(times[-1])
    h = T // 2
    idx = np.flatnonzero(times == h)
    if h == 0:
        return float(c[-1]) / T
    if idx.size == 0:
        raise ValueError(f"checkpoint {h} (half the horizon) is missing")
    return float(c[-1] - c[idx[0]]) / (T - h)


@dataclass
class BudgetReport:
    t: np.ndarray
    mbar: np.ndarray
    trailing: float

    def to_csv(self, sites: Optional[np.ndarray] = None, m: Optional[np.ndarray] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "m", "mbar", "domain_sites"))
        for i in range(len(self.t)):
            w.writerow((int(self.t[i]), "" if m is None else int(m[i]), repr(float(self.mbar[i])),
                        "" if sites is None else int(sites[i])))
        return buf.getvalue()


def budget_report(budget, checkpoints=None) -> BudgetReport:
    """m-bar at checkpoints and the trailing-half average.

    ``budget`` is a :class:`ProbeBudget` or a pair (checkpoint times,
    cumulative probe counts) as returned by the compiled runs.
    """
    if isinstance(budget, ProbeBudget):
        c = budget.cumsum
        if c.size == 0:
            return BudgetReport(np.zeros(0, dtype=np.int64), np.zeros(0), float("nan"))
        cps = np.asarray(pow2_checkpoints(c.size) if checkpoints is None else checkpoints, dtype=np.int64)
        return BudgetReport(cps, c[cps - 1] / cps, trailing_half_mbar(c))
    times, cum = (np.asarray(a) for a in budget)
    if times.size == 0:
        return BudgetReport(times, np.zeros(0), float("nan"))
    return BudgetReport(times, cum / times, trailing_half_mbar(cum, times))


def budget_checkpoints(horizon: int) -> list[int]:
    return sorted(set(pow2_checkpoints(horizon)) | {max(1, horizon // 2)})


# -- stretched lattice --------------------------------------------------------------------------


class StretchedLattice:
    """Lines of Z^d through (LZ)^d: sites with at least ``need`` coordinates in LZ.

    The default ``need = d - 1`` gives the 1-skeleton of the cubic grid LZ^d
    (in d = 2 this is "some coordinate is a multiple of L").
    """

    def __init__(self, L: int, d: int, need: Optional[int] = None):
        if L < 2:
            raise ValueError(f"stretch factor must be >= 2, got {L}")
        self.L = L
        self.d = d
        self.need = max(1, d - 1) if need is None else need
        if not 1 <= self.need <= d:
            raise ValueError("need must lie in [1, d]")

    def aligned(self, z: Site) -> int:
        return sum(1 for c in z if c % self.L == 0)

    def membership(self, z: Site) -> str:
        a = self.aligned(z)
        if a == self.d:
            return "junction"
        return "lattice" if a >= self.need else "off"

    def contains(self, z: Site) -> bool:
        return self.aligned(z) >= self.need

    def neighbors(self, z: Site) -> list[Site]:
        return [y for y in neighbors(z) if self.contains(y)]


def stretched_membership(z: Site, L: int, d: Optional[int] = None, need: Optional[int] = None) -> str:
    return StretchedLattice(L, len(z) if d is None else d, need).membership(z)


# -- reference (pure Python) strategies -----------------------------------------------------------


@dataclass
class PsrwState:
    pos: Site
    domain: GrowingDomain
    t: int = 0
    visited: set = field(default_factory=set)
    budget: ProbeBudget = field(default_factory=ProbeBudget)
    visits_origin: int = 1
    probes_at_first_visits: list = field(default_factory=list)
    retries: int = 0

    @classmethod
    def start(cls, d: int) -> "PsrwState":
        return cls(origin(d), induced(d, [origin(d)]))

    def move(self, y: Site, m: int) -> None:
        self.budget.record(m)
        self.t += 1
        self.pos = y
        if not any(y):
            self.visits_origin += 1


def _probe(state: PsrwState, y: Site) -> None:
    state.domain.add_probed_site(y, state.t + 1)


def guided_step(state: PsrwState, lattice: StretchedLattice, rng: np.random.Generator,
                variant: str = "d3-full") -> PsrwState:
    """Open closed lattice edges at a first visit, then step on the open lattice subgraph."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    z = state.pos
    if not lattice.contains(z):
        raise ModelError(f"guided walker left the stretched lattice at {z}")
    m = 0
    if variant != "fixed" and z not in state.visited:
        state.visited.add(z)
        junction = lattice.membership(z) == "junction"
        for i, y in enumerate(neighbors(z)):
            if not lattice.contains(y):
                continue
            if variant == "d2-biased" and junction and i == 0:
                continue
            if y not in state.domain.sites:
                _probe(state, y)
                m += 1
        if state.t > 0:
            state.probes_at_first_visits.append(m)
    if variant == "fixed":
        opts = lattice.neighbors(z)
    else:
        opts = [y for y in lattice.neighbors(z) if y in state.domain.sites]
    state.move(pick(opts, rng.random()), m)
    return state


def line_strategy_step(state: PsrwState, M: int, rng: np.random.Generator) -> PsrwState:
    """Grow the interval on the first axis by M sites on each side, then step along it."""
    if M < 1:
        raise ValueError("M must be >= 1")
    d = state.domain.d
    xs = [z[0] for z in state.domain.sites]
    lo, hi = min(xs), max(xs)
    pad = (0,) * (d - 1)
    for j in range(1, M + 1):
        _probe(state, (hi + j,) + pad)
        _probe(state, (lo - j,) + pad)
    opts = state.domain.open_neighbors(state.pos)
    state.move(pick(opts, rng.random()), 2 * M)
    return state


def unguided_probe(sites: set, pos: Site, rng: np.random.Generator, cap: int = 100_000,
                   max_retries: int = 10) -> Site:
    """Exit site of an auxiliary SRW on Z^d started at ``pos`` from the finite set ``sites``."""
    if pos not in sites:
        raise ModelError(f"probe start {pos} is not in the domain")
    d = len(pos)
    moves = neighbors(origin(d))
    for _ in range(max_retries):
        z = pos
        for _ in range(cap):
            j = int(rng.random() * 2 * d)
            z = tuple(a + b for a, b in zip(z, moves[j]))
            if z not in sites:
                return z
    raise ModelError(f"auxiliary walk from {pos} stayed inside a {len(sites)}-site domain for "
                     f"{cap} steps on each of {max_retries} attempts")


def coupon_strategy_step(state: PsrwState, rng_walk: np.random.Generator, rng_aux: np.random.Generator,
                         extra: int = 0, cap: int = 100_000, max_retries: int = 10) -> PsrwState:
    """Unguided probes until B(z, 1) is in the domain at a first visit, ``extra`` more, then SRW."""
    if state.domain.d < 2:
        raise ValueError("the coupon strategy needs d >= 2")
    z = state.pos
    sites = state.domain.sites
    m = 0
    if z not in state.visited:
        state.visited.add(z)
        cnt = 0
        while any(y not in sites for y in neighbors(z)):
            _probe(state, unguided_probe(sites, z, rng_aux, cap, max_retries))
            cnt += 1
        state.probes_at_first_visits.append(cnt)
        m += cnt
    for _ in range(extra):
        _probe(state, unguided_probe(sites, z, rng_aux, cap, max_retries))
        m += 1
    d = state.domain.d
    y = neighbors(z)[int(rng_walk.random() * 2 * d)]
    state.move(y, m)
    return state


# -- compiled runs -----------------------------------------------------------------------------


@dataclass
class PsrwRun:
    """Compiled PSRW output.

    ``first_visit_probes`` is a histogram indexed by probe count for the guided
    strategy and the per-visit sequence of counts for the coupon strategy.
    """

    checkpoints: np.ndarray
    n0: np.ndarray
    last_return: np.ndarray
    probes: np.ndarray
    sites: np.ndarray
    first_visit_probes: np.ndarray
    junction_probes: Optional[np.ndarray] = None
    retries: int = 0
    path: Optional[np.ndarray] = None

    def report(self) -> BudgetReport:
        return budget_report((self.checkpoints, self.probes))


def _cps(horizon, checkpoints):
    return np.asarray(budget_checkpoints(horizon) if checkpoints is None else checkpoints, dtype=np.int64)


def guided_run(d: int, L: int, horizon: int, rng: np.random.Generator, variant: str = "d3-full",
               need: Optional[int] = None, checkpoints=None, keep_path: bool = False) -> PsrwRun:
    if d < 2:
        raise ValueError("guided probing needs d >= 2")
    lat = StretchedLattice(L, d, need)
    cps = _cps(horizon, checkpoints)
    traj = np.zeros((horizon + 1 if keep_path else 0, d), dtype=np.int64)
    n0, last, m, sites, fv, jv = kernels.guided_kernel(rng, d, L, VARIANTS[variant], lat.need, horizon, cps,
                                                       traj, coord_bits(d))
    return PsrwRun(cps, n0, last, m, sites, fv, jv, 0, traj if keep_path else None)


def coupon_run(d: int, horizon: int, rng_walk: np.random.Generator, rng_aux: np.random.Generator,
               extra: int = 0, cap: int = 1_000_000, max_retries: int = 10, checkpoints=None,
               keep_path: bool = False) -> PsrwRun:
    cps = _cps(horizon, checkpoints)
    traj = np.zeros((horizon + 1 if keep_path else 0, d), dtype=np.int64)
    try:
        n0, last, m, sites, fv, retries = kernels.coupon_kernel(rng_walk, rng_aux, d, extra, horizon, cps, traj,
                                                                coord_bits(d), cap, max_retries)
    except Exception as exc:  # numba re-raises as a plain exception
        raise ModelError(f"unguided probe failed: {exc}") from None
    return PsrwRun(cps, n0, last, m, sites, fv, None, int(retries), traj if keep_path else None)


def line_run(d: int, M: int, horizon: int, rng: np.random.Generator, checkpoints=None,
             keep_path: bool = False) -> PsrwRun:
    """Line strategy: a 1-d SRW along the first axis with 2M probes per step."""
    if M < 1:
        raise ValueError("M must be >= 1")
    cps = _cps(horizon, checkpoints)
    steps = np.where(rng.random(horizon) < 0.5, -1, 1)
    x = np.concatenate([[0], np.cumsum(steps)])
    zero = x == 0
    n0 = np.cumsum(zero)[cps]
    hits = np.flatnonzero(zero)
    last = np.array([hits[hits <= t].max() for t in cps], dtype=np.int64)
    m = 2 * M * cps
    sites = 1 + m
    path = None
    if keep_path:
        path = np.zeros((horizon + 1, d), dtype=np.int64)
        path[:, 0] = x
    return PsrwRun(cps, n0, last, m, sites, np.zeros(0, dtype=np.int64), None, 0, path)


def probe_sample(sites, start: Site, n: int, rng: np.random.Generator, cap: int = 1_000_000,
                 max_retries: int = 10) -> np.ndarray:
    """``n`` unguided probes from ``start`` on a frozen finite domain (compiled)."""
    sites = [tuple(z) for z in sites]
    d = len(start)
    bits = coord_bits(d)
    dom = kernels.hs_new(len(sites))
    cnt = np.zeros(1, dtype=np.int64)
    for z in sites:
        dom = kernels.hs_add(dom, cnt, site_key(z))
    return kernels.probe_batch(rng, np.asarray(start, dtype=np.int64), dom, bits, n, cap, max_retries)


def empirical_exit(sites, start: Site, n: int, rng: np.random.Generator) -> dict:
    out = probe_sample(sites, start, n, rng)
    keys, counts = np.unique(out, axis=0, return_counts=True)
    return {tuple(int(v) for v in k): c / n for k, c in zip(keys, counts)}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def coupon_bound(d: int) -> float:
    """2d * sum_{l=1}^{2d-1} 1/l: mean probes per first visit are dominated by this."""
    return 2 * d * sum(1.0 / ell for ell in range(1, 2 * d))
