"""Expanding glassy spheres and the layered birth-death chain.

The EGS walker is SRW on the finite ball graph B_{ck}; once it has made N(k)
visits to the ball's degree-deficient sites the ball grows to B_{c(k+1)}.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import kernels
from .lattice import ModelError, Site, ball, neighbors, origin
from .potential import Schedule, as_schedule, ball_problem, egs_criterion, solve_hit_probability
from .walker import StopRecord, pick, pow2_checkpoints

METRICS = ("graph", "euclidean", "euclidean-projected")


def _in_shell(z: Site, k: int, c: Fraction, graph: bool) -> bool:
    if graph:
        return sum(abs(v) for v in z) * c.denominator <= c.numerator * k
    return sum(v * v for v in z) * c.denominator ** 2 <= (c.numerator * k) ** 2


@dataclass
class EgsState:
    d: int
    schedule: Schedule
    c: Fraction = Fraction(1)
    metric: str = "euclidean"
    k: int = 1
    hits: int = 0
    t: int = 0
    pos: Site = None
    tau_log: list = field(default_factory=lambda: [0])
    visits_origin: int = 1
    last_return: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        self.c = Fraction(self.c)
        if self.c < 1:
            raise ValueError("expansion factor c must be >= 1")
        self.schedule = as_schedule(self.schedule)
        if self.pos is None:
            self.pos = origin(self.d)

    @property
    def graph(self) -> bool:
        return self.metric == "graph"

    def in_shell(self, z: Site, k: Optional[int] = None) -> bool:
        return _in_shell(z, self.k if k is None else k, self.c, self.graph)

    def moves(self, z: Optional[Site] = None) -> list[Site]:
        z = self.pos if z is None else z
        return [y for y in neighbors(z) if self.in_shell(y)]

    def on_boundary(self, z: Optional[Site] = None) -> bool:
        return len(self.moves(z)) < 2 * self.d

    def domain(self):
        """The current shell as a :class:`GrowingDomain` (for inspection)."""
        metric = "graph" if self.graph else "euclidean"
        return ball(origin(self.d), self.c * self.k, metric)


def egs_step(state: EgsState, rng: np.random.Generator) -> EgsState:
    """One step of SRW on B_{ck}; counts boundary visits and expands when N(k) is reached."""
    z = state.pos
    if not state.in_shell(z):
        raise ModelError(f"walker at {z} is outside its shell")
    opts = state.moves(z)
    boundary = len(opts) < 2 * state.d
    state.pos = pick(opts, rng.random())
    state.t += 1
    if boundary:
        state.hits += 1
        if state.hits >= state.schedule(state.k):
            state.k += 1
            state.hits = 0
            state.tau_log.append(state.t)
    if not any(state.pos):
        state.visits_origin += 1
        state.last_return = state.t
    return state


def _cnum_cden(c) -> tuple[int, int]:
    f = Fraction(c)
    return f.numerator, f.denominator


def shell_cap(d: int, horizon: int) -> int:
    """Generous upper bound on the shell index reachable within ``horizon`` steps."""
    return int(min(horizon + 2, 4 * np.sqrt(horizon) + 16))


@dataclass
class EgsRun:
    checkpoints: np.ndarray
    n0: np.ndarray
    last_return: np.ndarray
    k: np.ndarray
    dist_l1: np.ndarray
    taus: np.ndarray
    truncated: bool
    path: Optional[np.ndarray] = None

    @property
    def final_n0(self) -> int:
        return int(self.n0[-1])


def egs_run(d: int, schedule, horizon: int, rng: np.random.Generator, c=1, metric: str = "euclidean",
            checkpoints=None, keep_path: bool = False) -> EgsRun:
    """Compiled EGS run from the origin."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    sched = as_schedule(schedule)
    kmax = shell_cap(d, horizon)
    table = np.zeros(kmax + 1, dtype=np.int64)
    table[1:] = sched.values(np.arange(1, kmax + 1))
    if np.any(table[1:] < 1):
        raise ValueError("schedule must satisfy N(k) >= 1")
    cnum, cden = _cnum_cden(c)
    if Fraction(cnum, cden) < 1:
        raise ValueError("expansion factor c must be >= 1")
    cps = np.asarray(pow2_checkpoints(horizon) if checkpoints is None else checkpoints, dtype=np.int64)
    traj = np.zeros((horizon + 1 if keep_path else 0, d), dtype=np.int64)
    n0, last, k, dl1, taus, trunc = kernels.egs_kernel(rng, d, cnum, cden, metric == "graph", table,
                                                       horizon, cps, traj)
    taus = taus[1:]
    taus = taus[taus >= 0]
    return EgsRun(cps, n0, last, k, dl1, taus, bool(trunc), traj if keep_path else None)


def egs_python_run(d: int, schedule, horizon: int, rng: np.random.Generator, c=1,
                   metric: str = "euclidean") -> tuple[EgsState, np.ndarray, np.ndarray]:
    """Reference run: final state, path and shell index at every time."""
    st = EgsState(d, as_schedule(schedule), Fraction(c), metric)
    path = [st.pos]
    ks = [st.k]
    for _ in range(horizon):
        egs_step(st, rng)
        path.append(st.pos)
        ks.append(st.k)
    return st, np.array(path, dtype=np.int64), np.array(ks, dtype=np.int64)


def egs_table(taus: np.ndarray, schedule, d: int) -> str:
    """CSV rows (k, tau_k, N(k), partial criterion sum) for the shells reached."""
    sched = as_schedule(schedule)
    k = np.arange(1, len(taus) + 1)
    n = sched.values(k) if len(k) else np.zeros(0, dtype=np.int64)
    part = np.cumsum(n * k.astype(float) ** (1.0 - d))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("k", "tau_k", "N_k", "partial_sum"))
    for row in zip(k, taus, n, part):
        w.writerow((int(row[0]), int(row[1]), int(row[2]), repr(float(row[3]))))
    return buf.getvalue()


def egs_stopping_records(path: np.ndarray, ks: np.ndarray, c=1, metric: str = "euclidean") -> list[StopRecord]:
    """eta/sigma records of an EGS path; the boundary at eta is that of B_{c k(eta)}."""
    cf = Fraction(c)
    graph = metric == "graph"
    d = path.shape[1]

    def boundary(z, k):
        return any(not _in_shell(y, k, cf, graph) for y in neighbors(z))

    recs: list[StopRecord] = []
    waiting = False
    for t in range(len(path)):
        z = tuple(int(v) for v in path[t])
        k = int(ks[t])
        at_zero = not any(z)
        if waiting:
            rec = recs[-1]
            if _in_shell(z, rec.key, cf, graph) and boundary(z, rec.key):
                rec.sigma = t
                waiting = False
            elif at_zero:
                rec.hit = True
        if not waiting and not boundary(z, k):
            recs.append(StopRecord(len(recs), t, z, hit=at_zero, key=k))
            waiting = True
    return recs


def egs_resolver(d: int, c=1, metric: str = "euclidean"):
    """p_n = P_x(hit 0 before the boundary of B_{ck}) from cached exact solves."""
    cache = {}

    def resolve(rec):
        k = rec.key
        if k not in cache:
            cache[k] = solve_hit_probability(ball_problem(d, Fraction(c) * k, metric))
        return cache[k].at(rec.start)

    return resolve


# -- layered chain -----------------------------------------------------------------------------


@dataclass
class LayeredChain:
    """Birth-death chain on Z_+ whose edge (k, k+1) opens after Binomial(N(k), q_k) down-steps.

    ``p_plus`` and ``q`` are scalars or arrays indexed by layer (the last
    value repeats).  p_plus[0] is forced to 1: 0 reflects.
    """

    p_plus: object = 0.5
    q: object = 1.0
    N: object = 1

    def __post_init__(self):
        self.schedule = as_schedule(self.N)
        for name, v in (("p_plus", self.p_plus), ("q", self.q)):
            a = np.atleast_1d(np.asarray(v, dtype=float))
            if np.any(a < 0) or np.any(a > 1):
                raise ValueError(f"{name} must lie in [0, 1]")
        a = np.atleast_1d(np.asarray(self.p_plus, dtype=float))
        if np.any(a[1:] <= 0) or (a.size == 1 and a[0] <= 0):
            raise ValueError("p_plus must be positive away from 0")

    @staticmethod
    def _expand(v, size):
        a = np.atleast_1d(np.asarray(v, dtype=float))
        if a.size >= size:
            return a[:size].copy()
        return np.concatenate([a, np.full(size - a.size, a[-1])])

    def arrays(self, size: int):
        p = self._expand(self.p_plus, size)
        p[0] = 1.0
        q = self._expand(self.q, size)
        n = np.zeros(size, dtype=np.int64)
        n[1:] = self.schedule.values(np.arange(1, size))
        return p, q, n

    def log_weights(self, size: int) -> np.ndarray:
        """log prod_{j=1}^{i} p^-_j / p^+_j for i = 0..size-1."""
        p, _, _ = self.arrays(size)
        with np.errstate(divide="ignore"):
            r = np.log1p(-p[1:]) - np.log(p[1:])
        return np.concatenate([[0.0], np.cumsum(r)])

    def hit_zero_before(self, x: int, k: int) -> float:
        """P_x(hit 0 before k) for the chain on the full half-line."""
        return float(HitTable(self, k + 1)(x, k))


class HitTable:
    """Prefix sums of birth-death scale weights for O(1) gambler's-ruin queries."""

    def __init__(self, chain: LayeredChain, size: int):
        lw = chain.log_weights(size)
        # logS[i] = log sum_{j < i} w_j
        self.logS = np.concatenate([[-np.inf], np.logaddexp.accumulate(lw)])

    def __call__(self, x, k):
        x = np.asarray(x)
        k = np.asarray(k)
        if np.any(x < 0) or np.any(x > k):
            raise ValueError("need 0 <= x <= k")
        with np.errstate(invalid="ignore"):
            out = -np.expm1(self.logS[x] - self.logS[k])
        return np.where(x == 0, 1.0, out)


@dataclass
class LayeredRun:
    checkpoints: np.ndarray
    n0: np.ndarray
    last_return: np.ndarray
    frontier: np.ndarray
    records: list
    max_w: int
    overflow: bool


def layered_chain_run(chain: LayeredChain, horizon: int, rng: np.random.Generator, checkpoints=None,
                      max_events: int = 2_000_000) -> LayeredRun:
    """Compiled chain run with online eta/sigma records (boundary = the frontier site)."""
    size = horizon + 3
    p, q, n = chain.arrays(size)
    cps = np.asarray(pow2_checkpoints(horizon) if checkpoints is None else checkpoints, dtype=np.int64)
    out = kernels.layered_kernel(rng, p, q, n, horizon, cps, max_events)
    n0, last, front, eta, start, fr, sigma, hit, overflow, max_w = out
    recs = [StopRecord(i, int(eta[i]), (int(start[i]),), None if sigma[i] < 0 else int(sigma[i]),
                       bool(hit[i]), key=int(fr[i])) for i in range(len(eta))]
    return LayeredRun(cps, n0, last, front, recs, int(max_w), bool(overflow))


def layered_python_run(chain: LayeredChain, horizon: int, rng: np.random.Generator):
    """Reference implementation returning (W path, frontier path)."""
    p, q, n = chain.arrays(horizon + 3)
    W, F, downs = 0, 1, 0
    budget = int(sum(rng.random() < q[1] for _ in range(n[1])))
    ws, fs = [W], [F]
    for _ in range(horizon):
        if W == F and downs < budget:
            downs += 1
            W -= 1
        else:
            if W == F:
                F += 1
                downs = 0
                budget = int(sum(rng.random() < q[F] for _ in range(n[F])))
            W += 1 if rng.random() < p[W] else -1
        if W > F:
            raise ModelError("chain escaped its frontier")
        ws.append(W)
        fs.append(F)
    return np.array(ws), np.array(fs)


def layered_resolver(chain: LayeredChain, size: int):
    table = HitTable(chain, size)

    def resolve(rec):
        return float(table(rec.start[0], rec.key))

    return resolve


def return_trend(n0_half: np.ndarray, n0_full: np.ndarray) -> str:
    """"growth" if most replicas returned in the last dyadic block, else "saturation"."""
    grew = np.asarray(n0_full) > np.asarray(n0_half)
    return "growth" if grew.mean() > 0.5 else "saturation"


__all__ = ["EgsState", "egs_step", "egs_run", "egs_python_run", "egs_table", "egs_criterion",
           "egs_stopping_records", "egs_resolver", "LayeredChain", "HitTable", "layered_chain_run",
           "layered_python_run", "layered_resolver", "return_trend", "EgsRun", "LayeredRun"]
