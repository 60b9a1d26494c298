"""Simple random walk on a growing domain, with recurrence bookkeeping.

The engine here is the reference implementation: slow, explicit and driven by
a policy object.  Heavy Monte Carlo work goes through the compiled kernels in
:mod:`monowalk.kernels`, which are tested against this engine step for step.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from .lattice import GrowingDomain, ModelError, Site, graph_distance, linf, origin
from .rng import Streams

CHECKPOINT_COLUMNS = ("t", "N0", "last_return", "dist", "domain_sites", "domain_edges")


@dataclass
class WalkState:
    pos: Site
    domain: GrowingDomain
    t: int = 0
    visits_origin: int = 0
    last_return: int = 0
    truncated: bool = False

    @classmethod
    def start(cls, domain: GrowingDomain, pos: Optional[Site] = None) -> "WalkState":
        pos = origin(domain.d) if pos is None else tuple(pos)
        st = cls(pos=pos, domain=domain)
        st.visits_origin = int(pos == origin(domain.d))
        return st

    def advance(self, new_pos: Site) -> None:
        self.t += 1
        self.pos = new_pos
        if not any(new_pos):
            self.visits_origin += 1
            self.last_return = self.t


def pick(options: list, u: float):
    return options[int(u * len(options))]


def srw_step(state: WalkState, rng: np.random.Generator) -> WalkState:
    """Move to a uniformly chosen neighbour across an open edge."""
    opts = state.domain.open_neighbors(state.pos)
    if not opts:
        raise ModelError(f"walker isolated at {state.pos} (degree 0) at t={state.t}")
    state.advance(pick(opts, rng.random()))
    return state


class Policy(Protocol):
    def step(self, state: WalkState, streams: Streams) -> None: ...


class NoInteraction:
    """SRW on a fixed domain."""

    kind = "srw"

    def step(self, state: WalkState, streams: Streams) -> None:
        srw_step(state, streams.walk)


# -- stopping times ------------------------------------------------------------------


@dataclass
class StopRecord:
    n: int
    eta: int
    start: Site
    sigma: Optional[int] = None
    hit: bool = False
    p_hat: Optional[float] = None
    key: object = None

    @property
    def closed(self) -> bool:
        return self.sigma is not None


@dataclass
class StoppingLog:
    """Online record of the alternating times eta_n <= sigma_n <= eta_{n+1}.

    sigma_n tests membership in the boundary *as it was at eta_n*; eta_{n+1}
    tests the live boundary.  An unclosed last record means sigma is still open.
    """

    records: list[StopRecord] = field(default_factory=list)
    waiting_sigma: bool = False

    @property
    def current(self) -> Optional[StopRecord]:
        return self.records[-1] if self.records else None


def update_stopping_log(log: StoppingLog, state: WalkState, domain: Optional[GrowingDomain] = None,
                        key=None) -> StoppingLog:
    """Process time ``state.t`` (domain must still be G_t, i.e. before its update)."""
    dom = state.domain if domain is None else domain
    t, x = state.t, state.pos
    at_zero = not any(x)
    if log.waiting_sigma:
        rec = log.records[-1]
        if dom.in_boundary_at(x, rec.eta):
            rec.sigma = t
            log.waiting_sigma = False
        elif at_zero:
            rec.hit = True
    if not log.waiting_sigma and not dom.in_boundary_at(x, t):
        log.records.append(StopRecord(n=len(log.records), eta=t, start=x, hit=at_zero,
                                      key=key(t) if callable(key) else key))
        log.waiting_sigma = True
    return log


def hits_offline(trajectory: np.ndarray, log: StoppingLog) -> list[bool]:
    """A_n recomputed from a stored (unthinned) trajectory."""
    zero = ~trajectory.any(axis=1)
    out = []
    for rec in log.records:
        end = rec.sigma if rec.sigma is not None else len(trajectory)
        out.append(bool(zero[rec.eta:end].any()))
    return out


# -- driver --------------------------------------------------------------------------


def pow2_checkpoints(horizon: int) -> list[int]:
    pts, k = [], 1
    while k < horizon:
        pts.append(k)
        k *= 2
    if horizon >= 1:
        pts.append(horizon)
    return pts


@dataclass
class Checkpoint:
    t: int
    N0: int
    last_return: int
    dist: Optional[int]
    domain_sites: int
    domain_edges: int

    def row(self) -> tuple:
        return (self.t, self.N0, self.last_return, self.dist, self.domain_sites, self.domain_edges)


@dataclass
class RunResult:
    trajectory: np.ndarray
    times: np.ndarray
    checkpoints: list[Checkpoint]
    log: StoppingLog
    state: WalkState

    @property
    def truncated(self) -> bool:
        return self.state.truncated


def _checkpoint(state: WalkState, dist_cap: int) -> Checkpoint:
    dist = graph_distance(state.domain, origin(state.domain.d), state.pos, cap=dist_cap)
    return Checkpoint(state.t, state.visits_origin, state.last_return, dist,
                      state.domain.n_sites, state.domain.n_edges)


def run(state: WalkState, policy: Optional[Policy], horizon: int, streams: Streams,
        checkpoints: Optional[list[int]] = None, thin: int = 1, r_max: Optional[int] = None,
        dist_cap: int = 256, stopping: bool = True) -> RunResult:
    """Drive ``policy`` for ``horizon`` steps.

    Each step first logs time t against G_t, then lets the policy grow the
    domain and move the walker.  Touching ``r_max`` (sup-norm) stops the run
    and sets ``state.truncated``.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    d = state.domain.d
    log = StoppingLog()
    if horizon == 0:
        state.visits_origin = 0
        return RunResult(np.zeros((0, d), dtype=np.int64), np.zeros(0, dtype=np.int64), [], log, state)
    policy = NoInteraction() if policy is None else policy
    cps = pow2_checkpoints(horizon) if checkpoints is None else sorted(set(checkpoints))
    cp_iter = iter(c for c in cps if c <= horizon)
    next_cp = next(cp_iter, None)
    traj, times, rows = [state.pos], [state.t], []
    end = state.t + horizon
    while state.t < end:
        if stopping:
            update_stopping_log(log, state)
        if r_max is not None and linf(state.pos) >= r_max:
            state.truncated = True
            break
        policy.step(state, streams)
        if state.t % thin == 0:
            traj.append(state.pos)
            times.append(state.t)
        while next_cp is not None and next_cp <= state.t:
            rows.append(_checkpoint(state, dist_cap))
            next_cp = next(cp_iter, None)
    return RunResult(np.array(traj, dtype=np.int64).reshape(-1, d), np.array(times, dtype=np.int64),
                     rows, log, state)


@dataclass
class RecurrenceStats:
    times: np.ndarray
    n0: np.ndarray
    last_return: int
    dist: list


def recurrence_stats(trajectory: np.ndarray, checkpoints: Optional[list[int]] = None,
                     snapshots: Optional[dict[int, GrowingDomain]] = None,
                     dist_cap: int = 256) -> RecurrenceStats:
    """N0 at checkpoints, last return time and in-domain distance from an unthinned path."""
    traj = np.asarray(trajectory)
    if len(traj) == 0:
        return RecurrenceStats(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), 0, [])
    horizon = len(traj) - 1
    cps = np.array(pow2_checkpoints(horizon) if checkpoints is None else checkpoints, dtype=np.int64)
    zero = ~traj.any(axis=1)
    n0 = np.cumsum(zero)[cps]
    hits = np.flatnonzero(zero)
    last = int(hits[-1]) if len(hits) else 0
    dist = []
    for t in cps:
        if snapshots is not None and int(t) in snapshots:
            dom = snapshots[int(t)]
            dist.append(graph_distance(dom, origin(dom.d), tuple(int(c) for c in traj[t]), cap=dist_cap))
        else:
            dist.append(None)
    return RecurrenceStats(cps, n0, last, dist)


def checkpoints_csv(rows: list[Checkpoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHECKPOINT_COLUMNS)
    for r in rows:
        w.writerow(["" if v is None else v for v in r.row()])
    return buf.getvalue()
