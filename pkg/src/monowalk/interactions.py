"""Interaction policies: the open-by-touch family, extended-SRW boundary rules and
the coupled right/up/down opening walk in the plane.

A policy's ``step(state, streams)`` reads the walker at time t, grows the
domain (growth logged at t + 1, so it belongs to G_{t+1}) and then moves the
walker.  Domain growth therefore takes effect before the walker departs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .lattice import (GrowingDomain, ModelError, Site, bernoulli_domain, coord_bits, edge, incident_edges,
                      induced, l1, neighbors)
from .rng import Streams
from .walker import WalkState, pick, srw_step

RULES = ("all", "one-uniform")


def obt_update(domain: GrowingDomain, pos: Site, t: int) -> GrowingDomain:
    """Open every edge at ``pos`` if it is a boundary site (effective at t + 1)."""
    if domain.in_boundary(pos):
        domain.open_all_at(pos, t + 1)
    return domain


def pobt_update(domain: GrowingDomain, pos: Site, t: int, eps: float, rule: str,
                rng: np.random.Generator) -> GrowingDomain:
    """With probability ``eps`` open closed edges at a boundary site.

    ``rule`` is "all" (every closed edge) or "one-uniform" (one of them, chosen
    uniformly).  One uniform is spent per boundary visit, plus one more for the
    edge choice under "one-uniform".
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if rule not in RULES:
        raise ValueError(f"unknown opening rule {rule!r}")
    if not domain.in_boundary(pos):
        return domain
    if rng.random() < eps:
        closed = domain.closed_edges_at(pos)
        if rule == "all":
            domain.add_edges(closed, t + 1)
        else:
            domain.add_edges([pick(closed, rng.random())], t + 1)
    return domain


class OBT:
    """Open by touch: a boundary visit opens all of B(Y_t, 1)."""

    kind = "obt"

    def step(self, state: WalkState, streams: Streams) -> None:
        obt_update(state.domain, state.pos, state.t)
        srw_step(state, streams.walk)


class POBT:
    kind = "pobt"

    def __init__(self, eps: float, rule: str = "all"):
        if not 0.0 < eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {eps}")
        if rule not in RULES:
            raise ValueError(f"unknown opening rule {rule!r}")
        self.eps = eps
        self.rule = rule
        self.openings = 0
        self.boundary_visits = 0

    def step(self, state: WalkState, streams: Streams) -> None:
        dom = state.domain
        if dom.in_boundary(state.pos):
            self.boundary_visits += 1
            before = dom.n_edges
            pobt_update(dom, state.pos, state.t, self.eps, self.rule, streams.policy)
            self.openings += dom.n_edges > before
        srw_step(state, streams.walk)


# right, down, up in neighbours order for d = 2 (the left edge is excluded)
RIGHT_UP_DOWN = ((0, 1), (1, -1), (1, 1))


def _directed_edges(z: Site, dirs) -> list:
    out = []
    for axis, s in dirs:
        y = list(z)
        y[axis] += s
        out.append(edge(z, tuple(y)))
    return out


class FOBT:
    """First-visit opening: the first visit to a site opens a fixed subset of its edges.

    ``directions`` is "all" or a sequence of (axis, sign) pairs.
    """

    kind = "fobt"

    def __init__(self, directions="all"):
        self.directions = directions
        self.visited: set[Site] = set()

    def opened_at(self, z: Site) -> list:
        if self.directions == "all":
            return incident_edges(z)
        return _directed_edges(z, self.directions)

    def step(self, state: WalkState, streams: Streams) -> None:
        if state.pos not in self.visited:
            self.visited.add(state.pos)
            state.domain.add_edges(self.opened_at(state.pos), state.t + 1)
        srw_step(state, streams.walk)


class FobtBiased:
    """Planar first-visit walk opening right/up/down, pausing one step at first visits."""

    kind = "fobt-biased"

    def __init__(self):
        self.visited: set[Site] = set()

    def step(self, state: WalkState, streams: Streams) -> None:
        fobt_biased_step(state, self.visited, streams.walk)


def fobt_biased_step(state: WalkState, visited: set, rng: np.random.Generator) -> WalkState:
    """One step of the right/up/down first-visit walk (``visited`` is updated in place)."""
    if state.domain.d != 2:
        raise ModelError("the biased first-visit walk is planar (d = 2)")
    z = state.pos
    if z not in visited:
        visited.add(z)
        state.domain.add_edges(_directed_edges(z, RIGHT_UP_DOWN), state.t + 1)
        state.advance(z)
        return state
    return srw_step(state, rng)


class ROBT:
    """Remote opening: at boundary visits open up to ``max_edges`` closed edges near Y_t.

    Candidates are closed edges with both endpoints within l1 distance
    ``radius`` of Y_t and at least one endpoint already in the domain, so the
    domain stays connected.
    """

    kind = "robt"

    def __init__(self, radius: int = 2, max_edges: int = 1):
        if radius < 1 or max_edges < 1:
            raise ValueError("radius and max_edges must be >= 1")
        self.radius = radius
        self.max_edges = max_edges

    def candidates(self, dom: GrowingDomain, y: Site) -> list:
        d = dom.d
        out = []
        for off in itertools.product(range(-self.radius, self.radius + 1), repeat=d):
            if l1(off) > self.radius:
                continue
            z = tuple(a + b for a, b in zip(y, off))
            for axis in range(d):
                w = list(z)
                w[axis] += 1
                w = tuple(w)
                if l1(tuple(a - b for a, b in zip(w, y))) > self.radius:
                    continue
                e = (z, axis)
                if dom.is_open(e):
                    continue
                if dom.contains(z) or dom.contains(w):
                    out.append(e)
        return out

    def step(self, state: WalkState, streams: Streams) -> None:
        dom = state.domain
        if dom.in_boundary(state.pos):
            cand = self.candidates(dom, state.pos)
            if cand:
                k = min(self.max_edges, len(cand))
                chosen = streams.policy.choice(len(cand), size=k, replace=False)
                added = [cand[i] for i in sorted(chosen)]
                if len(added) > self.max_edges:
                    raise ModelError("remote opening exceeded its cardinality bound")
                dom.add_edges(added, state.t + 1)
        srw_step(state, streams.walk)


# -- extended SRW -----------------------------------------------------------------------


def kl_tilt(vectors: np.ndarray, mean: np.ndarray, tol: float = 1e-12, max_iter: int = 100):
    """Distribution closest to uniform (in KL) on ``vectors`` with the given mean.

    Newton on the convex dual  log sum exp(lam . v_j) - lam . m.  Returns None
    when the mean is not in the relative interior of the convex hull.
    """
    v = np.asarray(vectors, dtype=float)
    m = np.asarray(mean, dtype=float)
    if len(v) == 1:
        return np.ones(1) if np.allclose(v[0], m, atol=tol) else None
    # the mean must lie in the affine span, strictly inside every coordinate range
    c = v - v.mean(axis=0)
    coef, *_ = np.linalg.lstsq(c.T, m - v.mean(axis=0), rcond=None)
    if np.abs(c.T @ coef - (m - v.mean(axis=0))).max() > 1e-9:
        return None
    lo, hi = v.min(axis=0), v.max(axis=0)
    if np.any((lo < hi) & ((m <= lo) | (m >= hi))):
        return None
    lam = np.zeros(v.shape[1])
    for _ in range(max_iter):
        a = v @ lam
        w = np.exp(a - a.max())
        p = w / w.sum()
        mu = p @ v
        grad = mu - m
        if np.abs(grad).max() < tol:
            return p
        cov = (v * p[:, None]).T @ v - np.outer(mu, mu)
        step, *_ = np.linalg.lstsq(cov, grad, rcond=None)
        lam = lam - step
        if np.abs(step).max() < 1e-15:
            return None
        if not np.all(np.isfinite(lam)) or np.abs(lam).max() > 60:
            return None
    return None


class BoundaryPolicy:
    """Chooses Y_{t+1} among ``options`` (sites of G_t within C(Y_t)) at a boundary site."""

    def choose(self, y: Site, options: list, state: WalkState, rng: np.random.Generator) -> Site:
        raise NotImplementedError


class UniformBoundary(BoundaryPolicy):
    kind = "uniform"

    def choose(self, y, options, state, rng):
        moves = [z for z in options if z != y]
        return pick(moves, rng.random())


class DriftToOrigin(BoundaryPolicy):
    """Axis moves with conditional mean -delta * y / |y|_1, closest to uniform in KL.

    If the neighbours available make that mean infeasible, the target is pulled
    toward the uniform mean (by bisection) until it becomes feasible.
    """

    kind = "drift-to-origin"

    def __init__(self, delta: float):
        if not 0.0 <= delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        self.delta = delta

    def distribution(self, y: Site, options: list) -> tuple[list, np.ndarray]:
        moves = [z for z in options if l1(tuple(a - b for a, b in zip(z, y))) == 1]
        if not moves:
            raise ModelError(f"no axis neighbour of {y} in the domain")
        v = np.array([[a - b for a, b in zip(z, y)] for z in moves], dtype=float)
        n1 = l1(y)
        target = -self.delta * np.asarray(y, dtype=float) / n1 if n1 else np.zeros(len(y))
        base = v.mean(axis=0)
        p = kl_tilt(v, target)
        if p is None:
            lo, hi = 0.0, 1.0
            p = np.full(len(moves), 1.0 / len(moves))
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                q = kl_tilt(v, base + mid * (target - base))
                if q is None:
                    hi = mid
                else:
                    lo, p = mid, q
        return moves, p

    def choose(self, y, options, state, rng):
        moves, p = self.distribution(y, options)
        i = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
        return moves[min(i, len(moves) - 1)]


class Scripted(BoundaryPolicy):
    kind = "scripted"

    def __init__(self, script: Callable[[WalkState], Site]):
        self.script = script

    def choose(self, y, options, state, rng):
        return tuple(self.script(state))


def check_radius(x: Site, r: int, c: float) -> None:
    """1 <= r <= c |x|_1 (r = 1 is always admitted so unit neighbourhoods work near 0)."""
    if r < 1 or (r > 1 and r > c * l1(x)):
        raise ModelError(f"C({x}) radius {r} violates 1 <= r <= {c}*|x|_1")


def extended_boundary_step(state: WalkState, policy: BoundaryPolicy, rng: np.random.Generator,
                           radius_fn: Callable[[Site], int] = lambda x: 1, c: float = 0.5) -> WalkState:
    """Off the boundary an SRW step; on it, the policy's choice in G_t within B(Y_t, r(Y_t))."""
    if not 0 < c < 1:
        raise ValueError("contraction c must lie in (0, 1)")
    dom = state.domain
    y = state.pos
    if not dom.in_boundary(y):
        return srw_step(state, rng)
    r = int(radius_fn(y))
    check_radius(y, r, c)
    options = []
    for off in itertools.product(range(-r, r + 1), repeat=dom.d):
        if l1(off) <= r:
            z = tuple(a + b for a, b in zip(y, off))
            if dom.contains(z) and (dom.rule is None or z in dom.sites):
                options.append(z)
    target = policy.choose(y, options, state, rng)
    if target not in options:
        raise ModelError(f"policy proposed {target}, outside G_t within C({y})")
    state.advance(target)
    return state


class ExtendedSRW:
    """Extended SRW, optionally combined with open-by-touch growth after the move choice."""

    kind = "extended"

    def __init__(self, boundary: BoundaryPolicy, radius_fn: Callable[[Site], int] = lambda x: 1,
                 c: float = 0.5, growth: Optional[str] = None):
        if not 0 < c < 1:
            raise ValueError("contraction c must lie in (0, 1)")
        if growth not in (None, "obt"):
            raise ValueError(f"unknown growth rule {growth!r}")
        self.boundary = boundary
        self.radius_fn = radius_fn
        self.c = c
        self.growth = growth

    def step(self, state: WalkState, streams: Streams) -> None:
        t, y = state.t, state.pos
        on_boundary = state.domain.in_boundary(y)
        extended_boundary_step(state, self.boundary, streams.policy if on_boundary else streams.walk,
                               self.radius_fn, self.c)
        if self.growth == "obt" and on_boundary:
            state.domain.open_all_at(y, t + 1)


def conv_obt_fixture(c: float = 0.5, n: int = 12):
    """Line domain and script along which the walker marches away from 0.

    Positions (s_t, 0) with s_1 = 2 and s_{t+1} = s_t + floor(c s_t); every
    jump has length in [1, c |Y_t|_1], and all sites of the segment are
    boundary sites of the planar line graph.
    """
    s = [2]
    for _ in range(n - 1):
        s.append(s[-1] + int(c * s[-1]))
    dom = induced(2, [(x, 0) for x in range(0, s[-1] + 1)])
    nxt = {s[i]: s[i + 1] for i in range(n - 1)}

    def script(state: WalkState) -> Site:
        return (nxt[state.pos[0]], 0)

    def radius(x: Site) -> int:
        return max(1, int(c * l1(x)))

    policy = ExtendedSRW(Scripted(script), radius_fn=radius, c=c)
    return dom, policy, [(v, 0) for v in s]


# -- coupled biased walk ------------------------------------------------------------------------


@dataclass
class CoupledPair:
    E: WalkState
    E_path: np.ndarray
    R: np.ndarray
    diff1: np.ndarray
    snn_times: list = field(default_factory=list)
    snn_left_in_d0: list = field(default_factory=list)
    violations: int = 0


def coupled_biased_walk(D0: GrowingDomain, horizon: int, rng: np.random.Generator) -> CoupledPair:
    """Couple the right/up/down first-visit walk E with a free planar SRW R.

    At first visits E pauses and so does R.  Otherwise one uniform u drives
    both: with E's left edge open they take the same step int(4u); with it
    closed, slot int(12u) < 9 gives both the same right/down/up step and the
    three remaining slots send E right/down/up while R steps left.
    """
    if D0.d != 2:
        raise ModelError("the coupled walk is planar (d = 2)")
    dom = D0
    E = WalkState.start(dom)
    R = (0, 0)
    visited: set[Site] = set()
    e_path = [E.pos]
    r_path = [R]
    diff = [0]
    snn, snn_d0 = [], []
    violations = 0
    moves = neighbors((0, 0))
    for t in range(horizon):
        z = E.pos
        left = (z[0] - 1, z[1])
        if z not in visited:
            if left not in visited:
                snn.append(t)
                # left is unvisited, so its edge to z can only be open through D0
                snn_d0.append(dom.is_open(edge(left, z)))
            fobt_biased_step(E, visited, rng)
        else:
            u = rng.random()
            if dom.is_open(edge(left, z)):
                je = jr = int(u * 4)
            else:
                s = int(u * 12)
                je = 1 + (s // 3 if s < 9 else s - 9)
                jr = je if s < 9 else 0
            E.advance(tuple(a + b for a, b in zip(z, moves[je])))
            R = tuple(a + b for a, b in zip(R, moves[jr]))
        e_path.append(E.pos)
        r_path.append(R)
        dnew = E.pos[0] - R[0]
        violations += dnew < diff[-1]
        diff.append(dnew)
    return CoupledPair(E, np.array(e_path, dtype=np.int64), np.array(r_path, dtype=np.int64),
                       np.array(diff, dtype=np.int64), snn, snn_d0, violations)


@dataclass
class CoupledRun:
    checkpoints: np.ndarray
    diff1: np.ndarray
    n0: np.ndarray
    last_return: np.ndarray
    violations: int
    snn: int
    snn_free: int
    stays: int
    e_counts: np.ndarray
    r_counts: np.ndarray
    E_path: Optional[np.ndarray] = None
    R_path: Optional[np.ndarray] = None


def coupled_biased_run(p: float, domain_seed: int, horizon: int, rng: np.random.Generator,
                       checkpoints=None, keep_path: bool = False) -> CoupledRun:
    """Compiled coupled walk on a Bernoulli(p) initial domain (p = 0: empty D0)."""
    from .walker import pow2_checkpoints

    cps = np.asarray(pow2_checkpoints(horizon) if checkpoints is None else checkpoints, dtype=np.int64)
    n = horizon + 1 if keep_path else 0
    te = np.zeros((n, 2), dtype=np.int64)
    tr = np.zeros((n, 2), dtype=np.int64)
    out = kernels.coupled_kernel(rng, float(p), np.uint64(domain_seed), horizon, cps, te, tr, coord_bits(2))
    diff, n0, last, viol, snn, snn_free, stays, ec, rc = out
    return CoupledRun(cps, diff, n0, last, int(viol), int(snn), int(snn_free), int(stays), ec, rc,
                      te if keep_path else None, tr if keep_path else None)


def coupled_domain(p: float, domain_seed: int) -> GrowingDomain:
    """The initial planar domain used by :func:`coupled_biased_run`, for the Python engine."""
    return bernoulli_domain(p, 0, domain_seed, d=2)
