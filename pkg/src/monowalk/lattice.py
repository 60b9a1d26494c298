"""Z^d geometry and the monotone growing-domain data structure.

Sites are plain tuples of ints.  An edge is stored canonically as
``(lower, axis)`` where ``lower`` is the endpoint with the smaller coordinate
along ``axis``; that pair is also what gets hashed for lazy Bernoulli reveals.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from collections.abc import Iterable
from fractions import Fraction
from typing import Optional

from .rng import edge_uniform

Site = tuple[int, ...]
Edge = tuple[Site, int]

MAX_DIM = 4


class ModelError(RuntimeError):
    """Raised when a walk is asked to do something the model forbids."""


def check_dim(d: int) -> int:
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {d}")
    return d


def origin(d: int) -> Site:
    return (0,) * d


def neighbors(z: Site, d: Optional[int] = None) -> list[Site]:
    """The 2d lattice neighbours of ``z``: axis ascending, minus before plus."""
    d = len(z) if d is None else d
    out = []
    for i in range(d):
        lo = list(z)
        lo[i] -= 1
        hi = list(z)
        hi[i] += 1
        out.append(tuple(lo))
        out.append(tuple(hi))
    return out


def l1(z: Iterable[int]) -> int:
    return sum(abs(c) for c in z)


def linf(z: Iterable[int]) -> int:
    return max((abs(c) for c in z), default=0)


def edge(x: Site, y: Site) -> Edge:
    """Canonical id of the lattice edge {x, y}."""
    if len(x) != len(y):
        raise ValueError("endpoints live in different dimensions")
    diff = [b - a for a, b in zip(x, y)]
    if sum(abs(c) for c in diff) != 1:
        raise ValueError(f"{x} and {y} are not lattice neighbours")
    axis = next(i for i, c in enumerate(diff) if c)
    return (x, axis) if diff[axis] == 1 else (y, axis)


def endpoints(e: Edge) -> tuple[Site, Site]:
    lower, axis = e
    upper = list(lower)
    upper[axis] += 1
    return lower, tuple(upper)


def incident_edges(z: Site) -> list[Edge]:
    """Edges at ``z`` in :func:`neighbors` order."""
    out = []
    for i in range(len(z)):
        lo = list(z)
        lo[i] -= 1
        out.append((tuple(lo), i))
        out.append((z, i))
    return out


def coord_bits(d: int) -> int:
    return 60 // d


def site_key(z: Site) -> int:
    """Injective non-negative integer code of a site (|coords| < 2**(60//d - 1))."""
    bits = coord_bits(len(z))
    off = 1 << (bits - 1)
    key = 0
    for i, c in enumerate(z):
        if not -off <= c < off:
            raise ValueError(f"coordinate {c} out of encodable range for d={len(z)}")
        key |= (c + off) << (bits * i)
    return key


def edge_key(e: Edge) -> int:
    lower, axis = e
    return site_key(lower) * 8 + axis


class BernoulliRule:
    """Each edge of Z^d initially open with probability ``p``, as a pure hash."""

    def __init__(self, p: float, seed: int):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {p}")
        self.p = float(p)
        self.seed = int(seed)

    def __call__(self, e: Edge) -> bool:
        if self.p >= 1.0:
            return True
        return edge_uniform(self.seed, edge_key(e)) < self.p

    def __repr__(self):
        return f"BernoulliRule(p={self.p}, seed={self.seed})"


class GrowingDomain:
    """Monotone subgraph of Z^d with per-site degrees and the boundary set.

    Closed-world domains (``rule=None``) hold exactly the sites and edges added
    to them.  Domains built on a :class:`BernoulliRule` contain every site of
    Z^d; edges are decided by the rule the first time a site is *revealed*, and
    ``sites``, ``degree`` and ``boundary`` then describe the revealed region.
    """

    def __init__(self, d: int, rule: Optional[BernoulliRule] = None):
        self.d = check_dim(d)
        self.full_degree = 2 * d
        self.rule = rule
        self.open_edges: set[Edge] = set()
        self.sites: set[Site] = set()
        self.degree: dict[Site, int] = {}
        self.boundary: set[Site] = set()
        self.growth_log: list[tuple[int, tuple[Edge, ...]]] = []
        self._decided: set[Edge] = set()
        self._logged_at: dict[Edge, int] = {}
        self._rev: set[Site] = set()
        # effective times: z is in the boundary of G_s iff born[z] <= s < filled[z]
        self.born: dict[Site, int] = {}
        self.filled: dict[Site, int] = {}
        self._now = 0

    # -- construction helpers -------------------------------------------------
    def _touch(self, z: Site) -> None:
        if z not in self.sites:
            self.sites.add(z)
            self.degree[z] = 0
            self.boundary.add(z)
            self.born[z] = self._now

    def _open(self, e: Edge) -> bool:
        if e in self.open_edges:
            return False
        self.open_edges.add(e)
        self._decided.add(e)
        for z in endpoints(e):
            self._touch(z)
            self.degree[z] += 1
            if self.degree[z] >= self.full_degree:
                self.boundary.discard(z)
                self.filled[z] = self._now
        return True

    def add_sites(self, sites: Iterable[Site]) -> None:
        """Add isolated sites (no log entry); used to build initial domains."""
        for z in sites:
            if len(z) != self.d:
                raise ValueError(f"site {z} has wrong dimension")
            if self.rule is not None:
                self.reveal(z)
            else:
                self._touch(tuple(z))

    def reveal(self, z: Site) -> None:
        """Decide every edge at ``z`` from the initial rule (no-op without one)."""
        if self.rule is None or z in self._rev:
            return
        now, self._now = self._now, 0
        self._touch(z)
        for e in incident_edges(z):
            if e not in self._decided:
                self._decided.add(e)
                if self.rule(e):
                    self._open(e)
        self._rev.add(z)
        self._now = now

    # -- queries ----------------------------------------------------------------
    def is_open(self, e: Edge) -> bool:
        if self.rule is not None and e not in self._decided:
            self.reveal(e[0])
        return e in self.open_edges

    def contains(self, z: Site) -> bool:
        if self.rule is not None:
            return True
        return z in self.sites

    def deg(self, z: Site) -> int:
        self.reveal(z)
        return self.degree.get(z, 0)

    def in_boundary(self, z: Site) -> bool:
        self.reveal(z)
        return z in self.boundary

    def open_neighbors(self, z: Site) -> list[Site]:
        """Neighbours across open edges, in :func:`neighbors` order."""
        self.reveal(z)
        out = []
        for y, e in zip(neighbors(z), incident_edges(z)):
            if e in self.open_edges:
                out.append(y)
        return out

    def closed_edges_at(self, z: Site) -> list[Edge]:
        self.reveal(z)
        return [e for e in incident_edges(z) if e not in self.open_edges]

    def boundary_snapshot(self) -> frozenset:
        return frozenset(self.boundary)

    def in_boundary_at(self, z: Site, s: int) -> bool:
        """Was ``z`` in the boundary of G_s?  (Exact for revealed/closed-world sites.)"""
        self.reveal(z)
        b = self.born.get(z)
        if b is None or b > s:
            return False
        f = self.filled.get(z)
        return f is None or f > s

    def boundary_at(self, s: int) -> set[Site]:
        return {z for z, b in self.born.items() if b <= s and self.filled.get(z, s + 1) > s}

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_edges(self) -> int:
        return len(self.open_edges)

    # -- mutation ------------------------------------------------------------------
    def add_edges(self, edges: Iterable[Edge], t: int) -> "GrowingDomain":
        """Open ``edges`` effective from time ``t`` on; already-open edges are ignored.

        Policies reacting to the walker at time ``t`` log their growth at
        ``t + 1``: the edges belong to G_{t+1}.
        """
        added = []
        for e in edges:
            lower, axis = e
            if len(lower) != self.d or not 0 <= axis < self.d:
                raise ValueError(f"invalid edge {e} for d={self.d}")
            lower = tuple(lower)
            e = (lower, axis)
            if self.rule is not None:
                for z in endpoints(e):
                    self.reveal(z)
            self._now = t
            if self._open(e):
                added.append(e)
                self._logged_at[e] = t
        self.growth_log.append((t, tuple(added)))
        return self

    def open_all_at(self, z: Site, t: int) -> int:
        """Open every edge of B(z, 1); returns how many were newly opened."""
        before = len(self.open_edges)
        self.add_edges(incident_edges(z), t)
        return len(self.open_edges) - before

    def add_probed_site(self, y: Site, t: int) -> list[Edge]:
        """Add site ``y`` and every edge joining it to the current sites."""
        if self.rule is not None:
            raise ModelError("probing is defined on closed-world domains only")
        self._now = t
        self._touch(y)
        new = [e for x, e in zip(neighbors(y), incident_edges(y)) if x in self.sites and x != y]
        self.add_edges(new, t)
        return new

    # -- history ---------------------------------------------------------------------
    def edges_at(self, t: int) -> set[Edge]:
        """Open edges as they stood after all growth logged at times <= t."""
        return {e for e in self.open_edges if self._logged_at.get(e, -1) <= t}

    def copy(self) -> "GrowingDomain":
        new = GrowingDomain(self.d, self.rule)
        new.open_edges = set(self.open_edges)
        new.sites = set(self.sites)
        new.degree = dict(self.degree)
        new.boundary = set(self.boundary)
        new.growth_log = list(self.growth_log)
        new._decided = set(self._decided)
        new._logged_at = dict(self._logged_at)
        new._rev = set(self._rev)
        new.born = dict(self.born)
        new.filled = dict(self.filled)
        return new

    def recompute(self) -> tuple[dict[Site, int], set[Site]]:
        """Degrees and boundary rebuilt from ``open_edges`` alone."""
        degree = {z: 0 for z in self.sites}
        for e in self.open_edges:
            for z in endpoints(e):
                degree[z] = degree.get(z, 0) + 1
        boundary = {z for z, k in degree.items() if k < self.full_degree}
        return degree, boundary

    def check(self) -> None:
        degree, boundary = self.recompute()
        if self.rule is None:
            assert degree == self.degree, "degree map out of sync"
            assert boundary == self.boundary, "boundary out of sync"
            for e in self.open_edges:
                assert all(z in self.sites for z in endpoints(e))
        else:
            rev = self._rev
            assert {z: degree[z] for z in rev} == {z: self.degree[z] for z in rev}
            assert boundary & rev == self.boundary & rev

    def growth_log_jsonl(self) -> str:
        lines = []
        for t, edges in self.growth_log:
            rec = {"t": t, "edges": [[list(a), list(b)] for a, b in map(endpoints, edges)]}
            lines.append(json.dumps(rec, separators=(",", ":")))
        return "\n".join(lines) + ("\n" if lines else "")

    def replay_jsonl(self, text: str) -> "GrowingDomain":
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            self.add_edges((edge(tuple(a), tuple(b)) for a, b in rec["edges"]), rec["t"])
        return self

    def __repr__(self):
        return f"GrowingDomain(d={self.d}, sites={self.n_sites}, edges={self.n_edges}, boundary={len(self.boundary)})"


# -- constructors -----------------------------------------------------------------


def _box(d: int, r: int) -> Iterable[Site]:
    return itertools.product(range(-r, r + 1), repeat=d)


def _ball_test(metric: str, r):
    rf = Fraction(r)
    if metric == "graph":
        bound = int(rf)  # floor for r >= 0

        def inside(z):
            return l1(z) <= bound
    elif metric in ("euclidean", "euclidean-projected"):
        num, den = rf.numerator, rf.denominator

        def inside(z):
            return sum(c * c for c in z) * den * den <= num * num
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return inside


def induced(d: int, sites: Iterable[Site]) -> GrowingDomain:
    """Domain on ``sites`` with every lattice edge between them open."""
    dom = GrowingDomain(d)
    sites = {tuple(z) for z in sites}
    dom.add_sites(sites)
    for z in sites:
        for i in range(d):
            y = list(z)
            y[i] += 1
            if tuple(y) in sites:
                dom._open((z, i))
    return dom


def ball(center: Site, r, metric: str = "graph") -> GrowingDomain:
    """All sites within distance ``r`` of ``center`` and every edge between them."""
    if r < 1:
        raise ValueError(f"ball radius must be >= 1, got {r}")
    d = len(center)
    inside = _ball_test(metric, r)
    R = int(Fraction(r)) + 1
    sites = [tuple(c + o for c, o in zip(center, z)) for z in _box(d, R) if inside(z)]
    return induced(d, sites)


def box(d: int, halfwidth: int) -> GrowingDomain:
    return induced(d, _box(d, halfwidth))


def bernoulli_domain(p: float, box_halfwidth: int, seed: int, d: int = 2) -> GrowingDomain:
    """Every site of Z^d, each edge open independently with probability ``p``.

    Sites of ``[-box_halfwidth, box_halfwidth]^d`` are revealed up front; the
    rest are revealed on first query with the same per-edge hash decision.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    dom = GrowingDomain(d, BernoulliRule(p, seed))
    for z in _box(d, box_halfwidth):
        dom.reveal(z)
    return dom


def full_lattice(d: int) -> GrowingDomain:
    """Z^d with every edge open (boundary is empty everywhere)."""
    return GrowingDomain(d, BernoulliRule(1.0, 0))


def graph_distance(dom: GrowingDomain, a: Site, b: Site, cap: Optional[int] = None) -> Optional[int]:
    """BFS distance from ``a`` to ``b`` inside ``dom``; None if beyond ``cap`` or unreachable."""
    if a == b:
        return 0
    seen = {a}
    frontier = deque([(a, 0)])
    while frontier:
        z, k = frontier.popleft()
        if cap is not None and k >= cap:
            continue
        for y in dom.open_neighbors(z):
            if y in seen:
                continue
            if y == b:
                return k + 1
            seen.add(y)
            frontier.append((y, k + 1))
    return None
