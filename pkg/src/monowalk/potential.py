"""Exact discrete potential theory on finite pieces of Z^d.

Hitting probabilities are solved on the symmetric system (graph Laplacian
restricted to the free sites).  Two routes exist on purpose: a sparse one
(direct LU or conjugate gradients, both with iterative refinement) and
:func:`solve_dense`, which assembles the transition matrix site by site and
calls LAPACK.  Tests hold them against each other.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .lattice import GrowingDomain, Site, endpoints, l1

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


# -- problem description ------------------------------------------------------------------


@dataclass
class DirichletProblem:
    """Hitting problem on a finite set of sites stored as a dense box mask.

    ``edges[i][z]`` says whether the edge z -- z+e_i is open (None: every
    lattice edge between domain sites).  Sites in ``target`` pay 1, sites in
    ``killing`` pay 0, sites in ``shell`` pay ``shell_value``.
    """

    mask: np.ndarray
    offset: tuple
    target: np.ndarray
    killing: np.ndarray
    start: Optional[Site] = None
    edges: Optional[list] = None
    shell: Optional[np.ndarray] = None
    shell_value: float = 0.0

    def __post_init__(self):
        if np.any(self.target & self.killing):
            raise ValueError("target and killing sets overlap")
        if self.shell is None:
            self.shell = np.zeros_like(self.mask)

    @property
    def d(self) -> int:
        return self.mask.ndim

    def index(self, z: Site) -> Optional[tuple]:
        if len(z) != self.mask.ndim:
            raise ValueError(f"site {z} does not have dimension {self.mask.ndim}")
        idx = tuple(c - o for c, o in zip(z, self.offset))
        if all(0 <= i < n for i, n in zip(idx, self.mask.shape)) and self.mask[idx]:
            return idx
        return None

    def site(self, idx) -> Site:
        return tuple(int(i) + o for i, o in zip(idx, self.offset))

    def open_along(self, axis: int) -> np.ndarray:
        """Boolean array over the mask: edge z -- z+e_axis open (False on the far face)."""
        if self.edges is not None:
            return self.edges[axis]
        m = self.mask
        out = np.zeros_like(m)
        lo = [slice(None)] * m.ndim
        hi = [slice(None)] * m.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] = m[tuple(lo)] & m[tuple(hi)]
        return out

    # -- constructors ---------------------------------------------------------------
    @classmethod
    def from_sites(cls, sites: Iterable[Site], target: Iterable[Site] = (), killing: Iterable[Site] = (),
                   start: Optional[Site] = None, open_edges=None, shell: Iterable[Site] = (),
                   shell_value: float = 0.0) -> "DirichletProblem":
        sites = [tuple(z) for z in sites]
        if not sites:
            raise ValueError("empty domain")
        d = len(sites[0])
        arr = np.array(sites, dtype=np.int64).reshape(-1, d)
        lo = arr.min(axis=0)
        shape = tuple(int(s) for s in arr.max(axis=0) - lo + 1)
        offset = tuple(int(c) for c in lo)
        mask = np.zeros(shape, dtype=bool)
        mask[tuple((arr - lo).T)] = True

        def sub(zs):
            out = np.zeros(shape, dtype=bool)
            for z in zs:
                idx = tuple(c - o for c, o in zip(z, offset))
                if not all(0 <= i < n for i, n in zip(idx, shape)) or not mask[idx]:
                    raise ValueError(f"site {z} is not in the domain")
                out[idx] = True
            return out

        edges = None
        if open_edges is not None:
            edges = [np.zeros(shape, dtype=bool) for _ in range(d)]
            for e in open_edges:
                a, b = endpoints(e)
                ia = tuple(c - o for c, o in zip(a, offset))
                ib = tuple(c - o for c, o in zip(b, offset))
                inside = all(0 <= i < n for i, n in zip(ia, shape)) and all(0 <= i < n for i, n in zip(ib, shape))
                if inside and mask[ia] and mask[ib]:
                    edges[e[1]][ia] = True
        return cls(mask, offset, sub(target), sub(killing), None if start is None else tuple(start),
                   edges, sub(shell), shell_value)

    @classmethod
    def from_domain(cls, domain: GrowingDomain, target: Iterable[Site], killing: Iterable[Site],
                    start: Optional[Site] = None) -> "DirichletProblem":
        return cls.from_sites(domain.sites, target, killing, start, open_edges=domain.open_edges)


def ball_mask(d: int, radius, metric: str = "euclidean") -> tuple[np.ndarray, tuple]:
    """Mask of the (projected) ball of radius ``radius`` about 0 and its offset."""
    r = Fraction(radius)
    R = int(r) + 1
    axes = np.meshgrid(*([np.arange(-R, R + 1)] * d), indexing="ij")
    if metric == "graph":
        mask = sum(np.abs(a) for a in axes) * r.denominator <= r.numerator
    elif metric in ("euclidean", "euclidean-projected"):
        mask = sum(a.astype(np.int64) ** 2 for a in axes) * r.denominator ** 2 <= r.numerator ** 2
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return mask, (-R,) * d


def inner_boundary(mask: np.ndarray) -> np.ndarray:
    """Sites of ``mask`` with at least one lattice neighbour outside it."""
    padded = np.pad(mask, 1, constant_values=False)
    full = np.ones_like(mask)
    core = tuple(slice(1, -1) for _ in range(mask.ndim))
    for axis in range(mask.ndim):
        for s in (-1, 1):
            full &= np.roll(padded, s, axis=axis)[core]
    return mask & ~full


def ring_inside(mask: np.ndarray, boundary: np.ndarray) -> np.ndarray:
    """Sites of ``mask`` at graph distance exactly one from ``boundary``."""
    padded = np.pad(boundary, 1, constant_values=False)
    near = np.zeros_like(mask)
    core = tuple(slice(1, -1) for _ in range(mask.ndim))
    for axis in range(mask.ndim):
        for s in (-1, 1):
            near |= np.roll(padded, s, axis=axis)[core]
    return mask & ~boundary & near


def ball_problem(d: int, radius, metric: str = "euclidean", start: Optional[Site] = None) -> DirichletProblem:
    """Hit 0 before the inner boundary of the ball B(0, radius)."""
    mask, offset = ball_mask(d, radius, metric)
    killing = inner_boundary(mask)
    target = np.zeros_like(mask)
    target[tuple(-o for o in offset)] = True
    killing &= ~target
    return DirichletProblem(mask, offset, target, killing, start)


# -- solution ----------------------------------------------------------------------------


@dataclass
class HitSolution:
    value: Optional[float]
    field: np.ndarray
    residual: float
    n_unknowns: int
    method: str
    problem: DirichletProblem = field(repr=False)

    def at(self, z: Site) -> float:
        idx = self.problem.index(z)
        if idx is None:
            raise KeyError(f"{z} is outside the domain")
        return float(self.field[idx])


def _assemble(p: DirichletProblem):
    mask = p.mask
    fixed = p.target | p.killing | p.shell
    free = mask & ~fixed
    idx = np.full(mask.shape, -1, dtype=np.int64)
    n = int(free.sum())
    idx[free] = np.arange(n)
    bval = np.zeros(mask.shape)
    bval[p.target] = 1.0
    bval[p.shell] = p.shell_value
    deg = np.zeros(n)
    rhs = np.zeros(n)
    anchor = np.zeros(n, dtype=bool)
    rows, cols = [], []
    for axis in range(p.d):
        op = p.open_along(axis)
        lo = [slice(None)] * p.d
        hi = [slice(None)] * p.d
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        e = op[tuple(lo)]
        a = idx[tuple(lo)][e]
        b = idx[tuple(hi)][e]
        fa = fixed[tuple(lo)][e]
        fb = fixed[tuple(hi)][e]
        va = bval[tuple(lo)][e]
        vb = bval[tuple(hi)][e]
        np.add.at(deg, a[a >= 0], 1.0)
        np.add.at(deg, b[b >= 0], 1.0)
        both = (a >= 0) & (b >= 0)
        rows.append(a[both])
        cols.append(b[both])
        m = (a >= 0) & fb
        np.add.at(rhs, a[m], vb[m])
        anchor[a[m]] = True
        m = (b >= 0) & fa
        np.add.at(rhs, b[m], va[m])
        anchor[b[m]] = True
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    off = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n)).tocsr()
    off = off + off.T
    return free, idx, deg, rhs, anchor, off, bval


def solve_hit_probability(problem: DirichletProblem, method: str = "auto", tol: float = 1e-13,
                          maxiter: Optional[int] = None) -> HitSolution:
    """Probability of reaching the target before the killing set, from every site.

    ``method`` is "direct" (sparse LU), "cg" (Jacobi-preconditioned conjugate
    gradients) or "auto" (LU below 40k unknowns).  Both finish with iterative
    refinement until the harmonicity residual is below ``tol``.
    """
    p = problem
    free, idx, deg, rhs, anchor, off, bval = _assemble(p)
    n = deg.size
    field_ = np.full(p.mask.shape, np.nan)
    field_[p.mask & ~free] = bval[p.mask & ~free]
    if p.start is not None and p.index(p.start) is None:
        raise SolverError(f"start {p.start} is not in the domain")
    if n == 0:
        val = None if p.start is None else float(field_[p.index(p.start)])
        return HitSolution(val, field_, 0.0, 0, "trivial", p)

    ncomp, labels = csgraph.connected_components(off, directed=False)
    good_comp = np.zeros(ncomp, dtype=bool)
    good_comp[labels[anchor]] = True
    keep = good_comp[labels]
    if p.start is not None:
        si = idx[p.index(p.start)]
        if si >= 0 and not keep[si]:
            raise SolverError(f"start {p.start} cannot reach the target or killing set")
    A = (sp.diags(deg) - off).tocsr()[keep][:, keep]
    b = rhs[keep]
    m = A.shape[0]
    if method == "auto":
        method = "direct" if m < 40_000 else "cg"
    if method == "direct":
        lu = spla.splu(A.tocsc())
        solve = lu.solve
    elif method == "cg":
        dinv = 1.0 / A.diagonal()
        pre = spla.LinearOperator(A.shape, matvec=lambda x: dinv * x)
        it = maxiter or max(1000, 20 * int(round(m ** (1.0 / max(p.d, 1)))) ** 2)

        def solve(rhs_):
            x, info = spla.cg(A, rhs_, rtol=1e-14, atol=0.0, M=pre, maxiter=it)
            return x
    else:
        raise ValueError(f"unknown method {method!r}")
    dg = A.diagonal()
    x = solve(b)
    res = np.abs(A @ x - b) / dg
    for _ in range(8):
        if res.max(initial=0.0) < tol:
            break
        x = x + solve(b - A @ x)
        res = np.abs(A @ x - b) / dg
    residual = float(res.max(initial=0.0))
    if not np.all(np.isfinite(x)):
        raise SolverError("singular system")
    full = np.full(n, np.nan)
    full[keep] = x
    field_[free] = full
    val = None if p.start is None else float(field_[p.index(p.start)])
    return HitSolution(val, field_, residual, m, method, p)


def solve_dense(problem: DirichletProblem) -> HitSolution:
    """Oracle: site-by-site transition matrix and a dense LAPACK solve (small systems)."""
    p = problem
    sites = [tuple(i) for i in np.argwhere(p.mask)]
    fixed = p.target | p.killing | p.shell
    free = [s for s in sites if not fixed[s]]
    pos = {s: i for i, s in enumerate(free)}
    n = len(free)
    if n > 5000:
        raise SolverError("dense oracle limited to 5000 unknowns")
    opens = [p.open_along(a) for a in range(p.d)]
    P = np.zeros((n, n))
    r = np.zeros(n)
    for s in free:
        nbrs = []
        for a in range(p.d):
            down = list(s)
            down[a] -= 1
            down = tuple(down)
            if down[a] >= 0 and opens[a][down]:
                nbrs.append(down)
            if opens[a][s]:
                up = list(s)
                up[a] += 1
                nbrs.append(tuple(up))
        i = pos[s]
        for y in nbrs:
            w = 1.0 / len(nbrs)
            if y in pos:
                P[i, pos[y]] += w
            elif p.target[y]:
                r[i] += w
            elif p.shell[y]:
                r[i] += w * p.shell_value
    field_ = np.full(p.mask.shape, np.nan)
    field_[p.target] = 1.0
    field_[p.killing] = 0.0
    field_[p.shell] = p.shell_value
    h = np.linalg.solve(np.eye(n) - P, r) if n else np.zeros(0)
    for s, v in zip(free, h):
        field_[s] = v
    resid = float(np.abs(h - P @ h - r).max(initial=0.0))
    val = None if p.start is None else float(field_[p.index(p.start)])
    return HitSolution(val, field_, resid, n, "dense", p)


def harmonic_residual(sol: HitSolution) -> float:
    """sup over free sites of |h(x) - mean of h over open neighbours|."""
    p = sol.problem
    free = p.mask & ~(p.target | p.killing | p.shell) & np.isfinite(sol.field)
    acc = np.zeros(p.mask.shape)
    cnt = np.zeros(p.mask.shape)
    h = np.nan_to_num(sol.field)
    for a in range(p.d):
        op = p.open_along(a)
        lo = [slice(None)] * p.d
        hi = [slice(None)] * p.d
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        e = op[tuple(lo)]
        acc[tuple(lo)] += np.where(e, h[tuple(hi)], 0.0)
        cnt[tuple(lo)] += e
        acc[tuple(hi)] += np.where(e, h[tuple(lo)], 0.0)
        cnt[tuple(hi)] += e
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = np.abs(h - acc / cnt)
    return float(diff[free & (cnt > 0)].max(initial=0.0))


def hitting_measure(sites: Iterable[Site], start: Site) -> dict[Site, float]:
    """Exact exit distribution of SRW on Z^d from ``start`` out of the finite set ``sites``.

    One Dirichlet solve per exterior boundary site, on the domain plus its
    outer boundary with that site as target.
    """
    inside = {tuple(z) for z in sites}
    outer = set()
    for z in inside:
        for a in range(len(z)):
            for s in (-1, 1):
                y = list(z)
                y[a] += s
                y = tuple(y)
                if y not in inside:
                    outer.add(y)
    allsites = inside | outer
    # edges only between an interior site and anything (walk stops at the exterior)
    edges = set()
    for z in inside:
        for a in range(len(z)):
            y = list(z)
            y[a] += 1
            y = tuple(y)
            if y in allsites:
                edges.add((z, a))
            w = list(z)
            w[a] -= 1
            w = tuple(w)
            if w in outer:
                edges.add((w, a))
    out = {}
    for x in sorted(outer):
        prob = DirichletProblem.from_sites(allsites, target=[x], killing=outer - {x}, start=start,
                                           open_edges=edges)
        out[x] = solve_hit_probability(prob, method="direct").value
    return out


# -- green-function bound --------------------------------------------------------------------

_CONST_FILE = "hit_constants.json"


def calibrate_hit_constant(d: int, radius: int, safety: float = 1.25) -> dict:
    """Constant c_d with P_y(SRW ever hits 0) <= c_d |y|_1^{2-d}, from an exact solve.

    The escape beyond the ball is accounted for by a dyadic shell correction:
    the worst hit probability from the outer half of B(0, R) is scaled down by
    2^{2-d} per doubling and summed.
    """
    if d < 3:
        raise ValueError("the bound needs a transient lattice (d >= 3)")
    sol = solve_hit_probability(ball_problem(d, radius), method="cg")
    mask, offset = sol.problem.mask, sol.problem.offset
    coords = np.argwhere(mask) + np.array(offset)
    vals = sol.field[mask]
    norm2 = (coords.astype(float) ** 2).sum(axis=1)
    n1 = np.abs(coords).sum(axis=1)
    ratio = 2.0 ** (2 - d)
    outer = vals[(norm2 >= (radius / 2) ** 2) & np.isfinite(vals) & (vals < 1)]
    correction = float(outer.max()) * ratio / (1 - ratio)
    sample = (n1 >= 1) & (n1 <= radius // 2)
    c = float(((vals[sample] + correction) * n1[sample] ** (d - 2.0)).max()) * safety
    return {"radius": radius, "safety": safety, "correction": correction, "c": c}


def _load_constants() -> dict:
    try:
        text = resources.files("monowalk.data").joinpath(_CONST_FILE).read_text()
    except FileNotFoundError:
        return {}
    return json.loads(text)


def hit_constant(d: int) -> float:
    consts = _load_constants()
    key = f"d{d}"
    if key not in consts.get("constants", {}):
        raise KeyError(f"no calibrated constant for d={d}; run calibrate_hit_constant")
    return float(consts["constants"][key]["c"])


def ever_hit_zero_bound(y: Site, d: Optional[int] = None, c: Optional[float] = None) -> float:
    """Upper bound c_d |y|_1^{2-d} on the probability that SRW from ``y`` ever hits 0."""
    d = len(y) if d is None else d
    if d <= 2:
        raise ValueError("ever-hit probability is 1 in d <= 2; no decaying bound")
    n1 = l1(y)
    if n1 == 0:
        raise ValueError("y must differ from the origin")
    c = hit_constant(d) if c is None else c
    return c * n1 ** (2.0 - d)


# -- criterion series ---------------------------------------------------------------------------


@dataclass
class CriterionReport:
    series: str
    k: np.ndarray
    terms: np.ndarray
    partial_sums: np.ndarray
    cutoff: int
    verdict: str
    upper_terms: Optional[np.ndarray] = None
    upper_sums: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    def rows(self):
        for i in range(len(self.k)):
            yield int(self.k[i]), float(self.terms[i]), float(self.partial_sums[i])

    def to_csv(self) -> str:
        lines = ["k,term,partial_sum"]
        lines += [f"{k},{t!r},{s!r}" for k, t, s in self.rows()]
        return "\n".join(lines) + "\n"


class Schedule:
    """Hit-count schedule k -> N(k).  Subclasses may know their growth exponent."""

    exponent: Optional[float] = None

    def values(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, k: int) -> int:
        return int(self.values(np.array([k]))[0])


class PowerSchedule(Schedule):
    """N(k) = ceil(a * k**alpha)."""

    def __init__(self, a: float = 1.0, alpha: float = 0.0):
        if a <= 0:
            raise ValueError("a must be positive")
        self.a = float(a)
        self.alpha = float(alpha)
        # ceil keeps N(k) >= 1, so negative exponents behave like constants
        self.exponent = max(self.alpha, 0.0)

    def values(self, k):
        k = np.asarray(k, dtype=float)
        return np.ceil(self.a * k ** self.alpha - 1e-9).astype(np.int64)

    def __repr__(self):
        return f"PowerSchedule(a={self.a}, alpha={self.alpha})"


class TableSchedule(Schedule):
    """Explicit counts for k = 1, 2, ...; beyond the table the last value repeats."""

    def __init__(self, table: Sequence[int]):
        self.table = np.asarray(table, dtype=np.int64)
        if self.table.size == 0:
            raise ValueError("empty schedule table")

    def values(self, k):
        k = np.asarray(k, dtype=np.int64)
        return self.table[np.minimum(k, self.table.size) - 1]


class FunctionSchedule(Schedule):
    def __init__(self, fn: Callable[[int], int]):
        self.fn = fn

    def values(self, k):
        return np.array([int(self.fn(int(i))) for i in np.asarray(k)], dtype=np.int64)


def as_schedule(N) -> Schedule:
    if isinstance(N, Schedule):
        return N
    if isinstance(N, (int, np.integer)):
        return PowerSchedule(float(N), 0.0)
    if callable(N):
        return FunctionSchedule(N)
    return TableSchedule(N)


def _power_series(series: str, N, power: float, k_max: int, force: Optional[str] = None) -> CriterionReport:
    sched = as_schedule(N)
    k = np.arange(1, k_max + 1)
    terms = sched.values(k).astype(float) * k.astype(float) ** power
    sums = np.cumsum(terms)
    if force is not None:
        verdict = force
    elif sched.exponent is not None:
        verdict = "convergent" if sched.exponent + power < -1 else "divergent"
    else:
        verdict = "undetermined"
    return CriterionReport(series, k, terms, sums, k_max, verdict)


def egs_criterion(N, d: int, k_max: int = 10_000) -> CriterionReport:
    """Partial sums of sum_k N(k) k^{1-d}; transient iff finite."""
    if k_max < 10:
        raise ValueError("k_max must be at least 10")
    # N(k) >= 1 makes the harmonic series a minorant when d <= 2
    force = "divergent" if d <= 2 else None
    return _power_series("egs", N, 1.0 - d, k_max, force)


def obt_box_criterion(N, d: int, k_max: int = 10_000) -> CriterionReport:
    """Partial sums of sum_k N(k) k^{2-d} (N(k) boundary sites on the k-th box shell)."""
    if d < 3:
        raise ValueError("the box criterion is stated for d >= 3")
    return _power_series("obt_box", N, 2.0 - d, k_max)


def box_shell_counts(sites: Iterable[Site], k_max: int) -> np.ndarray:
    """N(k) = number of given sites with sup-norm exactly k, for k = 1..k_max."""
    counts = np.zeros(k_max, dtype=np.int64)
    for z in sites:
        k = max(abs(c) for c in z)
        if 1 <= k <= k_max:
            counts[k - 1] += 1
    return counts


def s_star(boundary: Iterable[Site], d: int, radius_fn: Callable[[Site], int] = lambda x: 0,
           truncation: int = 8, solve_radius: Optional[int] = None, c: Optional[float] = None,
           contraction: float = 0.999) -> CriterionReport:
    """Bracket for sum over boundary sites x of sup_{y in C(x)} P_y(SRW ever hits 0).

    Terms with |x|_2 <= ``truncation`` are solved exactly on B(0, solve_radius)
    (lower bound) and corrected for escape through that ball (upper bound);
    farther terms only enter the upper sum, through the c_d |y|^{2-d} bound.
    """
    if d <= 2:
        raise ValueError("S-star is meaningless for recurrent lattices (d <= 2)")
    sites = sorted({tuple(x) for x in boundary}, key=lambda x: (l1(x), x))
    if not sites:
        z = np.zeros(0)
        return CriterionReport("s_star", np.zeros(0, dtype=np.int64), z, z, truncation, "convergent",
                               z, z)
    c = hit_constant(d) if c is None else c
    R = 4 * truncation if solve_radius is None else solve_radius
    sol = solve_hit_probability(ball_problem(d, R), method="auto")
    corr = c * float(R) ** (2.0 - d)
    lower, upper, ks = [], [], []
    for x in sites:
        r = int(radius_fn(x))
        if r < 0 or (r >= 1 and r > contraction * l1(x)):
            raise ValueError(f"C({x}) radius {r} must satisfy 1 <= r <= c|x|_1 with c < 1")
        ball = [x] if r == 0 else [tuple(a + b for a, b in zip(x, o))
                                   for o in itertools.product(range(-r, r + 1), repeat=d) if l1(o) <= r]
        near = sum(v * v for v in x) <= truncation ** 2
        lo = hi = 0.0
        for y in ball:
            bound = min(1.0, c * l1(y) ** (2.0 - d))
            if near and sol.problem.index(y) is not None:
                h = sol.at(y)
                lo = max(lo, h)
                hi = max(hi, min(bound, h + corr))
            else:
                hi = max(hi, bound)
        lower.append(lo)
        upper.append(hi)
        ks.append(l1(x))
    lower = np.array(lower)
    upper = np.array(upper)
    return CriterionReport("s_star", np.array(ks), lower, np.cumsum(lower), truncation, "undetermined",
                           upper, np.cumsum(upper))


def egs_bracket(N, d: int, c=1, ks: Iterable[int] = range(4, 33), metric: str = "euclidean",
                method: str = "auto") -> tuple[CriterionReport, CriterionReport]:
    """Recurrence and transience series of the glassy-sphere criterion from exact solves.

    For each k: inf over the ring C_k of P_x(hit 0 before the boundary of
    B_{ck}) and sup over C_k of P_x(hit 0 before the boundary of B_{c(k+1)}).
    ``extra`` carries the normalised values k^{d-1} P (and k log k P for d=2);
    the recurrence report also keeps the sup over C_k of the B_{ck} problem
    (``prob_sup``, ``normalized_sup``).
    """
    sched = as_schedule(N)
    ks = list(ks)
    cf = Fraction(c)
    cache: dict[int, HitSolution] = {}

    def solved(k):
        if k not in cache:
            if d == 1:
                r = cf * k
                mask, offset = ball_mask(1, r, "graph")
                kill = inner_boundary(mask)
                tgt = np.zeros_like(mask)
                tgt[-offset[0]] = True
                cache[k] = solve_hit_probability(DirichletProblem(mask, offset, tgt, kill & ~tgt), method)
            else:
                cache[k] = solve_hit_probability(ball_problem(d, cf * k, metric), method)
        return cache[k]

    inf_p, sup_p, same_sup = [], [], []
    for k in ks:
        sk = solved(k)
        mask = sk.problem.mask
        ring = ring_inside(mask, sk.problem.killing)
        inf_p.append(float(np.min(sk.field[ring])))
        same_sup.append(float(np.max(sk.field[ring])))
        sk1 = solved(k + 1)
        # ring of B_k expressed in the coordinates of the larger ball
        coords = np.argwhere(ring) + np.array(sk.problem.offset)
        idx = tuple((coords - np.array(sk1.problem.offset)).T)
        sup_p.append(float(np.max(sk1.field[idx])))
        cache.pop(k - 1, None)
    karr = np.array(ks)
    n = sched.values(karr).astype(float)
    inf_p = np.array(inf_p)
    sup_p = np.array(sup_p)
    rec = CriterionReport("egs_rec", karr, n * inf_p, np.cumsum(n * inf_p), max(ks), "undetermined")
    tra = CriterionReport("egs_trans", karr, n * sup_p, np.cumsum(n * sup_p), max(ks), "undetermined")
    scale = karr.astype(float) ** (d - 1)
    for rep, probs in ((rec, inf_p), (tra, sup_p)):
        rep.extra["prob"] = probs
        rep.extra["normalized"] = scale * probs
        if d == 2:
            rep.extra["klogk"] = karr * np.log(karr) * probs
    # sup over the ring of the same B_k problem, for the uniform two-sided bound
    rec.extra["prob_sup"] = np.array(same_sup)
    rec.extra["normalized_sup"] = scale * rec.extra["prob_sup"]
    return rec, tra


# -- the S = sum p_n estimator --------------------------------------------------------------------


def walled_problem(boundary: Iterable[Site], start: Site, halfwidth: int,
                   tail_value: float = 0.0) -> tuple[DirichletProblem, bool]:
    """SRW on Z^d from ``start`` stopped at 0 (payoff 1) or at ``boundary`` (payoff 0).

    The free region is the component of ``start`` inside the box of the given
    half-width; if it reaches the box face, that face becomes a shell paying
    ``tail_value`` and the second return value is True.
    """
    start = tuple(start)
    d = len(start)
    walls = {tuple(z) for z in boundary}
    zero = (0,) * d
    seen = {start}
    stack = [start]
    touched = False
    stops = set()
    while stack:
        z = stack.pop()
        if z == zero or z in walls:
            stops.add(z)
            continue
        if max(abs(c) for c in z) >= halfwidth:
            touched = True
            stops.add(z)
            continue
        for a in range(d):
            for s in (-1, 1):
                y = list(z)
                y[a] += s
                y = tuple(y)
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
    target = [z for z in stops if z == zero]
    shell = [z for z in stops if z != zero and z not in walls]
    killing = [z for z in stops if z in walls]
    return DirichletProblem.from_sites(seen, target, killing, start, shell=shell, shell_value=tail_value), touched


@dataclass
class SEstimate:
    p_hat: np.ndarray
    p_upper: np.ndarray
    partial_sums: np.ndarray
    flagged: np.ndarray
    verdict: str
    slope: float

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1]) if len(self.partial_sums) else 0.0


def divergence_verdict(partial_sums: np.ndarray) -> tuple[str, float]:
    """Classify partial sums over dyadic n: "divergent", "cauchy" or "undetermined".

    Fits the slope of S(2^j) against j over the trailing half of the dyadic
    points and compares it with the average growth per doubling.
    """
    s = np.asarray(partial_sums, dtype=float)
    if s.size < 8:
        return "undetermined", float("nan")
    J = int(np.floor(np.log2(s.size)))
    pts = np.array([s[2 ** j - 1] for j in range(J + 1)])
    tail = max(3, (J + 1) // 2)
    js = np.arange(J + 1)[-tail:]
    slope = float(np.polyfit(js, pts[-tail:], 1)[0])
    avg = pts[-1] / J if J else 0.0
    if avg <= 0:
        return "cauchy", slope
    r = slope / avg
    if r >= 0.5:
        return "divergent", slope
    if r <= 0.05:
        return "cauchy", slope
    return "undetermined", slope


def s_estimator(records, resolver: Optional[Callable] = None, domain: Optional[GrowingDomain] = None,
                halfwidth: int = 64) -> SEstimate:
    """Sum of p_n over stopping-log records.

    ``resolver(record) -> p`` or ``(lower, upper)``; the default freezes the
    boundary of ``domain`` at eta_n and solves the walled Z^d problem, with a
    c_d |z|^{2-d} tail bracket (d >= 3) or a trivial one (d <= 2) when the free
    region reaches the truncation box.
    """
    if resolver is None:
        if domain is None:
            raise ValueError("need a resolver or the run's domain")
        resolver = _domain_resolver(domain, halfwidth)
    lo, hi, flag = [], [], []
    for rec in records:
        out = resolver(rec)
        if isinstance(out, tuple):
            a, b = out
        else:
            a = b = out
        rec.p_hat = a
        lo.append(a)
        hi.append(b)
        flag.append(b > a)
    lo = np.array(lo, dtype=float)
    sums = np.cumsum(lo)
    verdict, slope = divergence_verdict(sums)
    return SEstimate(lo, np.array(hi, dtype=float), sums, np.array(flag, dtype=bool), verdict, slope)


def _domain_resolver(domain: GrowingDomain, halfwidth: int):
    d = domain.d
    tail = 1.0 if d <= 2 else min(1.0, hit_constant(d) * float(halfwidth) ** (2.0 - d))

    def resolve(rec):
        if not any(rec.start):
            return 1.0
        walls = domain.boundary_at(rec.eta)
        prob, touched = walled_problem(walls, rec.start, halfwidth, 0.0)
        low = solve_hit_probability(prob).value
        if not touched:
            return low
        prob.shell_value = tail
        return low, solve_hit_probability(prob).value

    return resolve


# -- almost regular shape ----------------------------------------------------------------------------


@dataclass
class ShapeCheck:
    t: int
    f: float
    max_dist: float
    gamma_min: Optional[float]
    passed: Optional[bool]


def ars_check(snapshots: dict, gamma: float) -> tuple[list[ShapeCheck], Optional[float]]:
    """Almost-regular-shape test against the Euclidean ball.

    For each snapshot D_t (a site set or a GrowingDomain): f(t) is the largest
    radius whose projected ball lies inside D_t, and the in-domain distance of
    every site to that ball is compared with ``gamma * log f``.  Snapshots with
    f < e are reported as not applicable (``gamma_min`` None).
    """
    out = []
    for t in sorted(snapshots):
        snap = snapshots[t]
        if isinstance(snap, GrowingDomain):
            sites, nbr = snap.sites, snap.open_neighbors
        else:
            sites = {tuple(z) for z in snap}

            def nbr(z, _s=sites):
                res = []
                for a in range(len(z)):
                    for s in (-1, 1):
                        y = list(z)
                        y[a] += s
                        y = tuple(y)
                        if y in _s:
                            res.append(y)
                return res
        if not sites:
            raise ValueError(f"empty snapshot at t={t}")
        d = len(next(iter(sites)))
        M = max(max(abs(c) for c in z) for z in sites) + 1
        grid = np.array(list(itertools.product(range(-M, M + 1), repeat=d)), dtype=np.int64)
        n2 = (grid ** 2).sum(axis=1)
        present = np.array([tuple(z) in sites for z in grid])
        fstar2 = n2[~present].min()
        inner = n2 < fstar2
        f2 = n2[inner].max() if inner.any() else 0
        f = math.sqrt(f2)
        seeds = [tuple(z) for z in grid[inner & present & (n2 <= f2)]]
        dist = {z: 0 for z in seeds}
        frontier = list(seeds)
        while frontier:
            nxt = []
            for z in frontier:
                for y in nbr(z):
                    if y not in dist:
                        dist[y] = dist[z] + 1
                        nxt.append(y)
            frontier = nxt
        maxd = float("inf") if len(dist) < len(sites) else float(max(dist.values()))
        if f < math.e:
            out.append(ShapeCheck(t, f, maxd, None, None))
            continue
        g = maxd / math.log(f)
        out.append(ShapeCheck(t, f, maxd, g, bool(maxd <= gamma * math.log(f))))
    applicable = [c.gamma_min for c in out if c.gamma_min is not None]
    return out, (max(applicable) if applicable else None)


CONSTANTS_VERSION = 1
CALIBRATION_RADII = {3: 30, 4: 14}


def write_hit_constants(path, radii: Optional[dict] = None, safety: float = 1.25) -> dict:
    """Recompute every c_d and store them as the versioned constants file."""
    radii = CALIBRATION_RADII if radii is None else radii
    data = {"version": CONSTANTS_VERSION, "metric": "euclidean", "safety": safety,
            "constants": {f"d{d}": calibrate_hit_constant(d, r, safety) for d, r in sorted(radii.items())}}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return data
