import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from monowalk.lattice import ball, induced
from monowalk.potential import (DirichletProblem, PowerSchedule, SolverError, TableSchedule, ars_check,
                                ball_problem, box_shell_counts, calibrate_hit_constant, divergence_verdict,
                                egs_bracket, egs_criterion, ever_hit_zero_bound, harmonic_residual, hit_constant,
                                hitting_measure, obt_box_criterion, s_estimator, s_star, solve_dense,
                                solve_hit_probability, walled_problem)
from monowalk.walker import StopRecord


def interval(n, start):
    sites = [(x,) for x in range(-n, n + 1)]
    return DirichletProblem.from_sites(sites, target=[(0,)], killing=[(-n,), (n,)], start=start)


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_gamblers_ruin(method):
    n = 50
    sol = solve_hit_probability(interval(n, (7,)), method=method)
    xs = np.arange(-n, n + 1)
    np.testing.assert_allclose(sol.field, 1 - np.abs(xs) / n, atol=1e-12)
    assert sol.residual < 1e-10


def test_graph_ball_value_matches_dense_oracle():
    p = ball_problem(2, 5, "graph", start=(1, 0))
    sparse = solve_hit_probability(p)
    dense = solve_dense(p)
    assert abs(sparse.value - dense.value) < 1e-10
    # frozen from the dense oracle
    assert abs(sparse.value - 0.4700352526439482) < 1e-12
    assert sparse.n_unknowns <= 61


def test_boundary_conditions():
    assert solve_hit_probability(interval(5, (0,))).value == 1.0
    assert solve_hit_probability(interval(5, (5,))).value == 0.0


def test_errors():
    sites = [(0,), (1,), (3,), (4,)]
    p = DirichletProblem.from_sites(sites, target=[(0,)], killing=[(1,)], start=(3,))
    with pytest.raises(SolverError):
        solve_hit_probability(p)
    with pytest.raises(ValueError):
        DirichletProblem.from_sites(sites, target=[(0,)], killing=[(0,)])
    with pytest.raises(ValueError):
        solve_hit_probability(interval(3, (1,)), method="qr")


def test_open_edge_structure_respected():
    # the edge 0 -- 1 is closed, so the walker from 2 must go around through the top row
    sites = [(x, y) for x in range(3) for y in range(2)]
    edges = set(induced(2, sites).open_edges) - {((0, 0), 0)}
    p = DirichletProblem.from_sites(sites, target=[(0, 0)], killing=[(2, 0)], start=(1, 0), open_edges=edges)
    full = DirichletProblem.from_sites(sites, target=[(0, 0)], killing=[(2, 0)], start=(1, 0))
    h = solve_hit_probability(p).value
    assert abs(h - solve_dense(p).value) < 1e-12
    assert h < solve_hit_probability(full).value


@given(st.integers(2, 7), st.sampled_from(["graph", "euclidean"]), st.sampled_from([2, 3]))
def test_sparse_dense_agree_and_harmonic(r, metric, d):
    sol = solve_hit_probability(ball_problem(d, r, metric))
    np.testing.assert_allclose(sol.field, solve_dense(sol.problem).field, atol=1e-10)
    assert harmonic_residual(sol) < 1e-10
    f = sol.field[np.isfinite(sol.field)]
    assert f.min() >= 0 and f.max() <= 1


@given(st.data())
def test_monotone_in_target_and_killing(data):
    n = 8
    sites = [(x, y) for x in range(n) for y in range(n)]
    pool = [z for z in sites if z != (3, 3)]
    picks = data.draw(st.lists(st.sampled_from(pool), min_size=2, max_size=12, unique=True))
    target, killing = [picks[0]], picks[1:]
    extra = data.draw(st.sampled_from([z for z in pool if z not in picks]))
    base = DirichletProblem.from_sites(sites, target, killing, start=(3, 3))
    try:
        h = solve_hit_probability(base).value
    except SolverError:
        return
    more_k = solve_hit_probability(DirichletProblem.from_sites(sites, target, killing + [extra], start=(3, 3)))
    more_t = solve_hit_probability(DirichletProblem.from_sites(sites, target + [extra], killing, start=(3, 3)))
    assert more_k.value <= h + 1e-12
    assert more_t.value >= h - 1e-12


def test_hitting_measure_domino():
    mu = hitting_measure([(0, 0), (1, 0)], (0, 0))
    for y in [(-1, 0), (0, 1), (0, -1)]:
        assert abs(mu[y] - 4 / 15) < 1e-12
    for y in [(2, 0), (1, 1), (1, -1)]:
        assert abs(mu[y] - 1 / 15) < 1e-12


def test_ever_hit_bound_scaling_and_errors():
    b1 = ever_hit_zero_bound((3, 1, 0))
    b2 = ever_hit_zero_bound((6, 2, 0))
    assert math.isclose(b2 / b1, 0.5)
    assert math.isclose(ever_hit_zero_bound((2, 0, 0, 0)) / ever_hit_zero_bound((4, 0, 0, 0)), 4)
    with pytest.raises(ValueError):
        ever_hit_zero_bound((1, 0))
    with pytest.raises(ValueError):
        ever_hit_zero_bound((0, 0, 0))


def test_bound_dominates_exact_solve_d3():
    sol = solve_hit_probability(ball_problem(3, 30), method="cg")
    p, off = sol.problem, np.array(sol.problem.offset)
    coords = np.argwhere(p.mask) + off
    n1 = np.abs(coords).sum(axis=1)
    vals = sol.field[p.mask]
    sel = (n1 >= 1) & (n1 <= 15)
    bound = hit_constant(3) * n1[sel] ** -1.0
    assert np.all(vals[sel] <= bound)
    assert ever_hit_zero_bound((1, 0, 0)) >= sol.at((1, 0, 0))


def test_constants_file_reproducible():
    fresh = calibrate_hit_constant(4, 14)
    assert math.isclose(fresh["c"], hit_constant(4), rel_tol=1e-9)


def test_egs_criterion_trivial_series():
    rep = egs_criterion(1, 3, 10_000)
    assert abs(rep.partial_sums[-1] - math.pi ** 2 / 6) < 1e-3
    assert rep.verdict == "convergent"
    assert egs_criterion(1, 2).verdict == "divergent"
    assert egs_criterion(PowerSchedule(1, 1.5), 3).verdict == "divergent"
    assert egs_criterion(PowerSchedule(1, 0.5), 3).verdict == "convergent"
    assert egs_criterion(TableSchedule([1, 2, 3]), 3, 20).verdict == "undetermined"
    assert np.all(np.diff(rep.partial_sums) >= 0)
    with pytest.raises(ValueError):
        egs_criterion(1, 3, 5)


def test_obt_box_criterion_examples():
    assert obt_box_criterion(1, 3).verdict == "divergent"
    assert obt_box_criterion(1, 4).verdict == "convergent"
    assert obt_box_criterion(PowerSchedule(1, 0.9), 4).verdict == "convergent"
    assert obt_box_criterion(1, 4, 10).to_csv().splitlines()[0] == "k,term,partial_sum"


def test_box_shell_counts():
    np.testing.assert_array_equal(box_shell_counts([(1, 0), (1, 1), (0, 3), (5, 5)], 3), [2, 0, 1])


def test_s_star_empty_and_errors():
    rep = s_star([], 3)
    assert rep.partial_sums.size == 0
    with pytest.raises(ValueError):
        s_star([(3, 0)], 2)
    with pytest.raises(ValueError):
        s_star([(3, 0, 0)], 3, radius_fn=lambda x: 3, truncation=2)


def test_s_star_single_site_bracket():
    R = 8
    rep = s_star([(R, 0, 0)], 3, truncation=R)
    exact = solve_hit_probability(ball_problem(3, 4 * R)).at((R, 0, 0))
    assert math.isclose(rep.terms[0], exact, rel_tol=1e-9)
    assert exact <= rep.upper_terms[0] <= hit_constant(3) / R


def test_s_star_thin_boundary_is_cauchy_d4():
    sites = [(k, 0, 0, 0) for k in range(1, 1001)]
    rep = s_star(sites, 4, truncation=4, solve_radius=12)
    assert np.all(rep.terms <= rep.upper_terms)
    assert rep.upper_sums[-1] - rep.upper_sums[499] < 1e-3
    counts = box_shell_counts(sites, 1000)
    assert np.all(counts <= np.sqrt(np.arange(1, 1001)))
    assert obt_box_criterion(PowerSchedule(1, 0), 4).verdict == "convergent"


def test_s_star_correction_ball():
    plain = s_star([(6, 0, 0)], 3, truncation=6)
    wide = s_star([(6, 0, 0)], 3, radius_fn=lambda x: 2, truncation=6)
    assert wide.terms[0] > plain.terms[0]
    assert math.isclose(wide.terms[0], solve_hit_probability(ball_problem(3, 24)).at((4, 0, 0)))


def test_egs_bracket_d1_exact():
    rec, tra = egs_bracket(1, 1, ks=range(2, 12))
    np.testing.assert_allclose(rec.extra["prob"], 1 / np.arange(2, 12), atol=1e-12)
    np.testing.assert_allclose(tra.extra["prob"], 2 / np.arange(3, 13), atol=1e-12)


def test_egs_bracket_orders_rec_below_tra():
    rec, tra = egs_bracket(1, 2, ks=range(4, 10))
    assert np.all(rec.extra["prob"] <= rec.extra["prob_sup"])
    assert np.all(rec.extra["prob"] < tra.extra["prob"])
    assert np.all(np.diff(rec.partial_sums) > 0)


def test_walled_problem_and_s_estimator():
    rec0 = StopRecord(0, 0, (0, 0), None, True)
    est = s_estimator([rec0], domain=ball((0, 0), 1))
    assert est.p_hat[0] == 1.0
    prob, touched = walled_problem({(5, 0), (-5, 0)}, (2, 0), 8)
    assert touched
    dom = ball((0, 0), 3)
    rec = StopRecord(1, 0, (1, 0), None, False)
    out = s_estimator([rec], domain=dom)
    assert 0 < out.p_hat[0] < 1 and not out.flagged[0]


def test_s_estimator_brackets_when_truncated():
    recs = [StopRecord(0, 0, (2, 0, 0), None, False)]
    out = s_estimator(recs, resolver=lambda r: (0.1, 0.2))
    assert out.flagged[0] and out.p_upper[0] == 0.2 and out.total == 0.1
    with pytest.raises(ValueError):
        s_estimator(recs)


def test_divergence_verdict():
    n = np.arange(1, 2 ** 12 + 1)
    assert divergence_verdict(np.cumsum(1.0 / n))[0] == "divergent"
    assert divergence_verdict(np.cumsum(0.5 ** n))[0] == "cauchy"
    assert divergence_verdict(np.ones(4))[0] == "undetermined"


def disc(f):
    r = math.floor(f)
    return {(x, y) for x in range(-r, r + 1) for y in range(-r, r + 1) if x * x + y * y <= f * f}


def test_ars_exact_ball():
    checks, g = ars_check({1: disc(10)}, 1.0)
    assert g == 0 and checks[0].passed


def test_ars_tentacle():
    f = 100
    sites = disc(f) | {(f + j, 0) for j in range(1, 6)}
    checks, g = ars_check({1: sites}, 1.0)
    assert math.isclose(g, 5 / math.log(100))
    assert not checks[0].passed
    assert ars_check({1: sites}, 1.1)[0][0].passed


def test_ars_small_snapshot_not_applicable():
    checks, g = ars_check({1: disc(2)}, 1.0)
    assert g is None and checks[0].passed is None
    with pytest.raises(ValueError):
        ars_check({1: set()}, 1.0)
