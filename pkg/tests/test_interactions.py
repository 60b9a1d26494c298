import numpy as np
import pytest
from hypothesis import given, strategies as st

from monowalk.interactions import (FOBT, OBT, RIGHT_UP_DOWN, ROBT, DriftToOrigin, ExtendedSRW, FobtBiased, Scripted,
                                   UniformBoundary, conv_obt_fixture, coupled_biased_run, coupled_biased_walk,
                                   coupled_domain, extended_boundary_step, fobt_biased_step, kl_tilt, obt_update,
                                   pobt_update)
from monowalk.lattice import ModelError, ball, edge, full_lattice, induced, l1
from monowalk.rng import Streams, domain_seed, stream
from monowalk.walker import WalkState, run


def test_obt_update_interior_is_noop():
    dom = ball((0, 0), 2)
    before = set(dom.open_edges)
    obt_update(dom, (0, 0), 0)
    assert dom.open_edges == before


def test_obt_update_unit_ball():
    dom = ball((0, 0), 1)
    obt_update(dom, (1, 0), 0)
    assert dom.deg((1, 0)) == 4 and not dom.in_boundary((1, 0))
    assert dom.n_edges == 7
    n = dom.n_edges
    obt_update(dom, (1, 0), 1)
    assert dom.n_edges == n


def test_pobt_full_probability_equals_obt():
    a, b = ball((0, 0), 1), ball((0, 0), 1)
    obt_update(a, (0, 1), 3)
    pobt_update(b, (0, 1), 3, 1.0, "all", stream(0))
    assert a.open_edges == b.open_edges


def test_pobt_rejects_bad_eps():
    with pytest.raises(ValueError):
        pobt_update(ball((0, 0), 1), (1, 0), 0, 0.0, "all", stream(0))
    with pytest.raises(ValueError):
        pobt_update(ball((0, 0), 1), (1, 0), 0, 0.5, "some", stream(0))


def test_pobt_opening_frequency():
    g = stream(1, 0, "policy")
    hits = 0
    n = 100_000
    for _ in range(n):
        dom = induced(2, [(0, 0)])
        pobt_update(dom, (0, 0), 0, 0.5, "one-uniform", g)
        hits += dom.n_edges == 1
    assert abs(hits / n - 0.5) < 0.01


def test_pobt_visits_until_full_opening():
    # geometric-trials bound: mean visits before B(x,1) is open is at most 2d/eps
    g = stream(2, 0, "policy")
    eps, d = 0.5, 2
    counts = []
    for _ in range(4000):
        dom = induced(d, [(0, 0)])
        k = 0
        while dom.in_boundary((0, 0)):
            pobt_update(dom, (0, 0), k, eps, "one-uniform", g)
            k += 1
        counts.append(k)
    counts = np.array(counts)
    assert counts.mean() <= 2 * d / eps + 3 * counts.std() / np.sqrt(len(counts))


def test_fobt_biased_first_visit_and_stay():
    dom = induced(2, [(0, 0)])
    state = WalkState.start(dom)
    visited = set()
    fobt_biased_step(state, visited, stream(0))
    assert state.pos == (0, 0) and state.t == 1
    assert dom.open_edges == {edge((0, 0), (1, 0)), edge((0, 0), (0, -1)), edge((0, 0), (0, 1))}
    assert not dom.is_open(edge((-1, 0), (0, 0)))
    n = dom.n_edges
    fobt_biased_step(state, visited, stream(0))
    assert state.pos != (0, 0) and state.t == 2
    assert dom.n_edges == n


def test_fobt_biased_requires_plane():
    with pytest.raises(ModelError):
        fobt_biased_step(WalkState.start(induced(3, [(0, 0, 0)])), set(), stream(0))


@given(st.integers(0, 5000))
def test_fobt_biased_opened_edges_reconstruct(seed):
    dom = induced(2, [(0, 0)])
    state = WalkState.start(dom)
    pol = FobtBiased()
    run(state, pol, 400, Streams.from_seed(seed))
    expect = set()
    for z in pol.visited:
        for axis, s in RIGHT_UP_DOWN:
            y = list(z)
            y[axis] += s
            expect.add(edge(z, tuple(y)))
    assert dom.open_edges == expect


def test_fobt_all_directions_is_obt_like():
    dom = induced(2, [(0, 0)])
    res = run(WalkState.start(dom), FOBT(), 500, Streams.from_seed(3))
    for z in np.unique(res.trajectory[:-1], axis=0):
        assert dom.deg(tuple(int(c) for c in z)) == 4


def test_robt_cardinality_bound():
    dom = ball((0, 0), 1)
    pol = ROBT(radius=3, max_edges=2)
    state = WalkState.start(dom)
    streams = Streams.from_seed(5)
    for _ in range(300):
        n = dom.n_edges
        pol.step(state, streams)
        assert dom.n_edges - n <= 2
    dom.check()


def test_kl_tilt_mean_and_uniform_limit():
    v = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    np.testing.assert_allclose(kl_tilt(v, np.zeros(2)), 0.25)
    p = kl_tilt(v, np.array([-0.1, 0.05]))
    np.testing.assert_allclose(p @ v, [-0.1, 0.05], atol=1e-12)
    assert kl_tilt(v, np.array([2.0, 0.0])) is None


def test_drift_to_origin_mean_displacement():
    y = (3, -2, 1)
    opts = [y] + [tuple(a + (s if i == j else 0) for i, a in enumerate(y)) for j in range(3) for s in (-1, 1)]
    moves, p = DriftToOrigin(0.2).distribution(y, opts)
    g = stream(8, 0, "policy")
    idx = np.minimum(np.searchsorted(np.cumsum(p), g.random(1_000_000), side="right"), len(moves) - 1)
    disp = np.array(moves)[idx] - np.array(y)
    np.testing.assert_allclose(disp.mean(axis=0), -0.2 * np.array(y) / l1(y), atol=0.01)


def test_drift_to_origin_infeasible_falls_back():
    # only two neighbours, both moving away from 0 in the first coordinate
    y = (4, 0)
    moves, p = DriftToOrigin(0.5).distribution(y, [(5, 0), (4, 1)])
    assert np.isclose(p.sum(), 1) and (p > 0).all()


def test_uniform_boundary_on_full_degree_site_is_srw():
    dom = full_lattice(2)
    a = WalkState.start(dom)
    b = WalkState.start(dom)
    g1, g2 = stream(4), stream(4)
    for _ in range(200):
        extended_boundary_step(a, UniformBoundary(), g1)
        b.advance(b.domain.open_neighbors(b.pos)[int(g2.random() * 4)])
        assert a.pos == b.pos


def test_extended_rejects_bad_radius_and_targets():
    dom = induced(2, [(x, 0) for x in range(10)])
    st_ = WalkState.start(dom, (4, 0))
    with pytest.raises(ModelError):
        extended_boundary_step(st_, UniformBoundary(), stream(0), radius_fn=lambda x: 4, c=0.5)
    with pytest.raises(ModelError):
        extended_boundary_step(st_, Scripted(lambda s: (9, 0)), stream(0), radius_fn=lambda x: 2, c=0.5)


def test_conv_obt_fixture_marches_outward():
    dom, pol, expected = conv_obt_fixture()
    res = run(WalkState.start(dom, expected[0]), pol, len(expected) - 1, Streams.from_seed(0))
    path = [tuple(int(c) for c in z) for z in res.trajectory]
    assert path == expected
    dist = [z[0] for z in path]
    assert all(b > a for a, b in zip(dist, dist[1:]))
    assert all(1 <= b - a <= 0.5 * a for a, b in zip(dist, dist[1:]))


def test_extended_with_growth_runs():
    pol = ExtendedSRW(DriftToOrigin(0.2), growth="obt")
    res = run(WalkState.start(ball((0, 0, 0), 1)), pol, 500, Streams.from_seed(1))
    assert res.state.t == 500


def test_coupled_full_lattice_identical():
    pair = coupled_biased_walk(full_lattice(2), 5000, stream(1))
    np.testing.assert_array_equal(pair.E_path, pair.R)
    assert not pair.diff1.any()


@given(st.integers(0, 2000), st.sampled_from([0.0, 0.25, 0.5]))
def test_coupled_python_matches_compiled(seed, p):
    ds = domain_seed(seed, 0)
    pair = coupled_biased_walk(coupled_domain(p, ds), 1500, stream(seed))
    fast = coupled_biased_run(p, ds, 1500, stream(seed), checkpoints=[1500], keep_path=True)
    np.testing.assert_array_equal(pair.E_path, fast.E_path)
    np.testing.assert_array_equal(pair.R, fast.R_path)
    assert pair.violations == fast.violations == 0
    assert len(pair.snn_times) == fast.snn
    assert sum(not x for x in pair.snn_left_in_d0) == fast.snn_free
    assert np.all(np.diff(pair.diff1) >= 0)


def test_coupled_marginals():
    run_ = coupled_biased_run(0.3, domain_seed(5, 0), 1_000_000, stream(5))
    r = run_.r_counts / run_.r_counts.sum()
    np.testing.assert_allclose(r, 0.25, atol=0.005)
    e_open = run_.e_counts[0] / run_.e_counts[0].sum()
    np.testing.assert_allclose(e_open, 0.25, atol=0.005)
    e_closed = run_.e_counts[1] / run_.e_counts[1].sum()
    assert e_closed[0] == 0
    np.testing.assert_allclose(e_closed[1:], 1 / 3, atol=0.005)


def test_coupled_positive_drift_on_empty_domain():
    run_ = coupled_biased_run(0.0, 0, 200_000, stream(2))
    assert run_.violations == 0 and run_.diff1[-1] > 0
    assert run_.snn_free == run_.snn
