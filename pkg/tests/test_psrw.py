from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from monowalk.lattice import ModelError, neighbors
from monowalk.psrw import (ProbeBudget, PsrwState, StretchedLattice, budget_checkpoints, budget_report,
                           coupon_bound, coupon_run, coupon_strategy_step, empirical_exit, guided_run, guided_step,
                           line_run, line_strategy_step, probe_sample, stretched_membership, total_variation,
                           trailing_half_mbar, unguided_probe)
from monowalk.rng import stream


def test_stretched_membership_examples():
    assert stretched_membership((0, 3), 4) == "lattice"
    assert stretched_membership((8, -4), 4) == "junction"
    assert stretched_membership((1, 3), 4) == "off"
    assert stretched_membership((4, 0, 5), 4, 3) == "lattice"
    assert stretched_membership((4, 1, 5), 4, 3) == "off"
    assert stretched_membership((4, 1, 5), 4, 3, need=1) == "lattice"
    with pytest.raises(ValueError):
        StretchedLattice(1, 2)


def test_budget_accounting():
    b = ProbeBudget()
    for m in (3, 0, 1, 0):
        b.record(m)
    np.testing.assert_array_equal(b.cumsum, [3, 3, 4, 4])
    np.testing.assert_allclose(b.mbar, [3, 1.5, 4 / 3, 1])
    assert b.trailing_mbar() == 0.5
    with pytest.raises(ValueError):
        b.record(-1)
    rep = budget_report(b)
    assert rep.to_csv().splitlines()[0] == "t,m,mbar,domain_sites"


def test_trailing_needs_half_checkpoint():
    assert trailing_half_mbar(np.array([2, 10]), np.array([4, 8])) == 2.0
    with pytest.raises(ValueError):
        trailing_half_mbar(np.array([2, 10]), np.array([2, 8]))
    assert 500 in budget_checkpoints(1000)


@given(st.integers(0, 2000), st.sampled_from([(2, "d3-full"), (2, "d2-biased"), (3, "d3-full"), (2, "fixed")]),
       st.sampled_from([2, 3, 5]))
def test_guided_python_matches_compiled(seed, dv, L):
    d, variant = dv
    h = 1500
    s = PsrwState.start(d)
    lat = StretchedLattice(L, d)
    g = stream(seed)
    path = [s.pos]
    for _ in range(h):
        guided_step(s, lat, g, variant)
        path.append(s.pos)
    r = guided_run(d, L, h, stream(seed), variant, checkpoints=[h // 2, h], keep_path=True)
    np.testing.assert_array_equal(np.array(path), r.path)
    np.testing.assert_array_equal(r.probes, s.budget.cumsum[[h // 2 - 1, h - 1]])
    assert r.n0[-1] == s.visits_origin


def test_guided_first_visit_probe_bound():
    d = 3
    r = guided_run(d, 3, 20_000, stream(4), checkpoints=[20_000])
    hist = r.first_visit_probes
    assert np.flatnonzero(hist).max() <= 2 * d
    assert r.sites[-1] == 1 + r.probes[-1]


def test_guided_stays_on_lattice():
    lat = StretchedLattice(4, 2)
    r = guided_run(2, 4, 5000, stream(2), keep_path=True)
    assert all(lat.contains(tuple(z)) for z in r.path)


def test_line_strategy_budget_exact():
    r = line_run(3, 5, 1000, stream(1))
    np.testing.assert_allclose(r.report().mbar, 10.0)
    s = PsrwState.start(2)
    g = stream(0)
    for _ in range(50):
        line_strategy_step(s, 2, g)
    assert s.budget.trailing_mbar() == 4
    assert all(z[1] == 0 for z in s.domain.sites)


def test_unguided_exit_from_single_site_is_uniform():
    got = empirical_exit([(0, 0, 0)], (0, 0, 0), 60_000, stream(3))
    expect = {y: 1 / 6 for y in neighbors((0, 0, 0))}
    assert total_variation(got, expect) < 0.01


def test_unguided_exit_from_domino_is_exact():
    got = empirical_exit([(0, 0), (1, 0)], (0, 0), 200_000, stream(5))
    expect = {(-1, 0): Fraction(4, 15), (0, 1): Fraction(4, 15), (0, -1): Fraction(4, 15),
              (1, 1): Fraction(1, 15), (1, -1): Fraction(1, 15), (2, 0): Fraction(1, 15)}
    for y, p in expect.items():
        assert abs(got[y] - float(p)) < 0.005


def test_probes_are_adjacent_to_domain():
    sites = {(0, 0), (1, 0), (1, 1), (2, 1)}
    out = probe_sample(sites, (1, 0), 2000, stream(6))
    for y in map(tuple, out):
        assert y not in sites
        assert any(z in sites for z in neighbors(y))


def test_unguided_probe_python_and_errors():
    y = unguided_probe({(0, 0)}, (0, 0), stream(0))
    assert y in neighbors((0, 0))
    with pytest.raises(ModelError):
        unguided_probe({(0, 0)}, (1, 0), stream(0))


def test_coupon_python_matches_compiled():
    h = 800
    s = PsrwState.start(2)
    gw, ga = stream(9, 0, "walk"), stream(9, 0, "aux")
    path = [s.pos]
    for _ in range(h):
        coupon_strategy_step(s, gw, ga, extra=1)
        path.append(s.pos)
    r = coupon_run(2, h, stream(9, 0, "walk"), stream(9, 0, "aux"), extra=1, checkpoints=[h // 2, h],
                   keep_path=True)
    np.testing.assert_array_equal(np.array(path), r.path)
    np.testing.assert_array_equal(r.probes, s.budget.cumsum[[h // 2 - 1, h - 1]])
    assert r.sites[-1] == len(s.domain.sites)


def test_coupon_bound_values():
    assert np.isclose(coupon_bound(2), 22 / 3)
    assert np.isclose(coupon_bound(3), 6 * (1 + 1 / 2 + 1 / 3 + 1 / 4 + 1 / 5))


def test_coupon_mean_first_visit_probes_below_bound():
    r = coupon_run(2, 20_000, stream(1, 0, "walk"), stream(1, 0, "aux"), checkpoints=[20_000])
    fv = r.first_visit_probes
    assert fv.min() >= 0
    assert fv.mean() <= coupon_bound(2)
    with pytest.raises(ValueError):
        coupon_strategy_step(PsrwState.start(1), stream(0), stream(1))
