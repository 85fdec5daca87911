import math

import numpy as np
import pytest

from adaptsa.conditions import (THETA_GRID, central_constants, central_sensitivity, check_bernstein,
                                check_central, check_ebc, estimate_ebc, kappa, log_kappa)
from adaptsa.problems import get_problem
from oracles import lhs_rhs_two_point


def test_theta_grid():
    assert len(THETA_GRID) == 20 and THETA_GRID[0] == 0.05 and THETA_GRID[-1] == 1.0


@pytest.mark.parametrize("name", ["two_point_square", "newsvendor"])
def test_estimate_ebc_recovers_theta_one(name):
    P = get_problem(name)
    est = estimate_ebc(P, n_points=5000, rng=0)
    assert abs(est.recommended_theta - P.meta.ebc_theta) <= 0.15
    assert np.all(np.diff(est.alpha_hat) >= -1e-12 * est.alpha_hat[1:])


def test_estimate_ebc_explicit_points():
    P = get_problem("quartic_composite")
    pts = np.linspace(-1, 1, 2001)[:, None]
    est = estimate_ebc(P, points=pts)
    # dist² / excess^θ = |w|^{2 − 4θ}: bounded by 1 exactly for θ ≤ 1/2; above that
    # the floor (|w| ≥ 10^{-1.5}) keeps the ratio finite, and the cap decides
    assert np.isclose(est.alpha(0.5), 1.0)
    assert est.recommended_theta == 0.65 and est.alpha(0.7) > est.alpha_cap
    finer = estimate_ebc(P, points=pts, excess_floor=1e-12)
    assert finer.recommended_theta == 0.55


def test_estimate_ebc_needs_points():
    P = get_problem("two_point_square")
    with pytest.raises(ValueError):
        estimate_ebc(P, points=np.zeros((50, 1)))


def test_check_ebc_flags_violations():
    P = get_problem("two_point_square")
    pts = np.linspace(-1, 1, 101)[:, None]
    assert check_ebc(P, 1.0, 1.0, pts) == []
    bad = check_ebc(P, 1.0, 0.5, pts)
    assert len(bad) > 0 and all(v.margin < 0 for v in bad)


def test_bernstein_closed_form_spot_check():
    P = get_problem("two_point_square")
    lhs, mean = lhs_rhs_two_point(1.0)
    assert np.isclose(lhs, 5.0) and np.isclose(16.0 * mean, 16.0)
    rep = check_bernstein(P, np.array([1.0]), mc_samples=20000, rng=0)
    pt = rep.points[0]
    assert abs(pt.lhs - 5.0) <= 3 * pt.stderr + 1e-12 or abs(pt.lhs - 5.0) < 0.1
    assert rep.passed


def test_bernstein_can_fail():
    P = get_problem("two_point_square")
    assert not check_bernstein(P, np.array([1.0]), B=4.0, mc_samples=20000, rng=0).passed


def test_bernstein_random_points_hinge():
    P = get_problem("hinge_box5")
    W = P.set.sample(np.random.default_rng(1), 20)
    rep = check_bernstein(P, W, mc_samples=2000, rng=2)
    assert rep.passed and len(rep.rows()) == 20


def test_kappa():
    assert kappa(0.0) == 0.5
    assert np.isclose(kappa(1.0), math.e - 2.0)
    assert np.isclose(log_kappa(5.0), math.log(kappa(5.0)))
    assert np.isfinite(log_kappa(2000.0))


def test_central_constants():
    P = get_problem("two_point_square")
    c, eta = central_constants(P, 0.01, b=1.0)
    assert np.isclose(c, 1.0 / (16.0 * kappa(16.0)))
    assert eta == min(c, 1.0)


def test_central_check_passes():
    P = get_problem("two_point_square")
    W = np.linspace(-1, 1, 9)[:, None]
    for b, rep in central_sensitivity(P, W, 0.01, mc_samples=5000, rng=0).items():
        assert rep.passed, b


def test_central_rejects_bad_args():
    with pytest.raises(ValueError):
        check_central(get_problem("two_point_square"), np.zeros(1), -1.0)
