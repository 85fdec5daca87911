import math

import numpy as np
import pytest

from adaptsa.erm import ErmError, erm_rate_study, log_slope, solve_erm, zero_noise_variant
from adaptsa.problems import get_problem


def brute_min(P, Z, grid):
    vals = [P.losses(np.array([w]), Z).mean() for w in grid]
    i = int(np.argmin(vals))
    return grid[i], vals[i]


@pytest.mark.parametrize("name", ["two_point_square", "newsvendor", "quartic_composite"])
def test_one_dimensional_matches_grid(name):
    P = get_problem(name)
    Z = P.sample(np.random.default_rng(0), 300)
    w = solve_erm(P, Z, 1e-9)
    lo, hi = P.set.lower[0], P.set.upper[0]
    _, best = brute_min(P, Z, np.linspace(lo, hi, 20001))
    assert P.losses(w, Z).mean() <= best + 1e-8


def test_two_point_erm_is_clipped_mean():
    P = get_problem("two_point_square")
    Z = P.sample(np.random.default_rng(1), 101)
    w = solve_erm(P, Z, 1e-12)
    assert np.isclose(w[0], np.clip(Z[:, 1].mean(), -1, 1), atol=1e-6)


@pytest.mark.parametrize("name", ["hinge_box5", "shifted_quadratic", "l1_least_squares"])
def test_certified_gap(name):
    P = get_problem(name)
    Z = P.sample(np.random.default_rng(2), 500)
    w, gap = solve_erm(P, Z, 1e-7, return_gap=True)
    assert gap <= 1e-7 and P.set.contains(w)
    rng = np.random.default_rng(3)
    f = P.losses(w, Z).mean()
    for v in P.set.sample(rng, 200):
        assert f <= P.losses(v, Z).mean() + 1e-7


def test_bad_tolerance():
    P = get_problem("two_point_square")
    with pytest.raises(ValueError):
        solve_erm(P, P.sample(np.random.default_rng(0), 10), 0.0)


def test_log_slope_exact_line():
    ns = np.array([10, 100, 1000, 10000])
    s, b, se, rms = log_slope(ns, 3.0 * ns ** -0.5)
    assert np.isclose(s, -0.5) and np.isclose(math.exp(b), 3.0) and se < 1e-12 and rms < 1e-12


def test_rate_study_two_point():
    P = get_problem("two_point_square")
    res = erm_rate_study(P, [100, 1000, 10000, 100000], replicates=10, rng=0)
    assert -1.3 <= res.slope <= -0.7
    assert res.predicted_exponent == -1.0 and res.optimistic_exponent == -2.0
    assert len(res.rows()) == 40 and res.doubling_ok()


def test_rate_study_zero_noise_exact():
    P = zero_noise_variant("two_point_square")
    res = erm_rate_study(P, [100, 1000, 10000, 100000], replicates=10, rng=0, zero_noise=True)
    assert res.exact_recovery and res.slope == -math.inf


def test_rate_study_validation():
    P = get_problem("two_point_square")
    with pytest.raises(ValueError):
        erm_rate_study(P, [10, 100, 1000], replicates=10)
    with pytest.raises(ValueError):
        erm_rate_study(P, [10, 100, 1000, 10000], replicates=5)
    with pytest.raises(KeyError):
        zero_noise_variant("hinge_box5")


def test_erm_error_is_runtime_error():
    assert issubclass(ErmError, RuntimeError)
