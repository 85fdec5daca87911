import math

import numpy as np
import pytest

from adaptsa.geometry import box
from adaptsa.problems import get_problem, make_l1_regularized, make_least_squares, make_random_linear, two_point_square
from adaptsa.solvers import (asa, asa2, asa3, make_schedule, psg, smd_pnorm, ssg, ssg_bound, ssgs,
                             stage_count)
from oracles import scalar_ssg, schedule_oracle


def const_grad(g=1.0):
    """1-D problem on [−1, 1] whose sampled subgradient is always g."""
    return make_random_linear([[g]], box([-1.0], [1.0]))


def test_ssg_one_step_example():
    w, tr = ssg(const_grad(), None, [0.0], 0.5, 1, 0)
    assert np.allclose(w, [-0.25])
    assert tr.samples_used == 1


def test_ssg_zero_gradient_returns_start():
    w, _ = ssg(const_grad(0.0), None, [0.3], 0.1, 50, 0)
    assert np.allclose(w, [0.3])


def test_ssg_matches_scalar_loop():
    P = const_grad()
    w, _ = ssg(P, None, [0.5], 0.07, 40, 0)
    ref = scalar_ssg(lambda v: 1.0, lambda v: min(max(v, -1.0), 1.0), 0.5, 0.07, 40)
    assert np.isclose(w[0], ref)


def test_ssgs_example():
    # w2 = Π(−1) = −1, w3 = Π(0·(−1) + 1·0 − ½·1) = −½, w4 = Π(⅓·(−½) − ⅓) = −½
    w, _ = ssgs(const_grad(), [0.0], 0.5, 3, 0)
    assert np.allclose(w, [(0 - 1 - 0.5 - 0.5) / 4])


def zero_l1(lam):
    """ℓ1 term only: the data part of the loss is identically zero."""
    return make_l1_regularized(make_least_squares([[0.0]], [0.0], box([-1.0], [1.0])), lam)


def test_psg_example():
    P = zero_l1(0.3)
    w, tr = psg(P, None, [1.0], 1.0, 1, 0)
    assert np.allclose(w, [1.0])
    assert np.allclose(tr.final, [1.0])


def test_psg_soft_threshold_iterate():
    P = zero_l1(0.3)
    _, tr = psg(P, None, [1.0], 1.0, 1, 0, checkpoints="all")
    assert np.allclose(tr.records[-1].iterate, [0.7])


def test_smd_p2_equals_ssg():
    P = get_problem("hinge_box5")
    a, _ = ssg(P, None, np.zeros(5), 0.01, 500, 11)
    b, _ = smd_pnorm(P, None, np.zeros(5), 0.01, 500, 11, p=2.0)
    assert np.allclose(a, b, atol=1e-14)


def test_smd_zero_gradient():
    w, _ = smd_pnorm(const_grad(0.0), None, [0.4], 0.3, 20, 0, p=4.0)
    assert np.allclose(w, [0.4])


def test_infeasible_start_rejected():
    with pytest.raises(ValueError):
        ssg(const_grad(), None, [2.0], 0.1, 5, 0)
    with pytest.raises(ValueError):
        ssg(const_grad(), None, [0.0], -0.1, 5, 0)


@pytest.mark.parametrize("n,expected", [(100, (1, 100)), (1000, (2, 500)), (10 ** 6, (7, 142857))])
def test_schedule(n, expected):
    s = make_schedule(n, 2.0, 4.0)
    assert (s.m, s.n0) == expected
    m, n0, steps, radii = schedule_oracle(n, 2.0, 4.0)
    assert (s.m, s.n0) == (m, n0)
    assert np.allclose(s.steps, steps, rtol=1e-14) and np.allclose(s.radii, radii, rtol=0)


def test_schedule_rejects_small_n():
    with pytest.raises(ValueError):
        make_schedule(99, 1.0, 1.0)


def test_asa2_first_step():
    s = make_schedule(10 ** 4, 2.0, 1.0, "asa2")
    assert np.isclose(s.steps[0], 2.0 * math.sqrt(s.n0) / 2.0) and s.n0 == 2500 and np.isclose(s.steps[0], 50.0)


@pytest.mark.parametrize("fn", [asa, asa2])
def test_budget_and_stages(fn):
    P = get_problem("hinge_box5")
    for n in (100, 1234, 54321):
        w, tr = fn(P, np.zeros(5), n, rng=1)
        assert tr.samples_used <= n
        assert tr.samples_used == tr.schedule.m * tr.schedule.n0 == (n // stage_count(n)) * stage_count(n)
        assert P.set.contains(w)


def test_asa3_budget():
    P = get_problem("l1_least_squares")
    w, tr = asa3(P, np.zeros(3), 5000, rng=2)
    assert tr.samples_used <= 5000 and P.set.contains(w)


def test_asa_stage_warm_start_and_caps():
    P = get_problem("hinge_box5")
    w, tr = asa(P, np.zeros(5), 20000, rng=3, checkpoints="all")
    s = tr.schedule
    by_stage = {}
    for r in tr.records:
        by_stage.setdefault(r.stage, []).append(r)
    prev_end = np.zeros(5)
    for k in range(1, s.m + 1):
        recs = by_stage[k]
        for r in recs:
            assert np.linalg.norm(r.iterate - prev_end) <= s.radii[k - 1] + 1e-9
        prev_end = recs[-1].average
    assert np.array_equal(prev_end, w)


def test_determinism_same_seed():
    P = get_problem("two_point_square")
    a, ta = asa(P, [0.5], 5000, rng=42)
    b, tb = asa(P, [0.5], 5000, rng=42)
    c, _ = asa(P, [0.5], 5000, rng=43)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert [r.excess for r in ta.records] == [r.excess for r in tb.records]


def test_asa_improves_on_hinge():
    P = get_problem("hinge_box5")
    w, _ = asa(P, np.zeros(5), 10 ** 5, rng=0)
    assert P.excess(w) < 0.2 * P.excess(np.zeros(5))


def test_ssg_bound_value():
    b = ssg_bound(2.0, 4.0, 10 ** 4, 0.1)
    assert np.isclose(b, 8.0 * (1 + 4 * math.sqrt(2 * math.log(20))) / math.sqrt(10001))


def test_checkpoint_count():
    P = two_point_square()
    _, tr = ssg(P, None, [0.0], 0.01, 1000, 0, checkpoints=10)
    assert len(tr.records) <= 10 and tr.records[-1].samples == 1000


def test_ssg_bound_small_example():
    # 2·(0.1 + 0.4·√(2 ln 20)) evaluated to double precision
    assert np.isclose(ssg_bound(2.0, 1.0, 99, 0.1), 2.1581974645446533, rtol=1e-14)
