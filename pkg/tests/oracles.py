"""Slow reference implementations used only by the tests."""
import warnings

import numpy as np


def proj_box(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def proj_l2(x, c, r):
    v = x - c
    n = np.linalg.norm(v)
    return x.copy() if n <= r else c + v * (r / n)


def proj_l1(x, c, r, iters=200):
    """Bisection on the soft-threshold level."""
    v = x - c
    if np.abs(v).sum() <= r:
        return x.copy()
    lo, hi = 0.0, float(np.abs(v).max())
    for _ in range(iters):
        t = 0.5 * (lo + hi)
        if np.maximum(np.abs(v) - t, 0).sum() > r:
            lo = t
        else:
            hi = t
    return c + np.sign(v) * np.maximum(np.abs(v) - hi, 0)


def proj_set(fset, x):
    if fset.kind == "box":
        return proj_box(x, fset.lower, fset.upper)
    if fset.kind == "l2":
        return proj_l2(x, fset.center, fset.radius)
    return proj_l1(x, fset.center, fset.radius)


def proj_cap(fset, c, R, x):
    """Generic conic solve of min ‖w − x‖² over W ∩ B(c, R)."""
    import cvxpy as cp

    w = cp.Variable(x.size)
    if fset.kind == "box":
        cons = [w >= fset.lower, w <= fset.upper]
    else:
        cons = [cp.norm(w - fset.center, 2 if fset.kind == "l2" else 1) <= fset.radius]
    cons.append(cp.norm(w - c, 2) <= R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cp.Problem(cp.Minimize(cp.sum_squares(w - x)), cons).solve(
            solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return np.asarray(w.value)


def random_set(rng, kind, d):
    from adaptsa.geometry import box, l1_ball, l2_ball

    if kind == "box":
        lo = rng.uniform(-2, 0.5, d)
        return box(lo, lo + rng.uniform(0.1, 2, d))
    c = rng.uniform(-0.5, 0.5, d)
    r = rng.uniform(0.3, 2)
    return l2_ball(d, r, c) if kind == "l2" else l1_ball(d, r, np.zeros(d) if kind == "l1" else c)


def scalar_ssg(grad, proj, w1, gamma, T):
    w, s = w1, w1
    for _ in range(T):
        w = proj(w - gamma * grad(w))
        s += w
    return s / (T + 1)


def schedule_oracle(n, R0, G):
    """(m, n0, steps, radii) from the stage formulas in exact integer/float arithmetic."""
    from fractions import Fraction

    import mpmath

    mpmath.mp.dps = 50
    x = mpmath.mpf(2 * n) / mpmath.log(n, 2)
    m = int(mpmath.floor(mpmath.log(x, 2) / 2)) - 1
    n0 = n // m
    radii = [float(Fraction(R0) / 2 ** k) for k in range(m + 1)]
    steps = [float(mpmath.mpf(radii[k - 1]) / (G * mpmath.sqrt(n0 + 1))) for k in range(1, m + 1)]
    return m, n0, steps, radii


def lhs_rhs_two_point(w):
    """Closed-form Bernstein sides for the two-point square loss at w (W* = {0})."""
    # f(w,y) - f(0,y) = w² - 2wy, y = ±1
    d = np.array([w * w - 2 * w, w * w + 2 * w])
    return float(np.mean(d ** 2)), float(np.mean(d))
