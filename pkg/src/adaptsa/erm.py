"""Empirical risk minimisation and excess-risk rate studies.

``solve_erm`` certifies its answer with a lower bound on min P_n built from
linearisations of the (convex) data term, so the returned point satisfies
P_n(w) − min P_n ≤ tolerance or the call fails loudly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import box, prox_l1
from .problems import (EMP_SQUARE, HINGE, LEAST_SQUARES, LINEAR, QUADRATIC, batch_grad_weighted,
                       batch_losses, make_pnorm_composite, make_random_linear, two_point_square)

SMOOTH_KINDS = (LEAST_SQUARES, QUADRATIC, LINEAR, EMP_SQUARE)


class ErmError(RuntimeError):
    pass


class _Objective:
    """P_n(w) = F(w) + λ‖w‖₁ with F the mean data loss (plus any smooth regulariser)."""

    def __init__(self, problem, Z):
        self.p = problem
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        # repeated data (finite supports) collapse to weighted distinct rows
        U, counts = np.unique(Z, axis=0, return_counts=True)
        self.Z = np.ascontiguousarray(U)
        self.wts = counts / counts.sum()
        self.lam = problem.l1_lambda

    def F(self, w):
        p = self.p
        return float(self.wts @ batch_losses(p.kind, p.aux, w, self.Z, p.pnorm_lambda, p.pnorm_p, 0.0))

    def grad(self, w):
        p = self.p
        return batch_grad_weighted(p.kind, p.aux, w, self.Z, self.wts, p.pnorm_lambda, p.pnorm_p)

    def value(self, w):
        return self.F(w) + self.lam * float(np.abs(w).sum())

    def prox(self, v, t):
        return prox_l1(v, t * self.lam, self.p.set)


def _lin_min(fset, g, lam):
    """min over u∈W of gᵀu + λ‖u‖₁."""
    if lam == 0.0:
        return -fset.support(-g)
    if fset.kind != "box":
        raise NotImplementedError("ℓ1 certificates are implemented for boxes only")
    lo, hi = fset.lower, fset.upper
    cand = [g * lo + lam * np.abs(lo), g * hi + lam * np.abs(hi)]
    zero_in = (lo <= 0) & (hi >= 0)
    cand.append(np.where(zero_in, 0.0, np.inf))
    return float(np.min(cand, axis=0).sum())


def _gap_at(obj, w, g=None):
    """P_n(w) − (lower bound from the linearisation at w): the Frank–Wolfe gap."""
    g = obj.grad(w) if g is None else g
    Fw = obj.F(w)
    lb = Fw - g @ w + _lin_min(obj.p.set, g, obj.lam)
    return obj.value(w) - lb


def _fista(obj, w0, tol, max_iter, L0):
    w = obj.p.set.project(w0)
    y, t, L = w.copy(), 1.0, L0
    gap = _gap_at(obj, w)
    for it in range(max_iter):
        if gap <= tol:
            return w, gap, it
        gy, Fy = obj.grad(y), obj.F(y)
        while True:
            x = obj.prox(y - gy / L, 1.0 / L)
            dx = x - y
            if obj.F(x) <= Fy + gy @ dx + 0.5 * L * (dx @ dx) + 1e-14 * max(1.0, abs(Fy)):
                break
            L *= 2.0
        # gradient-based restart: function values are too coarse near the optimum
        if (y - x) @ (x - w) > 0:
            t = 1.0
        t1 = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x + ((t - 1.0) / t1) * (x - w)
        w, t = x, t1
        gap = _gap_at(obj, w)
    raise ErmError(f"accelerated solver stopped at gap {gap:.3e} > tolerance {tol:.3e}")


def _ternary(obj, tol, G):
    lo, hi = float(obj.p.set.lower[0]), float(obj.p.set.upper[0])
    f = lambda x: obj.value(np.array([x]))
    while hi - lo > 1e-13 * max(1.0, abs(lo) + abs(hi)):
        a, b = lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0
        if f(a) <= f(b):
            hi = b
        else:
            lo = a
    w = np.array([0.5 * (lo + hi)])
    # the minimiser lies in [lo, hi] and P_n is G-Lipschitz
    return w, G * (hi - lo)


def _subgradient(obj, w0, tol, max_iter, G):
    """Diminishing-step projected subgradient with best-iterate tracking.

    The certificate aggregates linearisations with the step weights.
    """
    fset = obj.p.set
    D = fset.diameter()
    w = fset.project(w0)
    best, fbest = w.copy(), obj.value(w)
    gsum = np.zeros_like(w)
    csum = 0.0
    asum = 0.0
    gap = math.inf
    for k in range(1, max_iter + 1):
        g = obj.grad(w)
        Fw = obj.F(w)
        a = D / (max(G, 1e-12) * math.sqrt(k))
        gsum += a * g
        csum += a * (Fw - g @ w)
        asum += a
        fw = Fw + obj.lam * float(np.abs(w).sum())
        if fw < fbest:
            best, fbest = w.copy(), fw
        lb = csum / asum + _lin_min(fset, gsum / asum, obj.lam)
        gap = min(gap, fbest - lb, _gap_at(obj, best))
        if gap <= tol:
            return best, gap, k
        full = g + obj.lam * np.sign(w)
        w = fset.project(w - a * full)
    raise ErmError(f"subgradient solver stopped at gap {gap:.3e} > tolerance {tol:.3e}")


def solve_erm(problem, samples, tolerance=1e-8, max_iter=100000, w0=None, return_gap=False):
    """argmin over W of P_n(w) = mean f(w, z_i) + r(w), to within ``tolerance``.

    Smooth data terms use accelerated proximal gradient with backtracking;
    piecewise-linear ones use projected subgradient steps (1-D problems are
    polished by ternary search).  Raises ErmError if the certified gap stays
    above ``tolerance``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    obj = _Objective(problem, samples)
    d = problem.dim
    w0 = np.zeros(d) if w0 is None else np.asarray(w0, dtype=float)
    G = problem.meta.lipschitz_G
    if problem.kind in SMOOTH_KINDS:
        L0 = problem.meta.smoothness_L or 1.0
        w, gap, _ = _fista(obj, w0, tolerance, max_iter, max(L0, 1e-8))
    elif problem.kind == HINGE and _hinge_linear_on_set(problem, obj.Z):
        w, gap = _hinge_lp(obj)
    elif d == 1:
        w, gap = _ternary(obj, tolerance, G)
        if gap > tolerance:
            raise ErmError(f"1-D search stopped at gap {gap:.3e} > tolerance {tolerance:.3e}")
    else:
        w, gap, _ = _subgradient(obj, w0, tolerance, max_iter, G)
        # restart stability: a second start must agree in value
        w2, _, _ = _subgradient(obj, problem.set.project(-w0 + 0.5), tolerance, max_iter, G)
        if abs(obj.value(w) - obj.value(w2)) > 2 * tolerance:
            raise ErmError("restart check disagrees beyond tolerance")
    return (w, gap) if return_gap else w


def _hinge_linear_on_set(problem, Z):
    # margins never reach 1 on W, so the empirical hinge loss is linear there
    return all(problem.set.support(u) < 1.0 and problem.set.support(-u) < 1.0 for u in Z)


def _hinge_lp(obj):
    """Empirical hinge risk 1 − wᵀū (+λ‖w‖₁) is linear on W; minimise it directly."""
    fset = obj.p.set
    g = -(obj.wts @ obj.Z)
    if obj.lam == 0.0 and fset.kind == "box":
        w = np.where(g < 0, fset.upper, np.where(g > 0, fset.lower, np.clip(0.0, fset.lower, fset.upper)))
    elif fset.kind == "box":
        lo, hi, lam = fset.lower, fset.upper, obj.lam
        cands = np.stack([lo, hi, np.clip(np.zeros_like(lo), lo, hi)])
        vals = g * cands + lam * np.abs(cands)
        w = cands[np.argmin(vals, axis=0), np.arange(lo.size)]
    else:
        w, gap, _ = _subgradient(obj, np.zeros(fset.dim), 1e-12, 100000, obj.p.meta.lipschitz_G)
        return w, gap
    return w, _gap_at(obj, w, g)


# ---------------------------------------------------------------------------
# rate studies
# ---------------------------------------------------------------------------

def log_slope(ns, values):
    """Least-squares slope and intercept of log(values) against log(ns), with the slope stderr."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    se = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
    return float(coef[0]), float(coef[1]), se, float(np.sqrt(np.mean(resid ** 2)))


@dataclass
class ErmStudyResult:
    problem: str
    n_grid: np.ndarray
    excess: np.ndarray
    medians: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float
    tolerance: float
    theta: float
    exact_recovery: bool = False
    notes: list = field(default_factory=list)

    @property
    def predicted_exponent(self):
        return -1.0 / (2.0 - self.theta)

    @property
    def optimistic_exponent(self):
        return -2.0 / (2.0 - self.theta)

    @property
    def band(self):
        return (self.slope - 2 * self.slope_stderr, self.slope + 2 * self.slope_stderr)

    def doubling_ok(self):
        """Median excess never rises by more than 2σ of the replicate noise as n grows."""
        ok = True
        for i in range(1, len(self.n_grid)):
            prev = self.excess[i - 1]
            noise = 2.0 * np.std(prev, ddof=1) / math.sqrt(prev.size)
            ok &= bool(self.medians[i] <= self.medians[i - 1] + noise)
        return ok

    def rows(self):
        out = []
        for i, n in enumerate(self.n_grid):
            for r, e in enumerate(self.excess[i]):
                out.append({"problem": self.problem, "n": int(n), "replicate": r, "excess_risk": float(e)})
        return out


def default_tolerance(problem, n_grid, zero_noise=False):
    """1e-2 times a rate-shaped guess (d/n)^{1/(2−θ)} of the smallest expected excess."""
    th = problem.meta.ebc_theta
    expo = (2.0 if zero_noise else 1.0) / (2.0 - th)
    return 1e-2 * (problem.dim / max(n_grid)) ** expo


def erm_rate_study(problem, n_grid, replicates=10, tolerance=None, rng=None, zero_noise=False):
    """Median true excess of the ERM solution per n and its log-log slope.

    Excesses below the optimisation tolerance are indistinguishable from
    exact recovery and are set to 0.  If every median is 0 the fitted slope
    is −inf (the excess vanishes faster than any power of n).
    """
    n_grid = np.asarray(sorted(set(int(n) for n in n_grid)))
    if n_grid.size < 4:
        raise ValueError("a rate study needs at least 4 distinct n values")
    if replicates < 10:
        raise ValueError("a rate study needs at least 10 replicates")
    tol = default_tolerance(problem, n_grid, zero_noise) if tolerance is None else tolerance
    seq = np.random.SeedSequence(rng if rng is not None else 0)
    streams = seq.spawn(n_grid.size * replicates)
    ex = np.empty((n_grid.size, replicates))
    for i, n in enumerate(n_grid):
        for r in range(replicates):
            g = np.random.default_rng(streams[i * replicates + r])
            Z = problem.sample(g, int(n))
            w = solve_erm(problem, Z, tol)
            e = problem.excess(w)
            if e < -tol:
                raise ErmError(f"negative excess {e:.3e} beyond tolerance")
            ex[i, r] = e if e > tol else 0.0
    med = np.median(ex, axis=1)
    notes = []
    pos = med > 0
    if pos.sum() >= 2:
        slope, icpt, se, _ = log_slope(n_grid[pos], med[pos])
        if pos.sum() < n_grid.size:
            notes.append(f"{int((~pos).sum())} n values with zero median excess left out of the fit")
        exact = False
    else:
        slope, icpt, se, exact = -math.inf, math.nan, math.nan, True
        notes.append("median excess is zero at (almost) every n: exact recovery")
    return ErmStudyResult(problem.name, n_grid, ex, med, slope, icpt, se, tol, problem.meta.ebc_theta,
                          exact, notes)


def zero_noise_variant(name):
    """P* = 0 versions of the registry instances used in rate studies."""
    if name == "two_point_square":
        return two_point_square(noise=0.0, name="two_point_square_noiseless")
    if name == "quartic_composite":
        base = make_random_linear([[0.0]], box([-1.0], [1.0]), name="linear_zero")
        return make_pnorm_composite(base, 1.0, 4, name="quartic_composite_noiseless")
    raise KeyError(f"no zero-noise variant for {name!r}")
