"""Empirical error-bound estimation and Monte-Carlo checks of the relaxed
Bernstein and central conditions.

Margins are reported as RHS − LHS, so a nonnegative margin means the
condition holds at that point.  A point passes when margin + 3·stderr ≥ 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .solvers import asa

THETA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 21))
MIN_POINTS = 100
EBC_TOL = 1e-9


# ---------------------------------------------------------------------------
# error bound condition
# ---------------------------------------------------------------------------

@dataclass
class EbcEstimate:
    theta_grid: np.ndarray
    alpha_hat: np.ndarray
    recommended_theta: Optional[float]
    witnesses: np.ndarray
    excess_floor: float
    alpha_cap: float
    n_points: int

    def alpha(self, theta):
        i = int(np.argmin(np.abs(self.theta_grid - theta)))
        if abs(self.theta_grid[i] - theta) > 1e-12:
            raise KeyError(f"theta={theta} is not on the grid")
        return float(self.alpha_hat[i])

    def rows(self):
        return [{"theta": float(t), "alpha_hat": float(a)} for t, a in zip(self.theta_grid, self.alpha_hat)]


def trajectory_points(problem, count, rng, n=20000):
    """Averaged iterates of ASA runs from random starts, ``count`` of them."""
    rng = np.random.default_rng(rng)
    out = []
    total = 0
    while total < count:
        w1 = problem.set.sample(rng, 1)[0]
        _, trace = asa(problem, w1, n, rng=rng, checkpoints="all")
        pts = np.array([r.average for r in trace.records])
        out.append(pts)
        total += len(pts)
    return np.vstack(out)[:count]


def ebc_points(problem, count, rng, uniform_frac=0.7):
    """Mix of uniform draws over W and solver-trajectory iterates."""
    rng = np.random.default_rng(rng)
    k = int(round(uniform_frac * count))
    uni = problem.set.sample(rng, k)
    if count - k <= 0:
        return uni
    return np.vstack([uni, trajectory_points(problem, count - k, rng)])


def _dist_excess(problem, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dist2 = np.array([problem.distance_to_optimal(w) ** 2 for w in points])
    excess = np.array([problem.excess(w) for w in points])
    return points, dist2, excess


def estimate_ebc(problem, points=None, theta_grid=THETA_GRID, excess_floor=None, alpha_cap=None,
                 n_points=10**5, rng=None):
    """Upper envelope α̂(θ) = max dist²/excess^θ over admitted points.

    ``excess_floor`` defaults to 1e-6 times the largest observed excess;
    ``alpha_cap`` defaults to 10·meta.ebc_alpha.  The recommended θ is the
    largest grid value whose α̂ does not exceed the cap.
    """
    if points is None:
        points = ebc_points(problem, n_points, rng)
    points, dist2, excess = _dist_excess(problem, points)
    floor = 1e-6 * float(excess.max()) if excess_floor is None else float(excess_floor)
    keep = excess >= max(floor, np.finfo(float).tiny)
    if keep.sum() < MIN_POINTS:
        raise ValueError(f"only {int(keep.sum())} points above the excess floor {floor:g}; "
                         f"need at least {MIN_POINTS}")
    pts, d2, ex = points[keep], dist2[keep], excess[keep]
    grid = np.asarray(theta_grid, dtype=float)
    if alpha_cap is None:
        a = problem.meta.ebc_alpha
        alpha_cap = 10.0 * a if np.isfinite(a) and a > 0 else 1e3
    logd = np.log(np.maximum(d2, np.finfo(float).tiny))
    loge = np.log(ex)
    alpha_hat = np.empty(grid.size)
    wit = np.empty((grid.size, pts.shape[1]))
    for i, th in enumerate(grid):
        r = np.where(d2 > 0, np.exp(logd - th * loge), 0.0)
        j = int(np.argmax(r))
        alpha_hat[i] = r[j]
        wit[i] = pts[j]
    if ex.max() <= 1.0:
        order = np.argsort(grid)
        assert np.all(np.diff(alpha_hat[order]) >= -1e-12 * alpha_hat[order][1:]), "alpha_hat not monotone"
    ok = grid[alpha_hat <= alpha_cap * (1 + 1e-12)]
    rec = float(ok.max()) if ok.size else None
    return EbcEstimate(grid, alpha_hat, rec, wit, floor, float(alpha_cap), int(keep.sum()))


@dataclass
class EbcViolation:
    point: np.ndarray
    dist2: float
    bound: float

    @property
    def margin(self):
        return self.bound - self.dist2


def check_ebc(problem, theta, alpha, points):
    """Points where dist² > α·excess^θ + 1e-9."""
    points, dist2, excess = _dist_excess(problem, points)
    bound = alpha * np.maximum(excess, 0.0) ** theta
    bad = np.nonzero(dist2 > bound + EBC_TOL)[0]
    return [EbcViolation(points[i].copy(), float(dist2[i]), float(bound[i])) for i in bad]


# ---------------------------------------------------------------------------
# moment conditions
# ---------------------------------------------------------------------------

@dataclass
class PointResult:
    w: np.ndarray
    margin: float
    stderr: float
    lhs: float
    rhs: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.margin + 3.0 * self.stderr >= 0.0


@dataclass
class ConditionCheckReport:
    kind: str
    params: dict
    points: list
    mc_samples: int
    rule: str = "margin + 3*stderr >= 0 at every point"

    @property
    def passed(self):
        return all(p.passed for p in self.points)

    @property
    def failures(self):
        return [p for p in self.points if not p.passed]

    def rows(self):
        """CSV rows (condition, theta, parameter, margin, stderr, pass)."""
        theta = self.params.get("theta")
        param = self.params.get("B", self.params.get("eta"))
        return [{"condition": self.kind, "theta": theta, "parameter": param, "margin": p.margin,
                 "stderr": p.stderr, "pass": p.passed} for p in self.points]


def _as_points(problem, w):
    w = np.asarray(w, dtype=float)
    return w.reshape(1, problem.dim) if w.ndim == 1 else w


def _loss_gap(problem, w, Z):
    ws = problem.nearest_optimal(w)
    return problem.losses(w, Z) - problem.losses(ws, Z), ws


def check_bernstein(problem, w, theta=None, B=None, mc_samples=10**4, rng=None):
    """E[(f(w,z) − f(w*,z))²] ≤ B·(E[f(w,z) − f(w*,z)])^θ with w* the nearest optimum.

    Both sides are Monte-Carlo estimates on a shared sample; the stderr of
    the margin combines the two by the delta method.  Defaults: θ and
    B = G²α from the problem metadata.
    """
    meta = problem.meta
    theta = meta.ebc_theta if theta is None else theta
    B = meta.lipschitz_G ** 2 * meta.ebc_alpha if B is None else B
    rng = np.random.default_rng(rng)
    out = []
    for wi in _as_points(problem, w):
        if problem.excess(wi) <= 0.0 and problem.distance_to_optimal(wi) == 0.0:
            out.append(PointResult(wi.copy(), 0.0, 0.0, 0.0, 0.0, {"trivial": True}))
            continue
        Z = problem.sample(rng, mc_samples)
        D, _ = _loss_gap(problem, wi, Z)
        lhs = float(np.mean(D ** 2))
        se_l = float(np.std(D ** 2, ddof=1) / math.sqrt(mc_samples))
        m = float(np.mean(D))
        se_m = float(np.std(D, ddof=1) / math.sqrt(mc_samples))
        mp = max(m, 0.0)
        rhs = B * mp ** theta
        se_r = B * theta * mp ** (theta - 1.0) * se_m if mp > 0 else B * se_m ** theta
        out.append(PointResult(wi.copy(), rhs - lhs, math.hypot(se_l, se_r), lhs, rhs,
                               {"excess_mc": m, "excess": problem.excess(wi)}))
    return ConditionCheckReport("bernstein", {"theta": theta, "B": B}, out, mc_samples)


def kappa(x):
    """κ(x) = (eˣ − x − 1)/x², with κ(0) = 1/2."""
    x = float(x)
    if abs(x) < 1e-4:
        return 0.5 + x / 6.0 + x * x / 24.0
    if x > 700.0:
        return math.inf
    return (math.expm1(x) - x) / (x * x)


def log_kappa(x):
    x = float(x)
    if x > 700.0:
        # eˣ dominates: log κ = x − 2 log x + log(1 − (x+1)e^{−x})
        return x - 2.0 * math.log(x) + math.log1p(-(x + 1.0) * math.exp(-x))
    return math.log(kappa(x))


def central_constants(problem, epsilon, b=1.0, theta=None, alpha=None):
    """(c, η) with c = 1/(αG²κ(4GRb)) and η = min(c·ε^{1−θ}, b)."""
    meta = problem.meta
    theta = meta.ebc_theta if theta is None else theta
    alpha = meta.ebc_alpha if alpha is None else alpha
    G, R = meta.lipschitz_G, meta.diameter_R
    logc = -(math.log(alpha * G * G) + log_kappa(4.0 * G * R * b))
    c = math.exp(logc)
    eta = min(c * epsilon ** (1.0 - theta), b) if epsilon > 0 or theta == 1 else 0.0
    return c, eta


def check_central(problem, w, epsilon, b=1.0, mc_samples=10**4, rng=None, theta=None, alpha=None):
    """E exp(η(f(w*,z) − f(w,z))) ≤ e^{ηε}, checked in log space.

    The margin is ηε − log(moment); its stderr is the relative stderr of the
    moment (delta method).  Exponentials are evaluated with log-sum-exp.
    When excess(w) ≥ ε the stronger "moment ≤ 1" form is also reported
    under ``extra["strong_margin"]`` / ``extra["strong_pass"]``.
    """
    if epsilon < 0 or b <= 0:
        raise ValueError("need epsilon >= 0 and b > 0")
    c, eta = central_constants(problem, epsilon, b, theta, alpha)
    rng = np.random.default_rng(rng)
    out = []
    for wi in _as_points(problem, w):
        Z = problem.sample(rng, mc_samples)
        D, _ = _loss_gap(problem, wi, Z)
        a = -eta * D
        amax = float(a.max())
        # log-sum-exp with expm1/log1p so tiny exponents keep full precision
        logm = amax + math.log1p(float(np.mean(np.expm1(a - amax))))
        scaled = np.exp(a - amax)
        rel = float(np.std(scaled, ddof=1) / math.sqrt(mc_samples) / scaled.mean())
        margin = eta * epsilon - logm
        extra = {"log_moment": logm, "excess": problem.excess(wi)}
        if extra["excess"] >= epsilon:
            extra["strong_margin"] = -logm
            extra["strong_pass"] = -logm + 3.0 * rel >= 0.0
        out.append(PointResult(wi.copy(), margin, rel, logm, eta * epsilon, extra))
    params = {"theta": problem.meta.ebc_theta if theta is None else theta, "eta": eta,
              "epsilon": epsilon, "b": b, "c": c}
    return ConditionCheckReport("central", params, out, mc_samples)


def central_sensitivity(problem, w, epsilon, bs=(0.1, 1.0, 10.0), mc_samples=10**4, rng=None):
    """check_central over several b; b has no canonical value."""
    rng = np.random.default_rng(rng)
    return {b: check_central(problem, w, epsilon, b, mc_samples, rng) for b in bs}
