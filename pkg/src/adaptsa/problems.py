"""Stochastic problem oracles with closed-form risk and optimal sets.

Every instance carries exact ground truth: P*, the optimal set W* (always a
product of coordinate intervals here, so the nearest optimal point is a
clip), the Lipschitz constant G and the EBC pair (θ, α).

Per-sample losses and gradients are evaluated by one jitted dispatcher keyed
on ``kind`` so the solver loops stay in compiled code.  A datum is a row of
a 2-D float array; what the row holds depends on the kind:

=============  ==============================================
kind           row layout
=============  ==============================================
LEAST_SQUARES  ``[x_1..x_d, y]``
HINGE          ``u = y·x``
QUADRATIC      ``z``
NEWSVENDOR     ``[scenario index]``
LINEAR         ``z``
EMP_SQUARE     ``[training row index]`` (CSR data in aux)
EMP_HINGE      ``[training row index]``
=============  ==============================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numba
import numpy as np

from .geometry import FeasibleSet, box, prox_l1

LEAST_SQUARES, HINGE, QUADRATIC, NEWSVENDOR, LINEAR, EMP_SQUARE, EMP_HINGE = range(7)

_jit = numba.njit(cache=True, nogil=True)


def _empty_aux():
    return (np.zeros((1, 1)), np.zeros(1), np.zeros(1),
            np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))


@_jit
def _row_dot(w, indptr, indices, values, i):
    s = 0.0
    for k in range(indptr[i], indptr[i + 1]):
        s += w[indices[k]] * values[k]
    return s


@_jit
def data_loss(kind, aux, w, z):
    F2, F1, F1b, I1, I2 = aux
    d = w.size
    if kind == LEAST_SQUARES:
        r = 0.0
        for i in range(d):
            r += w[i] * z[i]
        r -= z[d]
        return r * r
    if kind == HINGE:
        m = 1.0
        for i in range(d):
            m -= w[i] * z[i]
        return m if m > 0.0 else 0.0
    if kind == QUADRATIC:
        zw = 0.0
        for i in range(d):
            zw += z[i] * w[i]
        return w @ (F2 @ w) - zw * zw - F1 @ w
    if kind == NEWSVENDOR:
        s = int(z[0])
        J = I1[0]
        best = np.inf
        for j in range(J):
            row = s * J + j
            v = F1[row]
            for i in range(d):
                v += F2[row, i] * w[i]
            if v < best:
                best = v
        return F1b @ w - best
    if kind == LINEAR:
        return w @ z
    i = int(z[0])
    mval = _row_dot(w, I1, I2, F1, i)
    if kind == EMP_SQUARE:
        r = mval - F1b[i]
        return r * r
    m = 1.0 - F1b[i] * mval
    return m if m > 0.0 else 0.0


@_jit
def data_grad(kind, aux, w, z):
    F2, F1, F1b, I1, I2 = aux
    d = w.size
    g = np.zeros(d)
    if kind == LEAST_SQUARES:
        r = 0.0
        for i in range(d):
            r += w[i] * z[i]
        r -= z[d]
        for i in range(d):
            g[i] = 2.0 * r * z[i]
        return g
    if kind == HINGE:
        m = 1.0
        for i in range(d):
            m -= w[i] * z[i]
        # at the kink (margin exactly 1) the zero element is returned
        if m > 0.0:
            for i in range(d):
                g[i] = -z[i]
        return g
    if kind == QUADRATIC:
        zw = 0.0
        for i in range(d):
            zw += z[i] * w[i]
        g = 2.0 * (F2 @ w) - 2.0 * zw * z[:d] - F1
        return g
    if kind == NEWSVENDOR:
        s = int(z[0])
        J = I1[0]
        best = np.inf
        jstar = 0
        for j in range(J):
            row = s * J + j
            v = F1[row]
            for i in range(d):
                v += F2[row, i] * w[i]
            if v < best:
                best = v
                jstar = j
        for i in range(d):
            g[i] = F1b[i] - F2[s * J + jstar, i]
        return g
    if kind == LINEAR:
        for i in range(d):
            g[i] = z[i]
        return g
    i = int(z[0])
    mval = _row_dot(w, I1, I2, F1, i)
    if kind == EMP_SQUARE:
        c = 2.0 * (mval - F1b[i])
    else:
        c = -F1b[i] if 1.0 - F1b[i] * mval > 0.0 else 0.0
    for k in range(I1[i], I1[i + 1]):
        g[I2[k]] += c * F1[k]
    return g


@_jit
def smooth_extra_grad(w, plam, pexp, g):
    if plam > 0.0:
        for i in range(w.size):
            g[i] += plam * pexp * w[i] ** (pexp - 1.0)


@_jit
def batch_losses(kind, aux, w, Z, plam, pexp, l1):
    out = np.empty(Z.shape[0])
    extra = 0.0
    if plam > 0.0:
        for i in range(w.size):
            extra += plam * w[i] ** pexp
    if l1 > 0.0:
        extra += l1 * np.abs(w).sum()
    for t in range(Z.shape[0]):
        out[t] = data_loss(kind, aux, w, Z[t]) + extra
    return out


@_jit
def batch_grad_weighted(kind, aux, w, Z, wts, plam, pexp):
    g = np.zeros(w.size)
    for t in range(Z.shape[0]):
        g += wts[t] * data_grad(kind, aux, w, Z[t])
    smooth_extra_grad(w, plam, pexp, g)
    return g


@_jit
def batch_grad_mean(kind, aux, w, Z, plam, pexp):
    g = np.zeros(w.size)
    for t in range(Z.shape[0]):
        g += data_grad(kind, aux, w, Z[t])
    g /= Z.shape[0]
    smooth_extra_grad(w, plam, pexp, g)
    return g


# ---------------------------------------------------------------------------
# ground-truth containers
# ---------------------------------------------------------------------------

@dataclass
class ProblemMeta:
    dimension: int
    lipschitz_G: float
    smoothness_L: Optional[float]
    diameter_R: float
    risk_min_Pstar: float
    ebc_theta: float
    ebc_alpha: float
    composite_lambda: Optional[float] = None

    def __post_init__(self):
        for name in ("lipschitz_G", "diameter_R", "risk_min_Pstar", "ebc_theta", "ebc_alpha"):
            setattr(self, name, float(getattr(self, name)))
        if self.smoothness_L is not None:
            self.smoothness_L = float(self.smoothness_L)


@dataclass(frozen=True, eq=False)
class IntervalOptimum:
    """W* = ∏ [lower_i, upper_i]; the nearest optimal point is a clip."""

    lower: np.ndarray
    upper: np.ndarray

    def nearest(self, w):
        return np.clip(w, self.lower, self.upper)

    def distance(self, w):
        w = np.asarray(w, dtype=float)
        return float(np.linalg.norm(w - self.nearest(w)))


def _point(w):
    w = np.asarray(w, dtype=float)
    return IntervalOptimum(w.copy(), w.copy())


class FiniteSampler:
    """Draws rows of ``support`` with probabilities ``probs``."""

    def __init__(self, support, probs=None):
        self.support = np.atleast_2d(np.asarray(support, dtype=float))
        k = self.support.shape[0]
        if k == 0:
            raise ValueError("empty support")
        if not np.all(np.isfinite(self.support)):
            raise ValueError("support must be finite (bounded distribution)")
        if probs is None:
            self.probs = None
        else:
            p = np.asarray(probs, dtype=float)
            if p.shape != (k,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
                raise ValueError("probs must be a length-K probability vector")
            self.probs = p / p.sum()

    @property
    def weights(self):
        k = self.support.shape[0]
        return np.full(k, 1.0 / k) if self.probs is None else self.probs

    def __call__(self, rng, size):
        k = self.support.shape[0]
        if self.probs is None:
            idx = rng.integers(0, k, size)
        else:
            idx = rng.choice(k, size=size, p=self.probs)
        return self.support[idx]


@dataclass(eq=False)
class StochasticProblem:
    """Oracle bundle for min_{w∈W} E f(w, z) + r(w).

    ``loss`` and ``subgradient`` are per-sample and include the regularizer,
    so their expectations are P and a subgradient of P.  ``data_subgradient``
    leaves out the ℓ1 term (the proximal solvers handle it separately).
    """

    name: str
    meta: ProblemMeta
    set: FeasibleSet
    kind: int
    aux: tuple
    sampler: Callable
    risk_fn: Callable
    optimum: Optional[IntervalOptimum]
    l1_lambda: float = 0.0
    pnorm_lambda: float = 0.0
    pnorm_p: float = 2.0
    convex: bool = True
    smooth: bool = False
    data_lipschitz: float = 0.0
    spec: dict = field(default_factory=dict)

    @property
    def regularizer(self):
        return ("l1", self.l1_lambda) if self.l1_lambda > 0 else ("none", 0.0)

    @property
    def dim(self):
        return self.meta.dimension

    @property
    def has_optimum(self):
        return self.optimum is not None

    @property
    def oracle(self):
        """Tuple consumed by the jitted solver loops."""
        return (self.kind, self.aux, float(self.pnorm_lambda), float(self.pnorm_p),
                float(self.l1_lambda))

    def sample(self, rng, size=None):
        if size is None:
            return self.sampler(rng, 1)[0]
        return self.sampler(rng, size)

    def _w(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ValueError(f"expected w of shape ({self.dim},), got {w.shape}")
        return w

    def loss(self, w, z):
        w = self._w(w)
        return float(batch_losses(self.kind, self.aux, w, np.atleast_2d(z),
                                  self.pnorm_lambda, self.pnorm_p, self.l1_lambda)[0])

    def losses(self, w, Z):
        return batch_losses(self.kind, self.aux, self._w(w), np.atleast_2d(Z),
                            self.pnorm_lambda, self.pnorm_p, self.l1_lambda)

    def data_subgradient(self, w, z):
        w = self._w(w)
        g = data_grad(self.kind, self.aux, w, np.asarray(z, dtype=float))
        smooth_extra_grad(w, self.pnorm_lambda, self.pnorm_p, g)
        return g

    def subgradient(self, w, z):
        g = self.data_subgradient(w, z)
        if self.l1_lambda > 0:
            g = g + self.l1_lambda * np.sign(w)
        return g

    def risk(self, w):
        return float(self.risk_fn(self._w(w)))

    def excess(self, w):
        return self.risk(w) - self.meta.risk_min_Pstar

    def _need_optimum(self):
        if self.optimum is None:
            raise ValueError(f"{self.name}: optimal set unknown; EBC-dependent operations are disabled")

    def distance_to_optimal(self, w):
        self._need_optimum()
        return self.optimum.distance(self._w(w))

    def nearest_optimal(self, w):
        self._need_optimum()
        return self.optimum.nearest(self._w(w))


# ---------------------------------------------------------------------------
# exact optima
# ---------------------------------------------------------------------------

def _fista(M, lin, fset, l1=0.0, iters=200000, tol=1e-15):
    """Minimise wᵀMw + linᵀw + l1‖w‖₁ over fset (M ≻ 0) to machine precision."""
    L = 2.0 * np.linalg.eigvalsh(M).max()
    w = fset.project(np.zeros(fset.dim)) if fset is not None else np.zeros(M.shape[0])
    y, t = w.copy(), 1.0
    for _ in range(iters):
        g = 2.0 * M @ y + lin
        w_new = prox_l1(y - g / L, l1 / L, fset)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = w_new + ((t - 1.0) / t_new) * (w_new - w)
        if np.max(np.abs(w_new - w)) < tol:
            return w_new
        if (w_new - w) @ (y - w_new) > 0:  # gradient restart
            y, t_new = w_new.copy(), 1.0
        w, t = w_new, t_new
    return w


def _quadratic_optimum(M, lin, fset, l1=0.0):
    """W* and α for wᵀMw + linᵀw (+ l1‖w‖₁) over fset.

    Handles M ≻ 0 on any set, and on a box the case where the null space of
    M is spanned by coordinate axes that the linear term does not touch.
    With l1 > 0 those free coordinates sit at the point of the box nearest 0.
    """
    M = 0.5 * (M + M.T)
    evals = np.linalg.eigvalsh(M)
    if evals.min() < -1e-9:
        raise ValueError("quadratic term is not positive semidefinite")
    if evals.min() > 1e-12:
        w = _fista(M, lin, fset, l1)
        return _point(w), 1.0 / evals.min()
    null = np.all(np.abs(M) <= 1e-14, axis=1)
    if fset.kind != "box" or np.any(np.abs(lin[null]) > 0):
        raise NotImplementedError(
            "singular quadratic risk supported only on boxes with an axis-aligned null space")
    F = ~null
    lo, hi = fset.lower.copy(), fset.upper.copy()
    alpha = 1.0
    if l1 > 0:
        # excess grows like l1·|w_i − w*_i| on a free coordinate
        mid = np.clip(0.0, lo[null], hi[null])
        lo[null] = mid
        hi[null] = mid
        alpha = float(np.max(fset.upper[null] - fset.lower[null])) / l1
    if F.any():
        MF = M[np.ix_(F, F)]
        sub = box(fset.lower[F], fset.upper[F])
        wF = _fista(MF, lin[F], sub, l1)
        lo[F] = wF
        hi[F] = wF
        alpha = max(alpha, 1.0 / np.linalg.eigvalsh(MF).min())
    return IntervalOptimum(lo, hi), alpha


def _pwl_1d(xs, vs):
    """Optimal interval and EBC α of a convex piecewise-linear function on [xs[0], xs[-1]]."""
    vmin = vs.min()
    tol = 1e-12 * max(1.0, abs(vmin))
    on = np.flatnonzero(vs <= vmin + tol)
    a, b = on[0], on[-1]
    alpha = 0.0
    if a > 0:
        slope = (vs[a - 1] - vs[a]) / (xs[a] - xs[a - 1])
        alpha = max(alpha, (xs[a] - xs[0]) / slope)
    if b < len(xs) - 1:
        slope = (vs[b + 1] - vs[b]) / (xs[b + 1] - xs[b])
        alpha = max(alpha, (xs[-1] - xs[b]) / slope)
    return xs[a], xs[b], float(vmin), alpha


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def _lipschitz_square(X, y, fset):
    worst = 0.0
    for x, t in zip(X, y):
        dev = max(fset.support(x) - t, fset.support(-x) + t)
        worst = max(worst, 2.0 * dev * np.linalg.norm(x))
    return worst


def make_least_squares(X, y, fset, probs=None, name="least_squares"):
    """Expected square loss E(wᵀx − y)² over a finite-support law of (x, y).

    ``X`` is K×d, ``y`` has length K.  The second moments are exact, so the
    risk, P*, W* and α = 1/λ_min(E xxᵀ) are exact as well.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("X and y disagree on the support size")
    if fset.kind == "l2":
        raise ValueError("least squares instances need a polyhedral set (box or l1 ball)")
    d = X.shape[1]
    sampler = FiniteSampler(np.column_stack([X, y]), probs)
    p = sampler.weights
    A = (X * p[:, None]).T @ X
    bx = (X * (p * y)[:, None]).sum(axis=0)
    c = float(p @ y ** 2)

    def risk(w):
        return w @ A @ w - 2.0 * bx @ w + c

    opt, alpha = _quadratic_optimum(A, -2.0 * bx, fset)
    G = _lipschitz_square(X, y, fset)
    meta = ProblemMeta(d, G, 2.0 * float(np.max(np.sum(X ** 2, axis=1))), fset.max_norm(),
                       risk(opt.nearest(np.zeros(d))), 1.0, alpha)
    spec = {"kind": "least_squares", "X": X.tolist(), "y": y.tolist(),
            "probs": None if probs is None else list(map(float, probs)), "set": fset.to_dict()}
    return StochasticProblem(name, meta, fset, LEAST_SQUARES, _empty_aux(), sampler, risk, opt,
                             smooth=True, data_lipschitz=G, spec=spec)


def two_point_square(noise=1.0, name="two_point_square"):
    """d = 1, x ≡ 1, y = ±noise equiprobable, W = [−1, 1]; risk w² + noise²."""
    return make_least_squares([[1.0], [1.0]], [-noise, noise], box([-1.0], [1.0]), name=name)


def make_hinge(mu, fset, noise=None, name="hinge"):
    """Expected hinge loss with u = y·x = μ + noise·s·e_j (j uniform, s = ±1).

    The data are scaled so |wᵀu| ≤ 1 on W, hence P(w) = 1 − μᵀw exactly.
    ``noise`` defaults to 90% of the largest admissible amplitude.
    """
    mu = np.asarray(mu, dtype=float)
    d = mu.size
    if not np.any(mu):
        raise ValueError("hinge instance needs E[yx] != 0")
    if fset.dim != d:
        raise ValueError("dimension mismatch between mu and the set")
    base = max(fset.support(mu), fset.support(-mu))
    unit = max(max(fset.support(e), fset.support(-e)) for e in np.eye(d))
    limit = (1.0 - base) / unit
    if limit < 0:
        raise ValueError("|w'mu| exceeds 1 on W; rescale mu")
    if noise is None:
        noise = 0.9 * limit
    support = np.vstack([mu + s * noise * e for e in np.eye(d) for s in (1.0, -1.0)])
    worst = max(max(fset.support(u), fset.support(-u)) for u in support)
    if worst > 1.0 + 1e-12:
        raise ValueError(f"noise {noise} violates |w'u| <= 1 on W (max {worst:.4f})")

    def risk(w):
        return 1.0 - mu @ w

    if fset.kind == "box":
        lo, hi = fset.lower.copy(), fset.upper.copy()
        lo[mu > 0] = fset.upper[mu > 0]
        hi[mu < 0] = fset.lower[mu < 0]
        nz = mu != 0
        alpha = float(np.max((fset.upper - fset.lower)[nz] / np.abs(mu[nz])))
        opt = IntervalOptimum(lo, hi)
    elif fset.kind == "l2":
        r = fset.radius
        opt = _point(fset.center + r * mu / np.linalg.norm(mu))
        alpha = 2.0 * r / np.linalg.norm(mu)
    else:
        a = np.abs(mu)
        j = int(np.argmax(a))
        rest = np.delete(a, j)
        gap = a[j] - (rest.max() if rest.size else 0.0)
        if gap <= 0:
            raise NotImplementedError("l1-ball hinge needs a unique largest |mu_i|")
        w = fset.center.copy()
        w[j] += fset.radius * np.sign(mu[j])
        opt = _point(w)
        alpha = 8.0 * fset.radius / gap
    G = float(np.max(np.linalg.norm(support, axis=1)))
    meta = ProblemMeta(d, G, None, fset.max_norm(), 1.0 - fset.support(mu), 1.0, alpha)
    spec = {"kind": "hinge", "mu": mu.tolist(), "noise": float(noise), "set": fset.to_dict()}
    return StochasticProblem(name, meta, fset, HINGE, _empty_aux(), FiniteSampler(support), risk,
                             opt, data_lipschitz=G, spec=spec)


def make_shifted_quadratic(S, Z, b, fset, probs=None, name="shifted_quadratic"):
    """E[wᵀ(S − zzᵀ)w] − bᵀw over a finite-support law of z (rows of ``Z``).

    Individual losses may be non-convex; the risk matrix S − E zzᵀ must be
    positive semidefinite.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    d = S.shape[0]
    sampler = FiniteSampler(Z, probs)
    p = sampler.weights
    Ezz = (Z * p[:, None]).T @ Z
    M = S - Ezz
    if np.linalg.eigvalsh(0.5 * (M + M.T)).min() < -1e-9:
        raise ValueError("S - E[zz'] must be positive semidefinite")

    def risk(w):
        return w @ M @ w - b @ w

    opt, alpha = _quadratic_optimum(M, -b, fset)
    R = fset.max_norm()
    G = max(2.0 * np.linalg.norm(S - np.outer(z, z), 2) * R + np.linalg.norm(b) for z in Z)
    L = max(2.0 * np.linalg.norm(S - np.outer(z, z), 2) for z in Z)
    meta = ProblemMeta(d, float(G), float(L), R, risk(opt.nearest(np.zeros(d))), 1.0, alpha)
    aux = (S.copy(), b.copy(), np.zeros(1), np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))
    convex = all(np.linalg.eigvalsh(S - np.outer(z, z)).min() >= -1e-12 for z in Z)
    spec = {"kind": "shifted_quadratic", "S": S.tolist(), "Z": Z.tolist(), "b": b.tolist(),
            "probs": None if probs is None else list(map(float, probs)), "set": fset.to_dict()}
    return StochasticProblem(name, meta, fset, QUADRATIC, aux, sampler, risk, opt,
                             convex=convex, smooth=True, data_lipschitz=float(G), spec=spec)


def make_random_linear(Z, fset, probs=None, name="random_linear"):
    """f(w, z) = zᵀw over a finite-support law of z (a quadratic with zero curvature)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    sampler = FiniteSampler(Z, probs)
    mean = sampler.weights @ Z
    d = Z.shape[1]

    def risk(w):
        return mean @ w

    G = float(np.max(np.linalg.norm(Z, axis=1)))
    P = -fset.support(-mean)
    opt = None
    if not np.any(mean):
        opt = IntervalOptimum(fset.lower.copy(), fset.upper.copy()) if fset.kind == "box" else None
    meta = ProblemMeta(d, G, 0.0, fset.max_norm(), P, 1.0, 1.0)
    spec = {"kind": "random_linear", "Z": Z.tolist(),
            "probs": None if probs is None else list(map(float, probs)), "set": fset.to_dict()}
    return StochasticProblem(name, meta, fset, LINEAR, _empty_aux(), sampler, risk, opt,
                             smooth=True, data_lipschitz=G, spec=spec)


def make_l1_regularized(base, lam, name=None):
    """Composite problem E f(w, z) + λ‖w‖₁ on base's set."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if base.l1_lambda > 0 or base.pnorm_lambda > 0:
        raise ValueError("base already carries a regularizer")
    if lam == 0:
        return base
    fset = base.set
    d = base.dim
    base_risk = base.risk_fn

    def risk(w):
        return base_risk(w) + lam * np.abs(w).sum()

    if base.kind == HINGE:
        if fset.kind != "box":
            raise NotImplementedError("l1-regularized hinge is supported on boxes")
        mu = np.asarray(base.spec["mu"])
        lo, hi = np.empty(d), np.empty(d)
        alpha, pstar = 0.0, 1.0
        for i in range(d):
            xs = np.unique([fset.lower[i], min(max(0.0, fset.lower[i]), fset.upper[i]), fset.upper[i]])
            vs = -mu[i] * xs + lam * np.abs(xs)
            if xs.size == 1:
                lo[i] = hi[i] = xs[0]
                pstar += vs[0]
                continue
            lo[i], hi[i], vmin, a = _pwl_1d(xs, vs)
            pstar += vmin
            alpha = max(alpha, a)
        opt = IntervalOptimum(lo, hi)
        alpha = alpha if alpha > 0 else 1.0
    elif base.kind in (LEAST_SQUARES, QUADRATIC):
        if base.kind == LEAST_SQUARES:
            X = np.asarray(base.spec["X"])
            yv = np.asarray(base.spec["y"])
            p = base.sampler.weights
            M = (X * p[:, None]).T @ X
            lin = -2.0 * (X * (p * yv)[:, None]).sum(axis=0)
        else:
            Zs = np.asarray(base.spec["Z"])
            p = base.sampler.weights
            M = np.asarray(base.spec["S"]) - (Zs * p[:, None]).T @ Zs
            lin = -np.asarray(base.spec["b"])
        opt, alpha = _quadratic_optimum(M, lin, fset, lam)
        pstar = None
    else:
        raise NotImplementedError("l1 regularization needs a quadratic or hinge base")
    if pstar is None:
        pstar = risk(opt.nearest(np.zeros(d)))
    rho = lam * math.sqrt(d)
    meta = replace(base.meta, lipschitz_G=base.meta.lipschitz_G + rho, risk_min_Pstar=float(pstar),
                   ebc_theta=1.0, ebc_alpha=float(alpha), composite_lambda=float(lam))
    spec = {"kind": "l1_regularized", "base": base.spec, "lambda": float(lam)}
    return replace(base, name=name or f"{base.name}+l1", meta=meta, risk_fn=risk, optimum=opt,
                   l1_lambda=float(lam), smooth=False, data_lipschitz=base.data_lipschitz, spec=spec)


def make_pnorm_composite(base, lam, p, name=None):
    """Composite problem E f(w, z) + λ‖w‖_p^p with EBC exponent θ = 2/p.

    The base must have constant risk (a zero-mean random linear term) and a
    box set containing the origin, so that W* = {0} and
    α = d^{1−2/p}·λ^{−2/p} exactly.
    """
    if p != int(p) or int(p) % 2 or p < 2:
        raise ValueError("p must be an even integer")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    fset = base.set
    if fset.kind != "box":
        raise ValueError("p-norm composite needs a box set")
    if base.kind != LINEAR or np.any(np.asarray(base.sampler.weights @ base.sampler.support)):
        raise NotImplementedError("p-norm composite needs a zero-mean random linear base")
    if np.any(fset.lower > 0) or np.any(fset.upper < 0):
        raise NotImplementedError("p-norm composite needs 0 inside the box")
    d = base.dim
    theta = 2.0 / p
    alpha = d ** (1.0 - theta) * lam ** (-theta)
    m = np.maximum(np.abs(fset.lower), np.abs(fset.upper))
    G = base.meta.lipschitz_G + p * lam * float(np.linalg.norm(m ** (p - 1)))
    L = p * (p - 1) * lam * float(np.max(m)) ** (p - 2)

    def risk(w):
        return lam * np.sum(w ** p)

    meta = ProblemMeta(d, G, L, fset.max_norm(), 0.0, theta, alpha, None)
    spec = {"kind": "pnorm_composite", "base": base.spec, "lambda": float(lam), "p": int(p)}
    return replace(base, name=name or f"{base.name}+p{int(p)}", meta=meta, risk_fn=risk,
                   optimum=_point(np.zeros(d)), pnorm_lambda=float(lam), pnorm_p=float(p),
                   data_lipschitz=G, spec=spec)


def make_newsvendor(slopes, intercepts, c, upper, probs=None, name="newsvendor"):
    """Newsvendor-type piecewise-linear problem over one resource.

    Profit under demand scenario s is Π(x; s) = min_j (slopes[s, j]·x +
    intercepts[s, j]); the loss is c·x − Π(x; s) on 0 ≤ x ≤ upper.
    ``slopes`` has shape (K, J, q) with q = 1.
    """
    A = np.asarray(slopes, dtype=float)
    B = np.asarray(intercepts, dtype=float)
    if A.ndim == 2:
        A = A[:, :, None]
    K, J, q = A.shape
    if K == 0:
        raise ValueError("empty demand support")
    if q != 1:
        raise NotImplementedError("only single-resource newsvendor instances have exact W*")
    c = np.atleast_1d(np.asarray(c, dtype=float))
    fset = box([0.0], np.atleast_1d(upper))
    sampler = FiniteSampler(np.arange(K, dtype=float)[:, None], probs)
    p = sampler.weights

    def risk(x):
        vals = A[:, :, 0] * x[0] + B
        return float(c @ x - p @ vals.min(axis=1))

    lo, hi = 0.0, float(fset.upper[0])
    pts = {lo, hi}
    for s in range(K):
        for j in range(J):
            for k in range(j + 1, J):
                da = A[s, j, 0] - A[s, k, 0]
                if da != 0:
                    xb = (B[s, k] - B[s, j]) / da
                    if lo < xb < hi:
                        pts.add(float(xb))
    xs = np.array(sorted(pts))
    vs = np.array([risk(np.array([x])) for x in xs])
    a, b, pstar, alpha = _pwl_1d(xs, vs)
    opt = IntervalOptimum(np.array([a]), np.array([b]))
    G = float(np.max(np.abs(c[0] - A[:, :, 0])))
    aux = (A[:, :, 0].reshape(K * J, 1).copy(), B.reshape(K * J).copy(), c.copy(),
           np.array([J], dtype=np.int64), np.zeros(1, dtype=np.int64))
    meta = ProblemMeta(1, G, None, fset.max_norm(), pstar, 1.0, alpha if alpha > 0 else 1.0)
    spec = {"kind": "newsvendor", "slopes": A[:, :, 0].tolist(), "intercepts": B.tolist(),
            "c": c.tolist(), "upper": float(hi),
            "probs": None if probs is None else list(map(float, probs))}
    return StochasticProblem(name, meta, fset, NEWSVENDOR, aux, sampler, risk, opt,
                             data_lipschitz=G, spec=spec)


def simple_newsvendor(c=0.5, demands=(1.0, 2.0), upper=3.0, name="newsvendor"):
    """Π(x; z) = min(x, z) with equiprobable demands."""
    K = len(demands)
    slopes = [[1.0, 0.0] for _ in range(K)]
    intercepts = [[0.0, float(z)] for z in demands]
    return make_newsvendor(slopes, intercepts, [c], upper, name=name)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def _hinge5():
    return make_hinge(np.full(5, 0.04), box(-np.ones(5), np.ones(5)), noise=0.6, name="hinge_box5")


def _shifted():
    # z ∈ {(√2, 0), (0, 0)}: per-sample matrix diag(−1, 1) or I, risk matrix diag(0, 1)
    Z = [[math.sqrt(2.0), 0.0], [0.0, 0.0]]
    return make_shifted_quadratic(np.eye(2), Z, [0.0, 0.0], box(-np.ones(2), np.ones(2)),
                                  name="shifted_quadratic")


def _l1_ls():
    signs = np.array([[a, b, c] for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)], dtype=float)
    w0 = np.array([0.5, -0.3, 0.05])
    X = np.vstack([signs, signs])
    y = np.concatenate([signs @ w0 + 0.5, signs @ w0 - 0.5])
    base = make_least_squares(X, y, box(-np.ones(3), np.ones(3)), name="ls3")
    return make_l1_regularized(base, 0.1, name="l1_least_squares")


def _quartic():
    base = make_random_linear([[-1.0], [1.0]], box([-1.0], [1.0]), name="linear_noise")
    return make_pnorm_composite(base, 1.0, 4, name="quartic_composite")


REGISTRY = {
    "two_point_square": two_point_square,
    "hinge_box5": _hinge5,
    "shifted_quadratic": _shifted,
    "l1_least_squares": _l1_ls,
    "newsvendor": simple_newsvendor,
    "quartic_composite": _quartic,
}


def get_problem(name, **params):
    """Build a registry instance; ``params`` are forwarded to its constructor."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(**params)


def problem_from_spec(spec):
    """Build a problem from a config mapping ``{"kind": ..., ...}``."""
    from .geometry import set_from_dict

    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "registry":
        return get_problem(spec.pop("id"), **spec.get("params", {}))
    if kind == "least_squares":
        return make_least_squares(spec["X"], spec["y"], set_from_dict(spec["set"]), spec.get("probs"))
    if kind == "hinge":
        return make_hinge(spec["mu"], set_from_dict(spec["set"]), spec.get("noise"))
    if kind == "shifted_quadratic":
        return make_shifted_quadratic(spec["S"], spec["Z"], spec["b"], set_from_dict(spec["set"]),
                                      spec.get("probs"))
    if kind == "random_linear":
        return make_random_linear(spec["Z"], set_from_dict(spec["set"]), spec.get("probs"))
    if kind == "l1_regularized":
        return make_l1_regularized(problem_from_spec(spec["base"]), spec["lambda"])
    if kind == "pnorm_composite":
        return make_pnorm_composite(problem_from_spec(spec["base"]), spec["lambda"], spec["p"])
    if kind == "newsvendor":
        return make_newsvendor(spec["slopes"], spec["intercepts"], spec["c"], spec["upper"],
                               spec.get("probs"))
    raise ValueError(f"unknown problem kind {kind!r}")
