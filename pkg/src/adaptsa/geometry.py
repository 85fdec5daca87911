"""Projection, proximal and mirror-map kernels.

Feasible sets are encoded for the jitted kernels as a tuple
``(code, radius, center, lower, upper)``; :class:`FeasibleSet` builds that
tuple once and keeps it as ``packed``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

L2, L1, BOX = 0, 1, 2

CAP_TOL = 1e-10
CAP_MAXITER = 200

_jit = numba.njit(cache=True, nogil=True)


# ---------------------------------------------------------------------------
# jitted kernels
# ---------------------------------------------------------------------------

@_jit
def _soft(x, t):
    out = np.empty_like(x)
    for i in range(x.size):
        a = abs(x[i]) - t
        out[i] = math.copysign(a, x[i]) if a > 0.0 else 0.0
    return out


@_jit
def _norm2(x):
    s = 0.0
    for i in range(x.size):
        s += x[i] * x[i]
    return math.sqrt(s)


@_jit
def _dist2(x, c):
    s = 0.0
    for i in range(x.size):
        s += (x[i] - c[i]) ** 2
    return math.sqrt(s)


@_jit
def _proj_l1_origin(v, r):
    """Sort-based projection of ``v`` onto {‖y‖₁ ≤ r}."""
    a = np.abs(v)
    if a.sum() <= r:
        return v.copy()
    if r <= 0.0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    css = 0.0
    tau = 0.0
    for j in range(u.size):
        css += u[j]
        t = (css - r) / (j + 1)
        if u[j] - t > 0.0:
            tau = t
    out = np.empty_like(v)
    for i in range(v.size):
        m = a[i] - tau
        out[i] = math.copysign(m, v[i]) if m > 0.0 else 0.0
    return out


@_jit
def _prox_base(S, x, t):
    """argmin_{y in W} ½‖y − x‖² + t‖y‖₁ (t = 0 gives the projection)."""
    code, radius, center, lo, hi = S
    if code == BOX:
        y = _soft(x, t) if t > 0.0 else x.copy()
        for i in range(y.size):
            if y[i] < lo[i]:
                y[i] = lo[i]
            elif y[i] > hi[i]:
                y[i] = hi[i]
        return y
    centered = True
    for i in range(center.size):
        if center[i] != 0.0:
            centered = False
            break
    if code == L2:
        if t > 0.0:
            if not centered:
                return _prox_l2_shifted(S, x, t)
            v = _soft(x, t)
        else:
            v = x
        nr = _dist2(v, center)
        if nr <= radius:
            return v.copy()
        return center + (v - center) * (radius / nr)
    # L1
    if t > 0.0:
        if not centered:
            raise ValueError("l1 prox over an off-center l1 ball is not supported")
        return _proj_l1_origin(_soft(x, t), radius)
    return center + _proj_l1_origin(x - center, radius)


@_jit
def _prox_l2_shifted(S, x, t):
    # KKT multiplier of ‖y − c‖ ≤ r, found by bisection
    _, radius, c, _, _ = S
    y = _soft(x, t)
    if _dist2(y, c) <= radius:
        return y
    lo, hi = 0.0, 1.0
    for _ in range(CAP_MAXITER):
        y = _soft((x + hi * c) / (1.0 + hi), t / (1.0 + hi))
        if _dist2(y, c) <= radius:
            break
        lo = hi
        hi *= 2.0
    for _ in range(CAP_MAXITER):
        if radius - _dist2(y, c) <= CAP_TOL:
            break
        mid = 0.5 * (lo + hi)
        ym = _soft((x + mid * c) / (1.0 + mid), t / (1.0 + mid))
        if _dist2(ym, c) > radius:
            lo = mid
        else:
            hi = mid
            y = ym
    return y


@_jit
def _prox_cap(S, cc, cr, x, t):
    """argmin over W ∩ B(cc, cr) of ½‖y − x‖² + t‖y‖₁.

    Bisection on the multiplier λ of the ball constraint; each probe is a
    base prox at (x + λ·cc)/(1 + λ) with weight t/(1 + λ).  Returns the
    upper-bracket point, so the ball constraint holds exactly.
    """
    if cr == 0.0:
        return cc.copy()
    y = _prox_base(S, x, t)
    if _dist2(y, cc) <= cr:
        return y
    lo, hi = 0.0, 1.0
    bracketed = False
    for _ in range(CAP_MAXITER):
        y = _prox_base(S, (x + hi * cc) / (1.0 + hi), t / (1.0 + hi))
        if _dist2(y, cc) <= cr:
            bracketed = True
            break
        lo = hi
        hi *= 2.0
    if not bracketed:
        raise RuntimeError("ball-cap bisection failed to bracket the multiplier")
    for _ in range(CAP_MAXITER):
        if cr - _dist2(y, cc) <= CAP_TOL:
            break
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        ym = _prox_base(S, (x + mid * cc) / (1.0 + mid), t / (1.0 + mid))
        if _dist2(ym, cc) > cr:
            lo = mid
        else:
            hi = mid
            y = ym
    return y


@_jit
def _link(v, r):
    """Gradient of ½‖v‖_r²: sign(v)·|v|^{r−1}/‖v‖_r^{r−2}, computed scale-free."""
    m = 0.0
    for i in range(v.size):
        if abs(v[i]) > m:
            m = abs(v[i])
    out = np.zeros_like(v)
    if m == 0.0:
        return out
    s = 0.0
    for i in range(v.size):
        s += (abs(v[i]) / m) ** r
    nrm = m * s ** (1.0 / r)
    for i in range(v.size):
        out[i] = math.copysign(nrm * (abs(v[i]) / nrm) ** (r - 1.0), v[i])
    return out


@_jit
def _mirror_step(S, constrained, w, g, step, p, shrink):
    q = p / (p - 1.0)
    theta = _link(w, q) - step * g
    if shrink > 0.0:
        theta = _soft(theta, shrink)
    y = _link(theta, p)
    if constrained:
        return _prox_base(S, y, 0.0)
    return y


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """A closed convex set W: an ℓ2 ball, an ℓ1 ball, or a box.

    Build instances with :func:`l2_ball`, :func:`l1_ball`, :func:`box`,
    :func:`linf_ball` or :func:`nonnegative_box`.
    """

    kind: str
    dim: int
    radius: float = 0.0
    center: np.ndarray = field(default=None)
    lower: np.ndarray = field(default=None)
    upper: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.kind == "box":
            if np.any(self.lower > self.upper):
                raise ValueError("box needs lower <= upper in every coordinate")
        elif self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def packed(self):
        code = {"l2": L2, "l1": L1, "box": BOX}[self.kind]
        lo = self.lower if self.lower is not None else np.zeros(self.dim)
        hi = self.upper if self.upper is not None else np.zeros(self.dim)
        c = self.center if self.center is not None else np.zeros(self.dim)
        return (code, float(self.radius), c, lo, hi)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size != self.dim:
            raise ValueError(f"expected a vector of dimension {self.dim}, got shape {x.shape}")
        return x

    def project(self, x):
        return _prox_base(self.packed, self._check(x), 0.0)

    def contains(self, x, tol=1e-9):
        x = self._check(x)
        if self.kind == "box":
            return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
        ord_ = 2 if self.kind == "l2" else 1
        return bool(np.linalg.norm(x - self.center, ord_) <= self.radius + tol)

    def support(self, v):
        """max over W of vᵀw."""
        v = np.asarray(v, dtype=float)
        if self.kind == "box":
            return float(np.sum(np.maximum(v * self.lower, v * self.upper)))
        dual = np.linalg.norm(v, 2 if self.kind == "l2" else np.inf)
        return float(v @ self.center + self.radius * dual)

    def max_norm(self):
        """R of the boundedness assumption: max over W of ‖w‖₂."""
        if self.kind == "box":
            return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))
        return float(np.linalg.norm(self.center) + self.radius)

    def diameter(self):
        if self.kind == "box":
            return float(np.linalg.norm(self.upper - self.lower))
        return 2.0 * self.radius

    def sample(self, rng, size):
        """Uniform draws from W (rejection-free for every supported kind)."""
        d = self.dim
        if self.kind == "box":
            return self.lower + (self.upper - self.lower) * rng.random((size, d))
        if self.kind == "l2":
            g = rng.standard_normal((size, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = self.radius * rng.random(size) ** (1.0 / d)
            return self.center + g * r[:, None]
        # uniform on the cross-polytope: exponential spacings with random signs
        e = rng.exponential(size=(size, d + 1))
        pts = e[:, :d] / e.sum(axis=1, keepdims=True)
        signs = rng.choice([-1.0, 1.0], size=(size, d))
        return self.center + self.radius * pts * signs

    def to_dict(self):
        if self.kind == "box":
            return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}
        return {"kind": self.kind, "dim": self.dim, "radius": self.radius,
                "center": self.center.tolist()}


def l2_ball(dim, radius=1.0, center=None):
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    return FeasibleSet("l2", dim, float(radius), c)


def l1_ball(dim, radius=1.0, center=None):
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    return FeasibleSet("l1", dim, float(radius), c)


def box(lower, upper):
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    lo, hi = np.broadcast_arrays(lo, hi)
    return FeasibleSet("box", lo.size, 0.0, np.zeros(lo.size), lo.copy(), hi.copy())


def linf_ball(dim, radius=1.0, center=None):
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if radius <= 0:
        raise ValueError("radius must be positive")
    return box(c - radius, c + radius)


def nonnegative_box(upper):
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    return box(np.zeros_like(hi), hi)


def set_from_dict(spec):
    kind = spec["kind"]
    if kind == "box":
        return box(spec["lower"], spec["upper"])
    if kind == "linf":
        return linf_ball(spec["dim"], spec.get("radius", 1.0), spec.get("center"))
    if kind == "nonnegative_box":
        return nonnegative_box(spec["upper"])
    if kind == "l2":
        return l2_ball(spec["dim"], spec.get("radius", 1.0), spec.get("center"))
    if kind == "l1":
        return l1_ball(spec["dim"], spec.get("radius", 1.0), spec.get("center"))
    raise ValueError(f"unknown set kind {kind!r}")


@dataclass(frozen=True, eq=False)
class BallCap:
    """W ∩ B(cap_center, cap_radius)."""

    base: FeasibleSet
    cap_center: np.ndarray
    cap_radius: float

    def __post_init__(self):
        if self.cap_radius < 0:
            raise ValueError("cap radius must be nonnegative")

    @property
    def dim(self):
        return self.base.dim

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return self.base.contains(x, tol) and bool(
            np.linalg.norm(x - self.cap_center) <= self.cap_radius + tol)

    def project(self, x):
        return project_cap(self, x)


def project(fset, x):
    """Euclidean projection of ``x`` onto ``fset``."""
    return fset.project(x)


def project_cap(cap, x):
    """Euclidean projection onto W ∩ B(c, R) via bisection on the ball multiplier."""
    x = cap.base._check(x)
    c = np.asarray(cap.cap_center, dtype=float)
    return _prox_cap(cap.base.packed, c, float(cap.cap_radius), x, 0.0)


def prox_l1(x, t, fset):
    """argmin over ``fset`` (a FeasibleSet or BallCap) of ½‖w − x‖² + t‖w‖₁.

    Exact for boxes and origin-centred balls; for an off-center ℓ2 ball or a
    ball cap the ball multiplier is found by bisection to residual 1e-10.
    """
    if t < 0:
        raise ValueError("prox weight must be nonnegative")
    if isinstance(fset, BallCap):
        x = fset.base._check(x)
        return _prox_cap(fset.base.packed, np.asarray(fset.cap_center, dtype=float),
                         float(fset.cap_radius), x, float(t))
    return _prox_base(fset.packed, fset._check(x), float(t))


def mirror_step_pnorm(w, g, step, p, fset=None, shrink=0.0):
    """One mirror-descent step with the ½‖·‖_q² mirror map, q = p/(p−1).

    The dual point ∇½‖w‖_q² − step·g is optionally soft-thresholded by
    ``shrink`` (the ℓ1 step of SMIDAS), mapped back with ∇½‖·‖_p², and, when
    ``fset`` is given, projected in the Euclidean metric.  The last step is an
    approximation of the Bregman projection except when p = 2.
    """
    if p < 2:
        raise ValueError("p-norm mirror map needs p >= 2")
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    if fset is None:
        S = (L2, 1.0, np.zeros(w.size), np.zeros(w.size), np.zeros(w.size))
        return _mirror_step(S, False, w, g, float(step), float(p), float(shrink))
    fset._check(w)
    return _mirror_step(fset.packed, True, w, g, float(step), float(p), float(shrink))
