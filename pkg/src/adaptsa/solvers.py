"""Stochastic approximation solvers: SSG, ASA, SSGS, ASA2, PSG, ASA3, p-norm SMD and SAG.

Each solver consumes fresh samples through a :class:`SampleTap`, runs its
update loop in jitted chunks between checkpoints, and returns the output
point together with a :class:`RunTrace`.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .geometry import BallCap, FeasibleSet, _mirror_step, _prox_base, _prox_cap
from .problems import EMP_SQUARE, data_grad, smooth_extra_grad

_jit = numba.njit(cache=True, nogil=True)

N_LOG_CHECKPOINTS = 32


# ---------------------------------------------------------------------------
# jitted inner loops
# ---------------------------------------------------------------------------

@_jit
def _grad(O, w, z, with_l1):
    kind, aux, plam, pexp, l1 = O
    g = data_grad(kind, aux, w, z)
    smooth_extra_grad(w, plam, pexp, g)
    if with_l1 and l1 > 0.0:
        g += l1 * np.sign(w)
    return g


@_jit
def _ssg_chunk(O, S, cc, cr, w, wsum, Z, gamma):
    for t in range(Z.shape[0]):
        g = _grad(O, w, Z[t], True)
        w = _prox_cap(S, cc, cr, w - gamma * g, 0.0)
        wsum += w
    return w


@_jit
def _psg_chunk(O, S, cc, cr, w, wsum, Z, gamma):
    l1 = O[4]
    for t in range(Z.shape[0]):
        wsum += w
        g = _grad(O, w, Z[t], False)
        w = _prox_cap(S, cc, cr, w - gamma * g, gamma * l1)
    return w


@_jit
def _ssgs_chunk(O, S, w1, w, wsum, Z, beta, t0):
    for k in range(Z.shape[0]):
        t = t0 + k
        g = _grad(O, w, Z[k], True)
        wp = (1.0 - 2.0 / t) * w + (2.0 / t) * w1 - (2.0 * beta / t) * g
        w = _prox_base(S, wp, 0.0)
        wsum += w
    return w


@_jit
def _smd_chunk(O, S, w, wsum, Z, gamma, p):
    l1 = O[4]
    for t in range(Z.shape[0]):
        g = _grad(O, w, Z[t], False)
        w = _mirror_step(S, True, w, g, gamma, p, gamma * l1)
        wsum += w
    return w


@_jit
def _sag_chunk(aux, w, resid, seen, dsum, idx, step, nseen):
    _, values, labels, indptr, indices = aux
    for k in range(idx.size):
        i = idx[k]
        r = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            r += w[indices[j]] * values[j]
        r -= labels[i]
        old = resid[i] if seen[i] else 0.0
        if not seen[i]:
            seen[i] = True
            nseen += 1
        for j in range(indptr[i], indptr[i + 1]):
            dsum[indices[j]] += 2.0 * (r - old) * values[j]
        resid[i] = r
        w -= (step / nseen) * dsum
    return nseen


# ---------------------------------------------------------------------------
# bookkeeping
# ---------------------------------------------------------------------------

class SampleTap:
    """Counts every datum drawn from ``problem`` with ``rng``."""

    def __init__(self, problem, rng):
        self.problem = problem
        self.rng = rng
        self.count = 0

    def draw(self, k):
        self.count += k
        return np.ascontiguousarray(self.problem.sample(self.rng, k), dtype=float)


def _tap(problem, rng):
    if isinstance(rng, SampleTap):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return SampleTap(problem, rng)


@dataclass
class Checkpoint:
    samples: int
    stage: int
    average: np.ndarray
    iterate: np.ndarray
    excess: Optional[float] = None
    metrics: dict = field(default_factory=dict)


@dataclass
class RunTrace:
    algorithm: str
    seed: Optional[int]
    records: list = field(default_factory=list)
    final: Optional[np.ndarray] = None
    samples_used: int = 0
    wall_time: float = 0.0
    schedule: Optional["StageSchedule"] = None

    def excess_curve(self):
        return [(r.samples, r.excess) for r in self.records]


def _checkpoints(total, extra=(), spec=None):
    """Sorted global sample counts at which a record is written."""
    if spec == "all":
        pts = set(range(1, total + 1))
    else:
        k = N_LOG_CHECKPOINTS if spec is None else int(spec)
        pts = set(np.unique(np.round(np.logspace(0, math.log10(max(total, 1)), k)).astype(int)).tolist())
    pts.update(extra)
    pts.add(total)
    return sorted(p for p in pts if 1 <= p <= total)


class _Recorder:
    def __init__(self, trace, problem, monitor):
        self.trace = trace
        self.problem = problem
        self.monitor = monitor
        self.exact = bool(np.isfinite(problem.meta.risk_min_Pstar))

    def __call__(self, samples, stage, average, iterate):
        excess = None
        if self.exact:
            excess = self.problem.excess(average)
        metrics = self.monitor(average) if self.monitor is not None else {}
        self.trace.records.append(Checkpoint(int(samples), stage, average.copy(), iterate.copy(),
                                             excess, metrics))


def _domain(problem, domain):
    if domain is None:
        domain = problem.set
    if isinstance(domain, BallCap):
        return domain.base.packed, np.asarray(domain.cap_center, dtype=float), float(domain.cap_radius), domain
    if isinstance(domain, FeasibleSet):
        return domain.packed, np.zeros(domain.dim), math.inf, domain
    raise TypeError("domain must be a FeasibleSet or BallCap")


def _start(domain, w1, dim):
    w1 = np.array(w1, dtype=float)
    if w1.shape != (dim,):
        raise ValueError(f"w1 must have shape ({dim},)")
    if not domain.contains(w1, 1e-9):
        raise ValueError("w1 is not feasible")
    return w1


def _run_stage(chunk, stage_len, offset, points, record, stage, state, avg_den):
    """Drive one stage through ``chunk(Zpart, start) -> w`` with records at ``points``."""
    pos = 0
    for p in points:
        if p <= offset or p > offset + stage_len:
            continue
        upto = p - offset
        if upto > pos:
            state["w"] = chunk(pos, upto)
            pos = upto
        record(p, stage, state["wsum"] / avg_den(pos), state["w"])
    if pos < stage_len:
        state["w"] = chunk(pos, stage_len)


# ---------------------------------------------------------------------------
# single-stage subroutines
# ---------------------------------------------------------------------------

def ssg(problem, domain, w1, gamma, T, rng, checkpoints=None, monitor=None, _ctx=None):
    """Stochastic subgradient with constant step and projection onto ``domain``.

    Runs T updates and returns the average of w_1..w_{T+1} (denominator T+1).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if T < 1:
        raise ValueError("T must be at least 1")
    S, cc, cr, dom = _domain(problem, domain)
    w = _start(dom, w1, problem.dim)
    tap = _tap(problem, rng)
    trace, record, offset, stage, points = _context(_ctx, "ssg", rng, problem, monitor, T, checkpoints)
    start = time.perf_counter()
    Z = tap.draw(T)
    state = {"w": w, "wsum": w.copy()}
    O = problem.oracle

    def chunk(a, b):
        return _ssg_chunk(O, S, cc, cr, state["w"], state["wsum"], Z[a:b], float(gamma))

    _run_stage(chunk, T, offset, points, record, stage, state, lambda k: k + 1)
    out = state["wsum"] / (T + 1)
    return _finish(trace, out, tap, start, _ctx)


def psg(problem, domain, w1, gamma, T, rng, checkpoints=None, monitor=None, _ctx=None):
    """Proximal stochastic gradient for E f + λ‖·‖₁; returns the mean of w_1..w_T."""
    kind, lam = problem.regularizer
    if kind not in ("none", "l1"):
        raise ValueError(f"no proximal map for regularizer {kind!r}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if T < 1:
        raise ValueError("T must be at least 1")
    S, cc, cr, dom = _domain(problem, domain)
    w = _start(dom, w1, problem.dim)
    tap = _tap(problem, rng)
    trace, record, offset, stage, points = _context(_ctx, "psg", rng, problem, monitor, T, checkpoints)
    start = time.perf_counter()
    Z = tap.draw(T)
    state = {"w": w, "wsum": np.zeros_like(w)}
    O = problem.oracle

    def chunk(a, b):
        return _psg_chunk(O, S, cc, cr, state["w"], state["wsum"], Z[a:b], float(gamma))

    _run_stage(chunk, T, offset, points, record, stage, state, lambda k: max(k, 1))
    out = state["wsum"] / T
    return _finish(trace, out, tap, start, _ctx)


def ssgs(problem, w1, beta, T, rng, checkpoints=None, monitor=None, _ctx=None):
    """Subgradient method on f + ‖w − w_1‖²/(2β)-type regularisation, projecting onto W only.

    The recursion is used literally, including the coefficient 1 − 2/t = −1
    at t = 1.
    """
    if T < 3:
        raise ValueError("SSGS requires T >= 3")
    if beta <= 0:
        raise ValueError("beta must be positive")
    S = problem.set.packed
    w = _start(problem.set, w1, problem.dim)
    tap = _tap(problem, rng)
    trace, record, offset, stage, points = _context(_ctx, "ssgs", rng, problem, monitor, T, checkpoints)
    start = time.perf_counter()
    Z = tap.draw(T)
    anchor = w.copy()
    state = {"w": w, "wsum": w.copy()}
    O = problem.oracle

    def chunk(a, b):
        return _ssgs_chunk(O, S, anchor, state["w"], state["wsum"], Z[a:b], float(beta), a + 1)

    _run_stage(chunk, T, offset, points, record, stage, state, lambda k: k + 1)
    out = state["wsum"] / (T + 1)
    return _finish(trace, out, tap, start, _ctx)


def smd_pnorm(problem, fset, w1, gamma, T, rng, p=None, checkpoints=None, monitor=None):
    """Stochastic mirror descent with the p-norm mirror map; returns the iterate average.

    ``p`` defaults to max(2, 2·ln d).  An ℓ1 regularizer is handled by
    soft-thresholding in the dual space.
    """
    d = problem.dim
    if p is None:
        p = max(2.0, 2.0 * math.log(d))
    if p < 2:
        raise ValueError("p-norm mirror map needs p >= 2")
    fset = problem.set if fset is None else fset
    w = _start(fset, w1, d)
    tap = _tap(problem, rng)
    trace, record, offset, stage, points = _context(None, "smd", rng, problem, monitor, T, checkpoints)
    start = time.perf_counter()
    Z = tap.draw(T)
    state = {"w": w, "wsum": w.copy()}
    O = problem.oracle
    S = fset.packed

    def chunk(a, b):
        return _smd_chunk(O, S, state["w"], state["wsum"], Z[a:b], float(gamma), float(p))

    _run_stage(chunk, T, offset, points, record, stage, state, lambda k: k + 1)
    out = state["wsum"] / (T + 1)
    return _finish(trace, out, tap, start, None)


def sag(problem, step, epochs, rng, w1=None, checkpoints=None, monitor=None):
    """Stochastic average gradient on a finite-sum square loss, unconstrained.

    Each iteration refreshes one stored residual and steps along the mean of
    the stored gradients over the examples seen so far.
    """
    if problem.kind != EMP_SQUARE:
        raise ValueError("SAG needs a finite-sum square-loss problem")
    n = problem.aux[2].size
    w = np.zeros(problem.dim) if w1 is None else np.array(w1, dtype=float)
    if isinstance(rng, SampleTap):
        tap = rng
    else:
        tap = _tap(problem, rng)
    T = int(epochs * n)
    trace, record, offset, stage, points = _context(None, "sag", rng, problem, monitor, T, checkpoints)
    start = time.perf_counter()
    idx = tap.draw(T)[:, 0].astype(np.int64)
    resid = np.zeros(n)
    seen = np.zeros(n, dtype=np.bool_)
    dsum = np.zeros(problem.dim)
    state = {"w": w, "nseen": 0}
    pos = 0
    for p in points:
        state["nseen"] = _sag_chunk(problem.aux, state["w"], resid, seen, dsum, idx[pos:p],
                                    float(step), state["nseen"])
        pos = p
        record(p, 0, state["w"], state["w"])
    return _finish(trace, state["w"].copy(), tap, start, None)


def _context(ctx, name, rng, problem, monitor, T, checkpoints):
    if ctx is not None:
        return ctx["trace"], ctx["record"], ctx["offset"], ctx["stage"], ctx["points"]
    seed = rng if isinstance(rng, (int, np.integer)) else None
    trace = RunTrace(name, seed)
    return trace, _Recorder(trace, problem, monitor), 0, 0, _checkpoints(T, spec=checkpoints)


def _finish(trace, out, tap, start, ctx):
    if ctx is not None:
        return out
    trace.final = out
    trace.samples_used = tap.count
    trace.wall_time = time.perf_counter() - start
    return out, trace


# ---------------------------------------------------------------------------
# multi-stage drivers
# ---------------------------------------------------------------------------

@dataclass
class StageSchedule:
    """Stage count, per-stage length, radii and step parameters of a restart scheme."""

    variant: str
    n: int
    m: int
    n0: int
    G: float
    R0: float
    radii: list
    steps: list

    @property
    def total(self):
        return self.m * self.n0


def stage_count(n):
    """m = ⌊½·log₂(2n / log₂ n)⌋ − 1."""
    return int(math.floor(0.5 * math.log2(2.0 * n / math.log2(n)))) - 1


def make_schedule(n, R0, G, variant="asa"):
    if n < 100:
        raise ValueError("the multi-stage rate guarantee needs n >= 100")
    if R0 <= 0 or G <= 0:
        raise ValueError("R0 and G must be positive")
    m = stage_count(n)
    if m < 1:
        raise ValueError(f"stage count computes to {m} for n={n}")
    n0 = n // m
    radii = [R0 / 2.0 ** k for k in range(m + 1)]
    if variant == "asa":
        steps = [radii[k - 1] / (G * math.sqrt(n0 + 1)) for k in range(1, m + 1)]
    elif variant == "asa2":
        steps = [radii[k - 1] * math.sqrt(n0) / (2.0 * G) for k in range(1, m + 1)]
    elif variant == "asa3":
        steps = [radii[k - 1] / (G * math.sqrt(n0)) for k in range(1, m + 1)]
    else:
        raise ValueError(f"unknown schedule variant {variant!r}")
    return StageSchedule(variant, n, m, n0, float(G), float(R0), radii, steps)


def _multistage(problem, w1, n, R0, G, rng, variant, checkpoints, monitor, inner):
    R0 = 2.0 * problem.meta.diameter_R if R0 is None else R0
    sched = make_schedule(n, R0, G, variant)
    w = _start(problem.set, w1, problem.dim)
    tap = _tap(problem, rng)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    trace = RunTrace(variant, seed, schedule=sched)
    record = _Recorder(trace, problem, monitor)
    ends = [k * sched.n0 for k in range(1, sched.m + 1)]
    points = _checkpoints(sched.total, ends, checkpoints)
    start = time.perf_counter()
    for k in range(1, sched.m + 1):
        ctx = {"trace": trace, "record": record, "offset": (k - 1) * sched.n0, "stage": k,
               "points": points}
        w = inner(k, w, sched, tap, ctx)
    trace.final = w
    trace.samples_used = tap.count
    trace.wall_time = time.perf_counter() - start
    return w, trace


def asa(problem, w1, n, R0=None, G=None, rng=None, checkpoints=None, monitor=None):
    """Multi-stage SSG on shrinking ball caps with halving steps.

    Uses only n, R0 and G: no knowledge of the error-bound exponent.
    """
    G = problem.meta.lipschitz_G if G is None else G

    def inner(k, w, sched, tap, ctx):
        cap = BallCap(problem.set, w.copy(), sched.radii[k - 1])
        return ssg(problem, cap, w, sched.steps[k - 1], sched.n0, tap, _ctx=ctx)

    return _multistage(problem, w1, n, R0, G, rng, "asa", checkpoints, monitor, inner)


def asa2(problem, w1, n, R0=None, G=None, rng=None, checkpoints=None, monitor=None):
    """Multi-stage SSGS: the anchor term replaces the ball-cap projection."""
    G = problem.meta.lipschitz_G if G is None else G

    def inner(k, w, sched, tap, ctx):
        return ssgs(problem, w, sched.steps[k - 1], sched.n0, tap, _ctx=ctx)

    return _multistage(problem, w1, n, R0, G, rng, "asa2", checkpoints, monitor, inner)


def asa3(problem, w1, n, R0=None, G=None, rng=None, checkpoints=None, monitor=None):
    """Multi-stage PSG on shrinking ball caps for ℓ1-regularized problems."""
    G = problem.data_lipschitz if G is None else G
    rho = problem.l1_lambda * math.sqrt(problem.dim)
    n0 = n // max(stage_count(n), 1) if n >= 100 else 0
    if n >= 100 and n0 < rho ** 2 / G ** 2:
        raise ValueError(f"stage length n0={n0} is below rho^2/G^2={rho ** 2 / G ** 2:.4g}")

    def inner(k, w, sched, tap, ctx):
        cap = BallCap(problem.set, w.copy(), sched.radii[k - 1])
        return psg(problem, cap, w, sched.steps[k - 1], sched.n0, tap, _ctx=ctx)

    return _multistage(problem, w1, n, R0, G, rng, "asa3", checkpoints, monitor, inner)


def ssg_bound(R0, G, T, delta):
    """High-probability excess bound of SSG with γ = R0/(G√(T+1))."""
    return R0 * G * (1.0 + 4.0 * math.sqrt(2.0 * math.log(2.0 / delta))) / math.sqrt(T + 1)
