"""Sparse datasets in libsvm text format, splits, a synthetic generator and
finite-sum problems built from training rows."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problems import EMP_HINGE, EMP_SQUARE, FiniteSampler, ProblemMeta, StochasticProblem, batch_losses


class ParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """CSR rows with real labels; ``indices`` are 0-based internally."""

    labels: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    n_features: int

    @property
    def n_rows(self):
        return self.labels.size

    def __len__(self):
        return self.n_rows

    def row(self, i):
        a, b = self.indptr[i], self.indptr[i + 1]
        return float(self.labels[i]), dict(zip((self.indices[a:b] + 1).tolist(), self.values[a:b].tolist()))

    @property
    def rows(self):
        return [self.row(i) for i in range(self.n_rows)]

    def dense(self):
        X = np.zeros((self.n_rows, self.n_features))
        for i in range(self.n_rows):
            a, b = self.indptr[i], self.indptr[i + 1]
            X[i, self.indices[a:b]] = self.values[a:b]
        return X

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        lens = self.indptr[idx + 1] - self.indptr[idx]
        indptr = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
        take = np.concatenate([np.arange(self.indptr[i], self.indptr[i + 1]) for i in idx]) \
            if idx.size else np.zeros(0, dtype=np.int64)
        return SparseDataset(self.labels[idx].copy(), indptr, self.indices[take].copy(),
                             self.values[take].copy(), self.n_features)

    def with_features(self, n_features):
        """Same rows, wider feature space (to align train and test)."""
        if n_features < self.n_features:
            raise ValueError("cannot shrink the feature space")
        return SparseDataset(self.labels, self.indptr, self.indices, self.values, int(n_features))

    def equals(self, other):
        return (self.n_features == other.n_features and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))


def _num(tok, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"non-numeric token {tok!r} at line {lineno}") from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {tok!r} at line {lineno}")
    return v


def parse_libsvm(stream, n_features=None):
    """Parse "label idx:val idx:val ..." lines; '#' starts a comment.

    ``stream`` may be bytes, str or a file object (text or binary).
    Indices are 1-based in the text and must be strictly increasing.
    """
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    labels, indptr, indices, values = [], [0], [], []
    for lineno, line in enumerate(stream, 1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        labels.append(_num(toks[0], lineno))
        prev = 0
        for tok in toks[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(f"expected idx:val, got {tok!r} at line {lineno}")
            try:
                idx = int(key)
            except ValueError:
                raise ParseError(f"non-numeric token {key!r} at line {lineno}") from None
            if idx <= 0:
                raise ParseError(f"index must be positive at line {lineno}")
            if idx <= prev:
                raise ParseError(f"non-increasing index at line {lineno}")
            prev = idx
            indices.append(idx - 1)
            values.append(_num(val, lineno))
        indptr.append(len(indices))
    idx = np.asarray(indices, dtype=np.int64)
    width = int(idx.max()) + 1 if idx.size else 0
    if n_features is not None:
        if n_features < width:
            raise ParseError(f"feature index {width} exceeds n_features={n_features}")
        width = int(n_features)
    return SparseDataset(np.asarray(labels, dtype=float), np.asarray(indptr, dtype=np.int64), idx,
                         np.asarray(values, dtype=float), width)


def load_libsvm(path, n_features=None):
    with open(path, "rb") as fh:
        return parse_libsvm(fh, n_features)


def _fmt(v):
    return repr(float(v)) if v != int(v) or abs(v) >= 1e16 else str(int(v))


def serialize(ds):
    """libsvm text, one row per line, 1-based indices."""
    out = []
    for i in range(ds.n_rows):
        a, b = ds.indptr[i], ds.indptr[i + 1]
        parts = [_fmt(ds.labels[i])]
        parts += [f"{j + 1}:{_fmt(v)}" for j, v in zip(ds.indices[a:b], ds.values[a:b])]
        out.append(" ".join(parts))
    return "\n".join(out) + ("\n" if out else "")


def split(ds, ratios=(4, 1, 1), seed=0):
    """Shuffled partition into len(ratios) parts (train, validation, test by default).

    Sizes are the floors of n·ratio with leftover rows handed out by
    largest remainder, so 6 rows at 4:1:1 give (4, 1, 1).
    """
    if ds.n_rows == 0:
        raise ValueError("cannot split an empty dataset")
    r = np.asarray(ratios, dtype=float)
    if np.any(r < 0) or r.sum() <= 0:
        raise ValueError("ratios must be nonnegative with a positive sum")
    r = r / r.sum()
    n = ds.n_rows
    raw = n * r
    sizes = np.floor(raw).astype(int)
    order = np.argsort(-(raw - sizes), kind="stable")
    for k in order[: n - sizes.sum()]:
        sizes[k] += 1
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return tuple(ds.subset(np.sort(perm[bounds[k]:bounds[k + 1]])) for k in range(len(sizes)))


def max_abs_scale(ds, scale=None):
    """Divide each feature by its max |value| (computed on ``ds`` unless given)."""
    if scale is None:
        scale = np.zeros(ds.n_features)
        np.maximum.at(scale, ds.indices, np.abs(ds.values))
        scale[scale == 0] = 1.0
    vals = ds.values / scale[ds.indices]
    return SparseDataset(ds.labels, ds.indptr, ds.indices, vals, ds.n_features), scale


def synthetic_sparse(n, d, density=0.01, support=20, noise=0.1, seed=0, w_scale=1.0):
    """Sparse regression data shaped like text corpora.

    Each row draws Binomial(d, density) features (at least one) with
    uniform(0, 1] values and is scaled to unit ℓ2 norm.  Labels are
    x·w★ + noise·N(0, 1) with w★ having ``support`` nonzeros of size
    ±w_scale.  Returns (dataset, w★).
    """
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    nz = rng.choice(d, size=min(support, d), replace=False)
    w[nz] = w_scale * rng.choice([-1.0, 1.0], size=nz.size)
    counts = np.maximum(rng.binomial(d, density, size=n), 1)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = np.empty(indptr[-1], dtype=np.int64)
    values = np.empty(indptr[-1])
    labels = np.empty(n)
    for i in range(n):
        cols = np.sort(rng.choice(d, size=counts[i], replace=False))
        v = 1.0 - rng.random(counts[i])
        v /= np.linalg.norm(v)
        a, b = indptr[i], indptr[i + 1]
        indices[a:b], values[a:b] = cols, v
        labels[i] = v @ w[cols]
    labels += noise * rng.standard_normal(n)
    return SparseDataset(labels, indptr, indices, values, d), w


def _aux(ds):
    return (np.zeros((1, 1)), np.ascontiguousarray(ds.values, dtype=float),
            np.ascontiguousarray(ds.labels, dtype=float), ds.indptr.astype(np.int64),
            ds.indices.astype(np.int64))


def _reach(ds, fset, row_id, norms):
    """max over W of |wᵀx_i| for every row."""
    n, v, j = ds.n_rows, ds.values, ds.indices
    if fset.kind == "box":
        hi = np.bincount(row_id, np.maximum(v * fset.lower[j], v * fset.upper[j]), minlength=n)
        lo = np.bincount(row_id, np.maximum(-v * fset.lower[j], -v * fset.upper[j]), minlength=n)
        return np.maximum(hi, lo)
    shift = np.abs(np.bincount(row_id, v * fset.center[j], minlength=n))
    if fset.kind == "l2":
        return shift + fset.radius * norms
    amax = np.zeros(n)
    np.maximum.at(amax, row_id, np.abs(v))
    return shift + fset.radius * amax


def empirical_problem(train, loss, fset, lam=0.0, name=None):
    """Finite-sum problem: z is uniform over training rows (with replacement).

    The risk is the exact training average (plus λ‖w‖₁).  P* and W* are
    unknown, so excess risk and EBC-dependent checks are disabled.
    """
    if train.n_rows == 0:
        raise ValueError("empty training set")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if fset.dim != train.n_features:
        raise ValueError(f"set dimension {fset.dim} != feature count {train.n_features}")
    if loss == "square":
        kind = EMP_SQUARE
    elif loss == "hinge":
        kind = EMP_HINGE
        if not np.all(np.isin(train.labels, (-1.0, 1.0))):
            raise ValueError("hinge loss needs labels in {-1, +1}")
    else:
        raise ValueError(f"unknown loss {loss!r}")
    aux = _aux(train)
    n, d = train.n_rows, train.n_features
    rows = np.arange(n, dtype=float)[:, None]
    row_id = np.repeat(np.arange(n), np.diff(train.indptr))
    norms = np.sqrt(np.bincount(row_id, train.values ** 2, minlength=n))
    if kind == EMP_SQUARE:
        reach = _reach(train, fset, row_id, norms)
        G_data = float(np.max(2.0 * (reach + np.abs(train.labels)) * norms))
        L = 2.0 * float(np.max(norms ** 2))
    else:
        G_data = float(np.max(norms))
        L = None
    G = G_data + lam * math.sqrt(d)

    def risk(w):
        return float(batch_losses(kind, aux, w, rows, 0.0, 2.0, lam).mean())

    meta = ProblemMeta(d, G, L, fset.max_norm(), math.nan, math.nan, math.nan,
                       lam if lam > 0 else None)
    return StochasticProblem(name or f"empirical_{loss}", meta, fset, kind, aux, FiniteSampler(rows), risk,
                             None, l1_lambda=float(lam), smooth=(kind == EMP_SQUARE and lam == 0),
                             data_lipschitz=G_data, spec={"kind": "empirical", "loss": loss})


def test_error(w, ds, loss="square"):
    """Mean data loss of w over the rows of ``ds`` (no regulariser)."""
    kind = EMP_SQUARE if loss == "square" else EMP_HINGE
    rows = np.arange(ds.n_rows, dtype=float)[:, None]
    return float(batch_losses(kind, _aux(ds), np.asarray(w, dtype=float), rows, 0.0, 2.0, 0.0).mean())


test_error.__test__ = False
