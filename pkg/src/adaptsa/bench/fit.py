"""Log-log rate fits on summary CSVs."""
from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..erm import log_slope
from .runner import read_summary


@dataclass
class RateFit:
    algorithm: str
    n: np.ndarray
    median: np.ndarray
    slope: float
    intercept: float
    residual: float
    slope_stderr: float
    predicted: Optional[float] = None
    excluded: tuple = ()

    def as_dict(self):
        return {"algorithm": self.algorithm, "n": self.n.tolist(), "median": self.median.tolist(),
                "slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "slope_stderr": self.slope_stderr, "predicted_exponent": self.predicted,
                "excluded_n": list(self.excluded)}


def medians_by_n(rows, algorithm, metric):
    by_n = defaultdict(list)
    for r in rows:
        if r["algorithm"] != algorithm or r.get("status", "ok") != "ok" or r.get(metric, "") == "":
            continue
        by_n[int(r["n"])].append(float(r[metric]))
    ns = np.array(sorted(by_n))
    return ns, np.array([np.median(by_n[n]) for n in ns])


def fit_points(ns, values, algorithm="", tol=0.0, theta=None):
    ns = np.asarray(ns)
    values = np.asarray(values, dtype=float)
    keep = values > tol
    excluded = tuple(int(n) for n in ns[~keep])
    if excluded:
        warnings.warn(f"{algorithm}: median excess <= {tol:g} at n={list(excluded)}; excluded from the fit")
    if keep.sum() < 4:
        raise ValueError(f"{algorithm}: need at least 4 n values with positive medians, have {int(keep.sum())}")
    slope, icpt, se, resid = log_slope(ns[keep], values[keep])
    pred = -1.0 / (2.0 - theta) if theta is not None and math.isfinite(theta) else None
    return RateFit(algorithm, ns[keep], values[keep], slope, icpt, resid, se, pred, excluded)


def fit_rate(summary, algorithm, metric="excess_risk", tol=0.0, theta=None):
    """Slope of log(median metric) against log(n) for one algorithm.

    ``summary`` is a path or a list of row dicts.  Medians at or below
    ``tol`` are dropped with a warning.
    """
    rows = read_summary(summary) if isinstance(summary, str) else summary
    if rows and metric not in rows[0]:
        raise ValueError(f"summary has no {metric!r} column")
    ns, med = medians_by_n(rows, algorithm, metric)
    if ns.size == 0:
        raise ValueError(f"no successful rows for algorithm {algorithm!r}")
    return fit_points(ns, med, algorithm, tol, theta)
