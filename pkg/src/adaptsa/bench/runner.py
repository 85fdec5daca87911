"""Run every (algorithm, n, replicate) cell of a config and write CSVs.

Outputs under ``cfg.out``::

    config.json               the resolved config
    summary.csv               one row per cell, see SUMMARY_COLUMNS
    traces/<label>__n<n>__r<rep>.csv
    tuning.csv                chosen parameters (only when tuning is configured)

Cells draw from ``rng.stream(seed, cell_index)`` with one cell index per
(n, replicate) pair, so all algorithms in a cell see the same random stream.
Floats are written with ``repr`` and wall times are 0 unless ``timing`` is
on, which makes reruns byte-identical.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import solvers
from ..data import empirical_problem, load_libsvm, max_abs_scale, split, synthetic_sparse, test_error
from ..geometry import set_from_dict
from ..problems import problem_from_spec
from . import rng as rngmod
from .config import DEFAULT_GRID, labels

SUMMARY_COLUMNS = ["problem", "algorithm", "n", "replicate", "seed", "samples_used", "{metric}",
                   "wall_ms", "stage_count", "status", "message"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# problem / dataset setup
# ---------------------------------------------------------------------------

@dataclass
class Setup:
    problem: object
    name: str
    validation: Optional[object] = None
    test: Optional[object] = None
    loss: str = "square"
    n_train: Optional[int] = None


def build_setup(cfg):
    if cfg.problem is not None:
        P = problem_from_spec(cfg.problem)
        name = cfg.problem.get("id", P.name)
        return Setup(P, name)
    ds_cfg = cfg.dataset
    if "synthetic" in ds_cfg:
        syn = dict(ds_cfg["synthetic"])
        ds, _ = synthetic_sparse(syn.pop("n"), syn.pop("d"), **syn)
        name = ds_cfg.get("name", "synthetic_sparse")
    else:
        ds = load_libsvm(ds_cfg["path"])
        name = ds_cfg.get("name", os.path.basename(ds_cfg["path"]))
    train, val, test = split(ds, ds_cfg.get("split", [4, 1, 1]), ds_cfg.get("split_seed", 0))
    if ds_cfg.get("scale", "none") == "maxabs":
        train, scale = max_abs_scale(train)
        val, _ = max_abs_scale(val, scale)
        test, _ = max_abs_scale(test, scale)
    spec = dict(ds_cfg["set"])
    if spec["kind"] != "box":
        spec.setdefault("dim", ds.n_features)
    fset = set_from_dict(spec)
    loss = ds_cfg.get("loss", "square")
    P = empirical_problem(train, loss, fset, ds_cfg.get("lambda", 0.0), name=name)
    return Setup(P, name, val, test, loss, train.n_rows)


# ---------------------------------------------------------------------------
# algorithm dispatch
# ---------------------------------------------------------------------------

def run_algorithm(alg, problem, n, rng, checkpoints=32, monitor=None, n_train=None):
    """Run one configured algorithm with budget n; returns (output, RunTrace)."""
    a = dict(alg)
    kind = a["id"]
    meta = problem.meta
    R0 = a.get("R0", 2.0 * meta.diameter_R)
    w1 = np.asarray(a["w1"], dtype=float) if "w1" in a else problem.set.project(np.zeros(problem.dim))
    scale = a.get("G_scale", 1.0)
    if kind in ("asa", "asa2"):
        G = a.get("G", meta.lipschitz_G) * scale
        fn = solvers.asa if kind == "asa" else solvers.asa2
        return fn(problem, w1, n, R0=R0, G=G, rng=rng, checkpoints=checkpoints, monitor=monitor)
    if kind == "asa3":
        G = a.get("G", problem.data_lipschitz or meta.lipschitz_G) * scale
        return solvers.asa3(problem, w1, n, R0=R0, G=G, rng=rng, checkpoints=checkpoints, monitor=monitor)
    if kind == "ssg":
        G = a.get("G", meta.lipschitz_G)
        gamma = a.get("gamma", R0 / (G * math.sqrt(n + 1)))
        return solvers.ssg(problem, None, w1, gamma, n, rng, checkpoints=checkpoints, monitor=monitor)
    if kind == "ssgs":
        G = a.get("G", meta.lipschitz_G)
        beta = a.get("beta", R0 * math.sqrt(n) / (2.0 * G))
        return solvers.ssgs(problem, w1, beta, n, rng, checkpoints=checkpoints, monitor=monitor)
    if kind == "psg":
        G = a.get("G", problem.data_lipschitz or meta.lipschitz_G)
        gamma = a.get("gamma", R0 / (G * math.sqrt(n)))
        return solvers.psg(problem, None, w1, gamma, n, rng, checkpoints=checkpoints, monitor=monitor)
    if kind == "smd":
        gamma = a.get("gamma", R0 / (meta.lipschitz_G * math.sqrt(n)))
        return solvers.smd_pnorm(problem, None, w1, gamma, n, rng, p=a.get("p"), checkpoints=checkpoints,
                                 monitor=monitor)
    if kind == "sag":
        if n_train is None:
            raise ValueError("SAG needs a finite training set")
        L = meta.smoothness_L or 1.0
        step = a.get("step", 1.0 / (16.0 * L))
        epochs = a.get("epochs", n / n_train)
        return solvers.sag(problem, step, epochs, rng, w1=None if "w1" not in a else w1,
                           checkpoints=checkpoints, monitor=monitor)
    raise ValueError(f"unknown algorithm {kind!r}")


# ---------------------------------------------------------------------------
# tuning
# ---------------------------------------------------------------------------

def tune(cfg, setup, threads=1):
    """Pick each tunable parameter by final validation error at the largest n.

    Returns the resolved algorithm list and every trial as
    (label, param, value, validation error).
    """
    n = max(cfg.n_grid)
    algs = [dict(a) for a in cfg.algorithms]
    specs = [a.pop("tune", None) for a in algs]
    jobs = [(k, v) for k, t in enumerate(specs) if t is not None for v in t.get("grid", DEFAULT_GRID)]

    def trial(job):
        k, v = job
        g = rngmod.stream(cfg.seed, rngmod.TUNE_OFFSET + k)
        try:
            w, _ = run_algorithm(dict(algs[k], **{specs[k]["param"]: v}), setup.problem, n, g,
                                 checkpoints=2, n_train=setup.n_train)
            err = test_error(w, setup.validation, setup.loss)
        except (ValueError, RuntimeError, FloatingPointError):
            err = math.inf
        return err if np.isfinite(err) else math.inf

    errs = _map(trial, jobs, threads)
    trials = []
    best = {}
    for (k, v), err in zip(jobs, errs):
        trials.append((algs[k].get("label", algs[k]["id"]), specs[k]["param"], v, err))
        if k not in best or err < best[k][1]:
            best[k] = (v, err)
    for k, (v, _) in best.items():
        algs[k][specs[k]["param"]] = v
    return algs, trials


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# cells
# ---------------------------------------------------------------------------

@dataclass
class CellResult:
    label: str
    n: int
    replicate: int
    seed: int
    samples_used: int = 0
    value: Optional[float] = None
    wall_ms: float = 0.0
    stage_count: int = 1
    status: str = "ok"
    message: str = ""
    trace_rows: list = field(default_factory=list)


def _run_cell(cfg, setup, alg, label, n, rep, cell_index):
    g = rngmod.stream(cfg.seed, cell_index)
    res = CellResult(label, n, rep, rngmod.cell_seed(cfg.seed, cell_index))
    monitor = None
    if setup.test is not None:
        test = setup.test
        monitor = lambda w: {"test_error": test_error(w, test, setup.loss)}
    t0 = time.perf_counter()
    try:
        w, trace = run_algorithm(alg, setup.problem, n, g, cfg.checkpoints, monitor, setup.n_train)
    except Exception as e:  # the cell is aborted and reported; other cells go on
        res.status = "error"
        res.message = f"{type(e).__name__}: {e}".replace("\n", " ")
        return res
    res.wall_ms = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
    res.samples_used = trace.samples_used
    res.stage_count = trace.schedule.m if trace.schedule is not None else 1
    metric = cfg.metric
    for r in trace.records:
        v = r.metrics.get("test_error") if metric == "test_error" else r.excess
        res.trace_rows.append((r.samples, r.stage, v))
    if metric == "test_error":
        res.value = test_error(w, setup.test, setup.loss)
    else:
        res.value = setup.problem.excess(w)
    return res


def cells(cfg):
    """(label-index, n, replicate, cell_index) in output order."""
    out = []
    for a in range(len(cfg.algorithms)):
        for i, n in enumerate(cfg.n_grid):
            for r in range(cfg.replicates):
                out.append((a, n, r, i * cfg.replicates + r))
    return out


@dataclass
class ExperimentResult:
    out: str
    summary_path: str
    results: list
    tuning: list

    @property
    def failures(self):
        return [r for r in self.results if r.status != "ok"]


def trace_name(label, n, rep):
    return f"{label}__n{n}__r{rep}.csv"


def run_experiment(cfg, threads=1, write=True):
    setup = build_setup(cfg)
    algs, tuning = tune(cfg, setup, threads)
    labs = labels(cfg)
    jobs = cells(cfg)

    def job(spec):
        a, n, r, ci = spec
        return _run_cell(cfg, setup, algs[a], labs[a], n, r, ci)

    results = _map(job, jobs, threads)
    summary = os.path.join(cfg.out, "summary.csv")
    if write:
        _write_outputs(cfg, setup, results, tuning)
    return ExperimentResult(cfg.out, summary, results, tuning)


def _write_outputs(cfg, setup, results, tuning):
    os.makedirs(os.path.join(cfg.out, "traces"), exist_ok=True)
    with open(os.path.join(cfg.out, "config.json"), "w") as fh:
        fh.write(cfg.dumps() + "\n")
    metric = cfg.metric
    cols = [c.format(metric=metric) for c in SUMMARY_COLUMNS]
    with open(os.path.join(cfg.out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in results:
            w.writerow([setup.name, r.label, r.n, r.replicate, r.seed, r.samples_used, _fmt(r.value),
                        _fmt(r.wall_ms), r.stage_count, r.status, r.message])
    for r in results:
        if r.status != "ok":
            continue
        with open(os.path.join(cfg.out, "traces", trace_name(r.label, r.n, r.replicate)), "w",
                  newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["samples", "stage", metric])
            for s, st, v in r.trace_rows:
                w.writerow([s, st, _fmt(v)])
    if tuning:
        with open(os.path.join(cfg.out, "tuning.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["algorithm", "param", "value", "validation_error"])
            for lab, p, v, e in tuning:
                w.writerow([lab, p, _fmt(float(v)), _fmt(float(e))])


def read_summary(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_trace(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
