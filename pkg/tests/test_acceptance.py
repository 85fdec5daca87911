"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py``; the verdict lines are written
straight to the terminal.  Thresholds are the stated ones, not tuned to the
observed numbers.
"""
import math
import os
import time

import numpy as np
import pytest

from adaptsa.bench.config import load_config
from adaptsa.bench.fit import fit_rate, medians_by_n
from adaptsa.bench.runner import read_trace, run_experiment, trace_name
from adaptsa.conditions import check_bernstein, estimate_ebc
from adaptsa.erm import erm_rate_study, zero_noise_variant
from adaptsa.geometry import BallCap, project_cap
from adaptsa.problems import REGISTRY, get_problem
from adaptsa.solvers import asa, asa2, asa3, make_schedule, ssg, ssg_bound
from oracles import proj_cap, proj_set, random_set, schedule_oracle

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail, seconds, limit=None):
        budget = "" if limit is None else f" (limit {limit:.0f}s)"
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} | {detail} | {seconds:.1f}s{budget}")
    return emit


def run_config(name, out, **overrides):
    cfg = load_config(os.path.join(CONFIGS, name), out=str(out))
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg, run_experiment(cfg)


def test_c1_geometry_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_proj, worst_feas, worst_cap = 0.0, 0.0, 0.0
    for kind in ("l2", "l1", "box", "l2c"):
        for i in range(1000):
            d = 1 + i % 5
            S = random_set(rng, kind, d)
            x = rng.normal(0, 3, d)
            worst_proj = max(worst_proj, float(np.linalg.norm(S.project(x) - proj_set(S, x))))
            c = S.project(rng.normal(0, 1, d))
            R = float(rng.uniform(0.01, 2.0))
            p = project_cap(BallCap(S, c, R), x)
            viol = max(float(np.linalg.norm(p - c)) - R, float(np.linalg.norm(p - proj_set(S, p))), 0.0)
            worst_feas = max(worst_feas, viol)
            if i % 10 == 0:
                worst_cap = max(worst_cap, float(np.linalg.norm(p - proj_cap(S, c, R, x))))
    dt = time.perf_counter() - t0
    ok = worst_proj <= 1e-6 and worst_feas <= 1e-8 and worst_cap <= 1e-6 and dt < 30
    report(1, ok, f"max|proj-oracle|={worst_proj:.2e} cap infeasibility={worst_feas:.2e} "
                  f"max|cap-conic|={worst_cap:.2e}", dt, 30)
    assert ok


def test_c2_schedules(report):
    t0 = time.perf_counter()
    want = {100: (1, 100), 1000: (2, 500), 10 ** 6: (7, 142857)}
    ok = True
    got = {}
    for n, mn in want.items():
        s = make_schedule(n, 2.0, 4.0)
        m, n0, steps, radii = schedule_oracle(n, 2.0, 4.0)
        got[n] = (s.m, s.n0)
        ok &= (s.m, s.n0) == mn == (m, n0)
        ok &= bool(np.allclose(s.steps, steps, rtol=1e-15, atol=0) and s.radii == radii)
    report(2, ok, f"(m, n0) = {got}", time.perf_counter() - t0)
    assert ok


def _slopes(cfg_name, tmp_path):
    cfg, res = run_config(cfg_name, tmp_path / cfg_name)
    assert not res.failures
    return {a: fit_rate(res.summary_path, a) for a in ("asa", "ssg")}


def test_c3_adaptivity_theta_one(report, tmp_path):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("rates_two_point.json", "rates_hinge.json"):
        fits = _slopes(name, tmp_path)
        a, s = fits["asa"].slope, fits["ssg"].slope
        ok_a, ok_s = a <= -0.8, -0.62 <= s <= -0.38
        ok &= ok_a and ok_s
        parts.append(f"{name[6:-5]}: ASA {a:.3f} [{'ok' if ok_a else 'x'}] SSG {s:.3f} [{'ok' if ok_s else 'x'}]")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    report(3, ok, "; ".join(parts), dt, 300)
    assert ok


def test_c4_adaptivity_intermediate_theta(report, tmp_path):
    t0 = time.perf_counter()
    cfg, res = run_config("rates_quartic.json", tmp_path / "q")
    fit = fit_rate(res.summary_path, "asa", theta=0.5)
    dt = time.perf_counter() - t0
    ok = -0.9 <= fit.slope <= -0.45 and dt < 300
    report(4, ok, f"ASA slope {fit.slope:.3f} (theory {fit.predicted:.3f}), medians "
                  f"{np.array2string(fit.median, precision=2)}", dt, 300)
    assert ok


def test_c5_high_probability_bound(report):
    t0 = time.perf_counter()
    P = get_problem("two_point_square")
    T, delta, R0, G = 10 ** 4, 0.1, 2.0 * P.meta.diameter_R, P.meta.lipschitz_G
    bound = ssg_bound(R0, G, T, delta)
    gamma = R0 / (G * math.sqrt(T + 1))
    seeds = np.random.SeedSequence(5).spawn(200)
    ex = np.array([P.excess(ssg(P, None, [-1.0], gamma, T, np.random.default_rng(s))[0]) for s in seeds])
    frac = float(np.mean(ex > bound))
    dt = time.perf_counter() - t0
    ok = frac <= 0.1 and dt < 120
    report(5, ok, f"bound {bound:.4f}, exceedance {frac:.3f}, max excess {ex.max():.2e}", dt, 120)
    assert ok


def test_c6_ebc_recovery(report):
    t0 = time.perf_counter()
    rows, ok = [], True
    for k, name in enumerate(sorted(REGISTRY)):
        P = get_problem(name)
        est = estimate_ebc(P, rng=600 + k)
        hit = est.recommended_theta is not None and abs(est.recommended_theta - P.meta.ebc_theta) <= 0.15 + 1e-9
        ok &= hit
        rows.append(f"{name} {est.recommended_theta}/{P.meta.ebc_theta:g}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    report(6, ok, "; ".join(rows), dt, 120)
    assert ok


def test_c7_bernstein(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(700)
    parts, ok = [], True
    for name in sorted(REGISTRY):
        P = get_problem(name)
        if not P.convex:
            continue
        rep = check_bernstein(P, P.set.sample(rng, 100), mc_samples=10 ** 4, rng=rng)
        ok &= rep.passed
        parts.append(f"{name} {len(rep.failures)}/100 fail")
    P = get_problem("two_point_square")
    pt = check_bernstein(P, np.array([1.0]), mc_samples=10 ** 5, rng=rng).points[0]
    se_l = pt.stderr  # combined stderr bounds each side's own stderr
    spot = abs(pt.lhs - 5.0) <= 3 * se_l and abs(pt.rhs - 16.0) <= 3 * se_l and pt.lhs <= pt.rhs
    ok &= spot
    dt = time.perf_counter() - t0
    report(7, ok, "; ".join(parts) + f"; spot check LHS {pt.lhs:.3f}~5, RHS {pt.rhs:.3f}~16", dt)
    assert ok


def test_c8_erm_rates(report):
    t0 = time.perf_counter()
    grid = [100, 1000, 10000, 100000]
    base = erm_rate_study(get_problem("two_point_square"), grid, replicates=20, rng=800)
    zero = erm_rate_study(zero_noise_variant("two_point_square"), grid, replicates=20, rng=801, zero_noise=True)
    dt = time.perf_counter() - t0
    ok = -1.3 <= base.slope <= -0.7 and zero.slope <= base.slope - 0.3 and dt < 600
    tag = " (exact recovery)" if zero.exact_recovery else ""
    report(8, ok, f"slope {base.slope:.3f} +- {base.slope_stderr:.3f}; zero-noise slope {zero.slope}{tag}", dt, 600)
    assert ok


def _mean_curve(out, label, n, reps):
    acc = {}
    for r in range(reps):
        for row in read_trace(os.path.join(out, "traces", trace_name(label, n, r))):
            acc.setdefault(int(row["samples"]), []).append(float(row["test_error"]))
    xs = sorted(acc)
    return np.array(xs), np.array([np.mean(acc[x]) for x in xs])


def smoothed_monotone(y, window=5, rel=0.01):
    s = np.convolve(y, np.ones(window) / window, mode="valid")
    return bool(np.all(s[1:] <= s[:-1] * (1 + rel))), float(np.max(s[1:] / s[:-1] - 1))


def test_c9_case_study(report, tmp_path):
    t0 = time.perf_counter()
    cfg, res = run_config("case_study.json", tmp_path / "cs")
    assert not res.failures
    n = cfg.n_grid[0]
    final = {}
    for r in res.results:
        final.setdefault(r.label, {})[r.replicate] = r.value
    wins = sum(final["ASA"][k] <= final["PSG"][k] for k in range(cfg.replicates))
    mono = {}
    for lab in ("ASA", "PSG", "SMD", "SAG"):
        _, y = _mean_curve(cfg.out, lab, n, cfg.replicates)
        mono[lab] = smoothed_monotone(y)
    ok = wins >= 4 and all(m[0] for m in mono.values())
    med = {lab: float(np.median(list(v.values()))) for lab, v in final.items()}
    dt = time.perf_counter() - t0
    report(9, ok, f"ASA <= PSG in {wins}/5 seeds; medians "
                  + ", ".join(f"{k} {v:.5f}" for k, v in med.items())
                  + "; max smoothed rise " + ", ".join(f"{k} {v[1]:+.4f}" for k, v in mono.items()), dt)
    assert ok


def _tree(out):
    files = {}
    for root, _, names in os.walk(out):
        for nm in names:
            with open(os.path.join(root, nm), "rb") as fh:
                files[os.path.relpath(os.path.join(root, nm), out)] = fh.read()
    return files


def test_c10_determinism_and_budget(report, tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "smoke"
    run_config("smoke.json", out)
    first = _tree(out)
    run_config("smoke.json", out)
    same = _tree(out) == first
    worst = 0.0
    rng = np.random.default_rng(1000)
    probs = {"asa": get_problem("hinge_box5"), "asa2": get_problem("newsvendor"),
             "asa3": get_problem("l1_least_squares")}
    fns = {"asa": asa, "asa2": asa2, "asa3": asa3}
    for n in list(range(100, 400, 7)) + [999, 1000, 4321, 10 ** 5, 123457]:
        for k, fn in fns.items():
            P = probs[k]
            w1 = P.set.sample(rng, 1)[0]
            _, tr = fn(P, w1, n, rng=int(rng.integers(1 << 31)))
            worst = max(worst, tr.samples_used / n)
    ok = same and worst <= 1.0
    report(10, ok, f"byte-identical rerun: {same} ({len(first)} files); max samples_used/n = {worst:.4f}",
           time.perf_counter() - t0)
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main(["-v", __file__]))
