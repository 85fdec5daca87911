"""Command line entry point: ``adaptsa-bench <verb> ...``.

Exit codes: 0 success, 1 configuration error, 2 some cells failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from ..problems import REGISTRY, get_problem
from .config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_CELLS = 0, 1, 2


def _common(p, config=True):
    if config:
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a config entry, e.g. algorithms.0.G_scale=0.1 (repeatable)")
        p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")


def _load(args):
    ov = list(args.override)
    if getattr(args, "max_abs_scale", False):
        ov.append("dataset.scale=maxabs")
    return load_config(args.config, ov, seed=args.seed, out=getattr(args, "out", None))


def cmd_run(args):
    from .runner import run_experiment

    cfg = _load(args)
    res = run_experiment(cfg, threads=args.threads)
    print(f"wrote {res.summary_path} ({len(res.results)} cells, {len(res.failures)} failed)")
    for f in res.failures:
        print(f"  failed: {f.label} n={f.n} replicate={f.replicate}: {f.message}", file=sys.stderr)
    return EXIT_CELLS if res.failures else EXIT_OK


def cmd_validate(args):
    cfg = _load(args)
    print(f"config OK: {len(cfg.algorithms)} algorithms, n_grid={cfg.n_grid}, replicates={cfg.replicates}")
    return EXIT_OK


def cmd_fit(args):
    from .fit import fit_rate

    theta = get_problem(args.problem).meta.ebc_theta if args.problem else None
    fit = fit_rate(args.summary, args.algorithm, args.metric, args.tol, theta)
    print(json.dumps(fit.as_dict(), indent=2))
    return EXIT_OK


def cmd_plot(args):
    from .plot import emit_plot

    algs = None if args.algorithms is None else [a for a in args.algorithms.split(",") if a]
    print(emit_plot(args.summary, args.kind, args.out, algs, args.title))
    return EXIT_OK


def cmd_estimate_ebc(args):
    from ..conditions import estimate_ebc

    P = get_problem(args.problem)
    est = estimate_ebc(P, n_points=args.points, excess_floor=args.excess_floor, rng=args.seed)
    print(f"problem={P.name} points={est.n_points} floor={est.excess_floor:g} cap={est.alpha_cap:g}")
    for t, a in zip(est.theta_grid, est.alpha_hat):
        print(f"theta={t:.2f} alpha_hat={a:.6g}")
    print(f"recommended_theta={est.recommended_theta} (metadata theta={P.meta.ebc_theta})")
    return EXIT_OK


def cmd_check_conditions(args):
    from ..conditions import check_bernstein, central_sensitivity

    P = get_problem(args.problem)
    rng = np.random.default_rng(args.seed)
    W = P.set.sample(rng, args.points)
    reports = [check_bernstein(P, W, mc_samples=args.mc, rng=rng)]
    reports += list(central_sensitivity(P, W, args.epsilon, mc_samples=args.mc, rng=rng).values())
    rows = [r for rep in reports for r in rep.rows()]
    for rep in reports:
        print(f"{rep.kind} {rep.params}: {'pass' if rep.passed else 'FAIL'} "
              f"({len(rep.failures)}/{len(rep.points)} points fail)")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK


def cmd_erm_study(args):
    from ..erm import erm_rate_study, zero_noise_variant

    P = zero_noise_variant(args.problem) if args.zero_noise else get_problem(args.problem)
    res = erm_rate_study(P, args.n_grid, args.replicates, args.tolerance, args.seed, args.zero_noise)
    print(f"problem={res.problem} slope={res.slope:.4f} stderr={res.slope_stderr:.4f} "
          f"predicted={res.predicted_exponent:.4f} optimistic={res.optimistic_exponent:.4f}")
    for n, m in zip(res.n_grid, res.medians):
        print(f"n={n} median_excess={m:.6g}")
    for note in res.notes:
        print(f"note: {note}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["problem", "n", "replicate", "excess_risk"], lineterminator="\n")
            w.writeheader()
            w.writerows(res.rows())
    return EXIT_OK


def cmd_list_problems(args):
    for name in sorted(REGISTRY):
        m = get_problem(name).meta
        print(f"{name}: d={m.dimension} G={m.lipschitz_G:.4g} R={m.diameter_R:.4g} P*={m.risk_min_Pstar:.4g} "
              f"theta={m.ebc_theta:g} alpha={m.ebc_alpha:.4g}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="adaptsa-bench", description="stochastic approximation benchmark")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run every cell of a config")
    _common(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-abs-scale", action="store_true", help="scale dataset features by max |value|")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config without running it")
    _common(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--max-abs-scale", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit", help="log-log slope of median excess vs n")
    p.add_argument("--summary", required=True)
    p.add_argument("--algorithm", required=True)
    p.add_argument("--metric", default="excess_risk")
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--problem", help="registry id, to report the predicted exponent")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("plot", help="SVG plot from a summary")
    p.add_argument("--summary", required=True)
    p.add_argument("--kind", required=True, choices=["excess-vs-n", "testerror-vs-iteration"])
    p.add_argument("--out", required=True)
    p.add_argument("--algorithms", help="comma-separated labels (default: all)")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("estimate-ebc", help="estimate the error-bound exponent of a registry problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--points", type=int, default=10**5)
    p.add_argument("--excess-floor", type=float)
    _common(p, config=False)
    p.set_defaults(func=cmd_estimate_ebc)

    p = sub.add_parser("check-conditions", help="Monte-Carlo Bernstein / central checks")
    p.add_argument("--problem", required=True)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--mc", type=int, default=10**4)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--out")
    _common(p, config=False)
    p.set_defaults(func=cmd_check_conditions)

    p = sub.add_parser("erm-study", help="ERM excess-risk rate study")
    p.add_argument("--problem", required=True)
    p.add_argument("--n-grid", type=int, nargs="+", default=[100, 1000, 10000, 100000])
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--zero-noise", action="store_true")
    p.add_argument("--out")
    _common(p, config=False)
    p.set_defaults(func=cmd_erm_study)

    p = sub.add_parser("list-problems", help="registry instances and their metadata")
    p.set_defaults(func=cmd_list_problems)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as e:
        if args.verb in ("run", "validate"):
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
