"""Self-contained SVG line plots from summary and trace CSVs.

Each series is one ``<polyline>``; each legend entry is a ``<text>`` with
class ``legend``.  Axes are log10 on both sides for excess-vs-n and
log-x / linear-y for test error against iterations.
"""
from __future__ import annotations

import json
import math
import os
from collections import defaultdict
from xml.sax.saxutils import escape

import numpy as np

from .fit import medians_by_n
from .runner import read_summary, read_trace, trace_name

KINDS = ("excess-vs-n", "testerror-vs-iteration")
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]
W, H = 640, 420
ML, MR, MT, MB = 70, 170, 40, 50


def _require(rows, cols):
    have = set(rows[0]) if rows else set()
    missing = [c for c in cols if c not in have]
    if missing:
        raise ValueError(f"summary is missing columns: {', '.join(missing)}")


def _series_excess(rows, algorithms):
    _require(rows, ["algorithm", "n", "excess_risk", "status"])
    out = {}
    for a in algorithms:
        ns, med = medians_by_n(rows, a, "excess_risk")
        ok = med > 0
        if ok.any():
            out[a] = (ns[ok].astype(float), med[ok])
    return out


def _series_test(rows, algorithms, trace_dir, n=None):
    _require(rows, ["algorithm", "n", "replicate", "test_error", "status"])
    out = {}
    for a in algorithms:
        mine = [r for r in rows if r["algorithm"] == a and r["status"] == "ok"]
        if not mine:
            continue
        nn = n if n is not None else max(int(r["n"]) for r in mine)
        acc = defaultdict(list)
        for r in mine:
            if int(r["n"]) != nn:
                continue
            for t in read_trace(os.path.join(trace_dir, trace_name(a, nn, int(r["replicate"])))):
                if t["test_error"] != "":
                    acc[int(t["samples"])].append(float(t["test_error"]))
        xs = np.array(sorted(acc), dtype=float)
        out[a] = (xs, np.array([np.mean(acc[x]) for x in sorted(acc)]))
    return out


def _ticks(lo, hi, log):
    """Tick positions in plot coordinates (log10 units on log axes) with labels."""
    if log:
        ks = range(math.ceil(lo - 1e-9), math.floor(hi + 1e-9) + 1)
        return [(float(k), f"1e{k}") for k in ks]
    step = (hi - lo) / 4
    return [(lo + k * step, f"{lo + k * step:.3g}") for k in range(5)]


def render_svg(series, title="", xlabel="", ylabel="", logx=True, logy=True):
    """SVG text for {name: (x, y)} series."""
    tx = (lambda v: np.log10(v)) if logx else (lambda v: np.asarray(v, dtype=float))
    ty = (lambda v: np.log10(v)) if logy else (lambda v: np.asarray(v, dtype=float))
    allx = np.concatenate([tx(x) for x, _ in series.values()])
    ally = np.concatenate([ty(y) for _, y in series.values()])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = W - ML - MR, H - MT - MB
    sx = lambda v: ML + (v - x0) / (x1 - x0) * pw
    sy = lambda v: MT + ph - (v - y0) / (y1 - y0) * ph
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="15" class="title">{escape(title)}</text>',
           f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v, lab in _ticks(x0, x1, logx):
        out.append(f'<text x="{sx(v):.1f}" y="{MT + ph + 16}" text-anchor="middle" font-size="11">{lab}</text>')
    for v, lab in _ticks(y0, y1, logy):
        out.append(f'<text x="{ML - 6}" y="{sy(v) + 4:.1f}" text-anchor="end" font-size="11">{lab}</text>')
    out.append(f'<text x="{ML + pw / 2:.1f}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MT + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {MT + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (name, (x, y)) in enumerate(series.items()):
        col = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(tx(x), ty(y)))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="2" points="{pts}" '
                   f'data-series="{escape(name)}"/>')
        ly = MT + 14 + 18 * k
        out.append(f'<line x1="{W - MR + 12}" y1="{ly - 4}" x2="{W - MR + 36}" y2="{ly - 4}" stroke="{col}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{W - MR + 42}" y="{ly}" font-size="12" class="legend">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(summary_path, kind, out_path, algorithms=None, title=None, n=None):
    """Write an SVG plot of ``kind`` built from a summary CSV (and its traces)."""
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {KINDS}")
    rows = read_summary(summary_path)
    if not rows:
        raise ValueError("summary is empty")
    if algorithms is None:
        algorithms = list(dict.fromkeys(r["algorithm"] for r in rows))
    if not algorithms:
        raise ValueError("algorithm filter is empty; nothing to plot")
    if kind == "excess-vs-n":
        series = _series_excess(rows, algorithms)
        labels = ("samples n", "median excess risk", True, True)
    else:
        trace_dir = os.path.join(os.path.dirname(os.path.abspath(summary_path)), "traces")
        series = _series_test(rows, algorithms, trace_dir, n)
        labels = ("iterations", "test error", True, False)
    if not series:
        raise ValueError("no plottable data for the selected algorithms")
    if title is None:
        cfg_path = os.path.join(os.path.dirname(os.path.abspath(summary_path)), "config.json")
        title = ""
        if os.path.exists(cfg_path):
            with open(cfg_path) as fh:
                title = json.load(fh).get("title", "")
        title = title or rows[0].get("problem", "")
    svg = render_svg(series, title, labels[0], labels[1], labels[2], labels[3])
    with open(out_path, "w") as fh:
        fh.write(svg)
    return out_path
