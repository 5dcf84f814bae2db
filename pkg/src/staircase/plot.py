"""Minimal SVG 1.1 line charts with shaded one-standard-deviation bands.

Every series also carries its numbers as ``data-*`` attributes so the figure
can be checked by parsing it back.
"""

from __future__ import annotations

import math
import os
from xml.sax.saxutils import escape

import numpy as np

from .harness import SweepResult, best_values, difference_at_best
from .metrics import MetricRecord

QUANTITIES = ("tradeoff", "test_mse", "train_mse", "gen_gap", "robust_train_mse",
              "robust_test_mse", "norm")
COLORS = {"standard": "#1f77b4", "robust": "#d62728", "augmented": "#2ca02c", "rst": "#9467bd"}

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 80, 170, 40, 60


def series_for(records: list[MetricRecord], quantity: str, baseline: str = "standard"):
    """``[(label, estimator, ns, mean, std)]`` for a quantity at each estimator's best lambda."""
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")
    if not records:
        raise ValueError("no records to plot")
    estimators = list(dict.fromkeys(r.estimator_kind for r in records))
    ns = sorted({r.n for r in records})
    out = []
    if quantity == "tradeoff":
        if baseline not in estimators:
            raise ValueError(f"tradeoff plot needs {baseline!r} records")
        others = [e for e in estimators if e != baseline]
        if not others:
            raise ValueError("tradeoff plot needs at least one estimator besides the baseline")
        for e in others:
            diffs = [difference_at_best(records, e, baseline, n) for n in ns]
            out.append((f"{e} - {baseline}", e, ns, [float(np.mean(d)) for d in diffs],
                        [float(np.std(d)) for d in diffs]))
    else:
        for e in estimators:
            vals = [best_values(records, e, n, quantity) for n in ns]
            out.append((e, e, ns, [float(np.mean(v)) for v in vals],
                        [float(np.std(v)) for v in vals]))
    return out


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _nums(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def render_svg(series, title: str, ylabel: str) -> str:
    all_ns = sorted({n for s in series for n in s[2]})
    lows = [m - sd for s in series for m, sd in zip(s[3], s[4]) if math.isfinite(m)]
    highs = [m + sd for s in series for m, sd in zip(s[3], s[4]) if math.isfinite(m)]
    ylo, yhi = (min(lows + [0.0]), max(highs + [0.0])) if lows else (0.0, 1.0)
    if yhi - ylo < 1e-15:
        yhi, ylo = yhi + 1.0, ylo - 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = math.log10(all_ns[0]), math.log10(all_ns[-1])
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(n):
        return LEFT + (math.log10(n) - xlo) / (xhi - xlo) * pw

    def py(v):
        return TOP + (yhi - v) / (yhi - ylo) * ph

    parts = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(ylo, yhi):
        y = py(t)
        parts.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" '
                     'stroke="#dddddd"/>')
        parts.append(f'<text x="{LEFT - 6}" y="{y + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{t:.4g}</text>')
    for n in all_ns:
        x = px(n)
        parts.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" '
                     'stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{n}</text>')
    if ylo < 0 < yhi:
        parts.append(f'<line x1="{LEFT}" y1="{py(0):.2f}" x2="{LEFT + pw}" y2="{py(0):.2f}" '
                     'stroke="black" stroke-dasharray="4,3"/>')
    parts.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle" '
                 'font-family="sans-serif" font-size="13">number of training samples n (log scale)</text>')
    parts.append(f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13" transform="rotate(-90 18 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')

    for i, (label, est, ns, mean, std) in enumerate(series):
        color = COLORS.get(est, "#333333")
        pts = [(px(n), py(m)) for n, m in zip(ns, mean) if math.isfinite(m)]
        upper = [(px(n), py(m + s)) for n, m, s in zip(ns, mean, std) if math.isfinite(m)]
        lower = [(px(n), py(m - s)) for n, m, s in zip(ns, mean, std) if math.isfinite(m)]
        parts.append(f'<g class="series" data-label="{escape(label)}" data-estimator="{est}" '
                     f'data-n="{_nums(ns)}" data-mean="{_nums(mean)}" data-std="{_nums(std)}">')
        band = upper + lower[::-1]
        if band:
            poly = " ".join(f"{x:.2f},{y:.2f}" for x, y in band)
            parts.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        parts.append("</g>")
        ly = TOP + 12 + 20 * i
        lx = LEFT + pw + 12
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
                     'stroke-width="2"/>')
        parts.append(f'<text x="{lx + 26}" y="{ly + 4}" font-family="sans-serif" '
                     f'font-size="11">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


_YLABELS = {"tradeoff": "test MSE difference", "test_mse": "test MSE", "train_mse": "train MSE",
            "gen_gap": "generalization gap", "robust_train_mse": "robust train MSE",
            "robust_test_mse": "robust test MSE", "norm": "squared norm"}


def emit_plot(result: SweepResult | list[MetricRecord], quantity: str, path,
              baseline: str = "standard") -> None:
    records = result.records if isinstance(result, SweepResult) else list(result)
    series = series_for(records, quantity, baseline)
    title = ("Difference of test MSE at best lambda" if quantity == "tradeoff"
             else f"{_YLABELS[quantity]} at best lambda")
    svg = render_svg(series, title, _YLABELS[quantity])
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(svg)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write SVG to {path}: {exc}") from exc


def read_series(path) -> dict[str, dict[str, list[float]]]:
    """Parse the ``data-*`` attributes written by :func:`emit_plot`."""
    import xml.etree.ElementTree as ET
    root = ET.parse(path).getroot()
    out = {}
    for g in root.iter("{http://www.w3.org/2000/svg}g"):
        if g.get("class") != "series":
            continue
        out[g.get("data-label")] = {
            "n": [int(float(v)) for v in g.get("data-n").split()],
            "mean": [float(v) for v in g.get("data-mean").split()],
            "std": [float(v) for v in g.get("data-std").split()],
        }
    return out
