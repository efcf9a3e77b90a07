"""Minimal SVG writers: log-x line plot and box plots (Tukey whiskers)."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 400
ML, MR, MT, MB = 70, 20, 40, 60


def box_stats(x) -> dict:
    """Median, quartiles, whiskers at the most extreme points within 1.5 IQR, and outliers."""
    x = np.sort(np.asarray(x, float))
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("no finite values")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo_f, hi_f = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_f) & (x <= hi_f)]
    return {
        "median": float(med), "q1": float(q1), "q3": float(q3),
        "whisker_lo": float(inside.min()), "whisker_hi": float(inside.max()),
        "outliers": x[(x < lo_f) | (x > hi_f)].tolist(),
    }


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 1)]


def _frame(title, xlabel, ylabel):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="18" y="{H / 2}" text-anchor="middle" transform="rotate(-90 18 {H / 2})">{escape(ylabel)}</text>',
        f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" fill="none" stroke="black"/>',
    ]


def _yaxis(lo, hi, ymap, log):
    out = []
    if log:
        ticks = [10.0 ** k for k in range(math.floor(lo), math.ceil(hi) + 1) if lo <= k <= hi]
        vals = [math.log10(t) for t in ticks]
        labels = [f"1e{int(v)}" for v in vals]
    else:
        vals = _ticks(lo, hi)
        labels = [f"{v:g}" for v in vals]
    for v, lab in zip(vals, labels):
        y = ymap(v)
        out.append(f'<line x1="{ML - 4}" x2="{ML}" y1="{y:.1f}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{ML - 6}" y="{y + 4:.1f}" text-anchor="end">{lab}</text>')
    return out


def _write(parts, path):
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def line_plot(x, ys: dict, path=None, title="", xlabel="", ylabel="", logx=True, logy=False,
              marker_x: float | None = None) -> str:
    """Curves ``ys[label]`` against ``x``; optional vertical marker (e.g. the argmin)."""
    x = np.asarray(x, float)
    tx = np.log10(x) if logx else x
    allv = np.concatenate([np.asarray(v, float) for v in ys.values()])
    allv = allv[np.isfinite(allv)]
    if logy:
        allv = np.log10(allv[allv > 0])
    if allv.size == 0:
        raise ValueError("nothing finite to plot")
    x0, x1 = float(tx.min()), float(tx.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = float(allv.min()), float(allv.max())
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad
    xm = lambda v: ML + (v - x0) / (x1 - x0) * (W - ML - MR)
    ym = lambda v: H - MB - (v - y0) / (y1 - y0) * (H - MT - MB)
    parts = _frame(title, xlabel, ylabel) + _yaxis(y0, y1, ym, logy)
    xt = range(math.ceil(x0), math.floor(x1) + 1) if logx else _ticks(x0, x1)
    for v in xt:
        lab = f"1e{v}" if logx else f"{v:g}"
        parts.append(f'<text x="{xm(v):.1f}" y="{H - MB + 16}" text-anchor="middle">{lab}</text>')
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    for n, (label, v) in enumerate(ys.items()):
        v = np.asarray(v, float)
        tv = np.log10(np.where(v > 0, v, np.nan)) if logy else v
        pts = " ".join(f"{xm(a):.1f},{ym(b):.1f}" for a, b in zip(tx, tv) if np.isfinite(b))
        c = colors[n % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        parts.append(f'<text x="{W - MR - 5}" y="{MT + 15 + 14 * n}" text-anchor="end" fill="{c}">{escape(label)}</text>')
    if marker_x is not None:
        mx = xm(math.log10(marker_x) if logx else marker_x)
        parts.append(f'<line x1="{mx:.1f}" x2="{mx:.1f}" y1="{MT}" y2="{H - MB}" stroke="gray" stroke-dasharray="4,3"/>')
    return _write(parts, path)


def box_plot(groups: dict, path=None, title="", ylabel="", logy=False) -> str:
    """One box per entry of ``groups`` (label -> values)."""
    if not groups:
        raise ValueError("no groups to plot")
    stats = {k: box_stats(v) for k, v in groups.items()}
    tf = (lambda v: math.log10(v)) if logy else (lambda v: v)
    vals = []
    for s in stats.values():
        vals += [s["whisker_lo"], s["whisker_hi"]] + s["outliers"]
    if logy:
        vals = [v for v in vals if v > 0]
    tv = [tf(v) for v in vals]
    y0, y1 = min(tv), max(tv)
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad
    ym = lambda v: H - MB - (tf(v) - y0) / (y1 - y0) * (H - MT - MB)
    ymt = lambda v: H - MB - (v - y0) / (y1 - y0) * (H - MT - MB)
    parts = _frame(title, "", ylabel) + _yaxis(y0, y1, ymt, logy)
    slot = (W - ML - MR) / len(stats)
    for i, (label, s) in enumerate(stats.items()):
        cx = ML + slot * (i + 0.5)
        hw = min(30.0, slot * 0.3)
        parts.append(f'<line x1="{cx:.1f}" x2="{cx:.1f}" y1="{ym(s["whisker_lo"]):.1f}" y2="{ym(s["q1"]):.1f}" stroke="black"/>')
        parts.append(f'<line x1="{cx:.1f}" x2="{cx:.1f}" y1="{ym(s["q3"]):.1f}" y2="{ym(s["whisker_hi"]):.1f}" stroke="black"/>')
        for wv in (s["whisker_lo"], s["whisker_hi"]):
            parts.append(f'<line x1="{cx - hw / 2:.1f}" x2="{cx + hw / 2:.1f}" y1="{ym(wv):.1f}" y2="{ym(wv):.1f}" stroke="black"/>')
        top, bot = ym(s["q3"]), ym(s["q1"])
        parts.append(f'<rect class="box" x="{cx - hw:.1f}" y="{top:.1f}" width="{2 * hw:.1f}" height="{max(bot - top, 0.5):.1f}" fill="#cfe2f3" stroke="black"/>')
        parts.append(f'<line class="median" data-value="{s["median"]!r}" x1="{cx - hw:.1f}" x2="{cx + hw:.1f}" '
                     f'y1="{ym(s["median"]):.1f}" y2="{ym(s["median"]):.1f}" stroke="#d62728" stroke-width="2"/>')
        for o in s["outliers"]:
            if not logy or o > 0:
                parts.append(f'<circle class="outlier" data-value="{o!r}" cx="{cx:.1f}" cy="{ym(o):.1f}" r="3" fill="none" stroke="black"/>')
        parts.append(f'<text x="{cx:.1f}" y="{H - MB + 16}" text-anchor="middle">{escape(label)}</text>')
    return _write(parts, path)
