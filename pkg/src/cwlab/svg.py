"""Minimal deterministic SVG line plots (no timestamps, fixed number formatting)."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=50)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, k: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def line_plot(
    title: str,
    x: Sequence[float],
    series: dict[str, Sequence[float]],
    x_label: str = "n",
    log2_x: bool = True,
) -> str:
    """Polyline plot of each named series against ``x``; non-finite points are skipped."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    xs = [math.log2(v) if log2_x else float(v) for v in x]
    finite = [float(v) for ys in series.values() for v in ys if math.isfinite(float(v))]
    y_lo, y_hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return MARGIN["top"] + (1 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(y_lo, y_hi):
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_fmt(py(t) + 4)}" text-anchor="end">{t:.4g}</text>')
    for t in _ticks(x_lo, x_hi):
        label = f"2^{t:.3g}" if log2_x else f"{t:.4g}"
        out.append(f'<text x="{_fmt(px(t))}" y="{HEIGHT - MARGIN["bottom"] + 18}" text-anchor="middle">{label}</text>')
    out.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(x_label)}</text>')
    for i, (name, ys) in enumerate(series.items()):
        color = colors[i % len(colors)]
        pts = [(px(a), py(float(b))) for a, b in zip(xs, ys) if math.isfinite(float(b))]
        if pts:
            path = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)
            dash = ' stroke-dasharray="6,4"' if i else ""
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(
            f'<text x="{MARGIN["left"] + 10}" y="{MARGIN["top"] + 16 + 16 * i}" fill="{color}">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
