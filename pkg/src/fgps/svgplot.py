"""Minimal single-panel SVG line charts (axes, polylines, legend)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 50


def _ticks(lo: float, hi: float, count: int = 5):
    return np.linspace(lo, hi, count)


def _limits(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi - lo < 1e-300:
        pad = max(abs(lo), 1.0) * 0.5
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_chart(series, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """Render ``series``, a list of ``(label, x, y)``, as an SVG document string."""
    if not series:
        raise ValueError("nothing to plot")
    xs = np.concatenate([np.asarray(x, dtype=float) for _, x, _ in series])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, _, y in series])
    x0, x1 = _limits(xs)
    y0, y1 = _limits(ys)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (y1 - np.asarray(y, dtype=float)) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for tx in _ticks(x0, x1):
        out.append(f'<text x="{px(tx):.1f}" y="{TOP + ph + 16}" text-anchor="middle">{tx:.3g}</text>')
    for ty in _ticks(y0, y1):
        out.append(f'<text x="{LEFT - 6}" y="{py(ty) + 4:.1f}" text-anchor="end">{ty:.3g}</text>')
    if title:
        out.append(f'<text x="{LEFT + pw / 2}" y="{TOP - 14}" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle">'
                   f'{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {TOP + ph / 2})">{escape(ylabel)}</text>')

    for i, (label, x, y) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(x), py(y)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        ly = TOP + 10 + 18 * i
        out.append(f'<line x1="{LEFT + pw + 10}" y1="{ly}" x2="{LEFT + pw + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 35}" y="{ly + 4}">{escape(str(label))}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"
