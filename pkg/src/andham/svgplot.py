"""Tiny static SVG line plots (no plotting dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 320
MARGIN = 56
COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def line_plot(series: dict, path, title: str = "", xlabel: str = "", ylabel: str = "", markers: bool = True) -> None:
    """series: name -> (xs, ys). Writes a standalone SVG file."""
    xs_all = [float(x) for xs, _ in series.values() for x in xs]
    ys_all = [float(y) for _, ys in series.values() for y in ys if math.isfinite(float(y))]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * pw

    def py(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN - 4}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        col = COLOURS[i % len(COLOURS)]
        pts = [(px(float(x)), py(float(y))) for x, y in zip(xs, ys) if math.isfinite(float(y))]
        out.append('<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>'.format(col, " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)))
        if markers:
            out.extend(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="2.5" fill="{col}"/>' for a, b in pts)
        out.append(f'<text x="{MARGIN + 8}" y="{MARGIN + 16 + 14 * i}" fill="{col}">{escape(str(name))}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
