"""Tiny dependency-free SVG line plots for the experiment outputs."""

from __future__ import annotations

import math


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + k * step for k in range(n)]


def polyline_plot(series, title: str = "", xlabel: str = "", ylabel: str = "",
                  ylog: bool = False, width: int = 640, height: int = 480) -> str:
    """Render (label, xs, ys, color) series as an SVG document string."""
    pad = 56
    xs_all = [x for _, xs, _, _ in series for x in xs]
    ys_all = [y for _, _, ys, _ in series for y in ys]
    if ylog:
        ys_all = [math.log10(y) for y in ys_all if y > 0.0]
    if not xs_all or not ys_all:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        if ylog:
            y = math.log10(max(y, 10 ** y0))
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2:.0f}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
    ]
    for xt in _ticks(x0, x1):
        parts.append(f'<line x1="{px(xt):.1f}" y1="{height-pad}" x2="{px(xt):.1f}" '
                     f'y2="{height-pad+5}" stroke="black"/>')
        parts.append(f'<text x="{px(xt):.1f}" y="{height-pad+18}" '
                     f'text-anchor="middle" font-size="10">{xt:.3g}</text>')
    for yt in _ticks(y0, y1):
        yy = height - pad - (yt - y0) / (y1 - y0) * (height - 2 * pad)
        label = f"1e{yt:.1f}" if ylog else f"{yt:.3g}"
        parts.append(f'<line x1="{pad-5}" y1="{yy:.1f}" x2="{pad}" y2="{yy:.1f}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{pad-8}" y="{yy+3:.1f}" text-anchor="end" '
                     f'font-size="10">{label}</text>')
    parts.append(f'<rect x="{pad}" y="{pad}" width="{width-2*pad}" '
                 f'height="{height-2*pad}" fill="none" stroke="black"/>')
    parts.append(f'<text x="{width/2:.0f}" y="{height-12}" text-anchor="middle" '
                 f'font-size="12">{xlabel}</text>')
    parts.append(f'<text x="16" y="{height/2:.0f}" text-anchor="middle" '
                 f'font-size="12" transform="rotate(-90 16 {height/2:.0f})">'
                 f'{ylabel}</text>')
    for label, xs, ys, color in series:
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys)
                       if not ylog or y > 0.0)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts)
