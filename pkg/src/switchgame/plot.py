"""Minimal SVG line plots of value functions (no plotting dependency)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .solver import ValueField

# pair order 11, 12, 21, 22 follows black, red, green, blue
COLORS = ["black", "red", "green", "blue", "orange", "purple", "brown", "magenta", "teal",
          "olive", "navy", "gray", "gold", "crimson", "darkcyan", "indigo"]


def _ticks(lo: float, hi: float, n: int = 6) -> np.ndarray:
    span = hi - lo
    raw = span / max(n - 1, 1)
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    return np.arange(np.ceil(lo / step) * step, hi + step * 1e-9, step)


def value_svg(V: ValueField, title: str = "Value functions", width: int = 720,
              height: int = 480, max_points: int = 800) -> str:
    x = V.grid.nodes
    q = V.q
    stride = max(1, x.size // max_points)
    idx = np.unique(np.r_[np.arange(0, x.size, stride), x.size - 1])
    ys = V.values.reshape(q * q, -1)
    ylo, yhi = float(ys.min()), float(ys.max())
    if yhi == ylo:
        ylo, yhi = ylo - 1, yhi + 1
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    ml, mr, mt, mb = 70, 110, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x[0]) / (x[-1] - x[0]) * pw

    def sy(v):
        return mt + (yhi - v) / (yhi - ylo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml + pw / 2:.1f}" y="{mt - 15}" text-anchor="middle" font-size="14">'
           f'{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for t in _ticks(x[0], x[-1]):
        out.append(f'<line x1="{sx(t):.1f}" y1="{mt + ph}" x2="{sx(t):.1f}" y2="{mt + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<line x1="{ml - 5}" y1="{sy(t):.1f}" x2="{ml}" y2="{sy(t):.1f}" stroke="#444"/>')
        out.append(f'<text x="{ml - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">x</text>')
    for p in range(q * q):
        i, j = divmod(p, q)
        color = COLORS[p % len(COLORS)]
        pts = " ".join(f"{sx(x[k]):.2f},{sy(ys[p, k]):.2f}" for k in idx)
        out.append(f'<polyline class="value-curve" data-pair="{i + 1}{j + 1}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + 15 + 18 * p
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 35}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 40}" y="{ly + 4}">V{i + 1}{j + 1}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
