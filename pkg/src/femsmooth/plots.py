"""Static log-log SVG line plots."""
import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _decades(lo, hi):
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    if a == b:
        b += 1
    return a, b


def loglog_svg(series, xlabel="dofs", ylabel="", title=None, width=640, height=480):
    """Render ``series`` (a list of ``(label, x, y)``) on log-log axes.

    Each series becomes one ``<polyline>``; decade gridlines are drawn as
    ``<line>`` elements.  Non-positive or non-finite points are dropped.
    """
    clean = []
    for label, x, y in series:
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
        clean.append((label, x[ok], y[ok]))
    xs = np.concatenate([c[1] for c in clean] + [np.empty(0)])
    ys = np.concatenate([c[2] for c in clean] + [np.empty(0)])
    if xs.size == 0:
        xs = ys = np.array([1.0])
    x0, x1 = _decades(xs.min(), xs.max())
    y0, y1 = _decades(ys.min(), ys.max())
    ml, mr, mt, mb = 70, 150, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (math.log10(x) - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (math.log10(y) - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">']
    if title:
        out.append(f'<text x="{ml}" y="18">{escape(title)}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for k in range(x0, x1 + 1):
        X = px(10.0 ** k)
        out.append(f'<line x1="{X:.2f}" y1="{mt}" x2="{X:.2f}" y2="{mt + ph}" stroke="#ccc"/>')
        out.append(f'<text x="{X:.2f}" y="{mt + ph + 16}" text-anchor="middle">1e{k}</text>')
    for k in range(y0, y1 + 1):
        Y = py(10.0 ** k)
        out.append(f'<line x1="{ml}" y1="{Y:.2f}" x2="{ml + pw}" y2="{Y:.2f}" stroke="#ccc"/>')
        out.append(f'<text x="{ml - 6}" y="{Y + 4:.2f}" text-anchor="end">1e{k}</text>')
    out.append(f'<text x="{ml + pw / 2:.0f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{mt + ph / 2:.0f}" transform="rotate(-90 14 {mt + ph / 2:.0f})" '
                   f'text-anchor="middle">{escape(ylabel)}</text>')
    for i, (label, x, y) in enumerate(clean):
        c = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5">'
                   f"<title>{escape(label)}</title></polyline>")
        ly = mt + 14 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
