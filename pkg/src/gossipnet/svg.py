"""Self-contained SVG line charts with a log-scale y-axis."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import InvalidParameter

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")
WIDTH, HEIGHT = 720, 440
MARGIN = {"left": 72, "right": 180, "top": 36, "bottom": 52}


def _floor_positive(arrays):
    pos = [a[a > 0] for a in arrays]
    pos = [p for p in pos if p.size]
    return float(min(p.min() for p in pos)) if pos else 1.0


def svg_chart(series_set, bounds=None, title="", xlabel="time", ylabel="dual gap"):
    """SVG document for ``{label: (times, values)}`` curves plus dashed ``bounds``.

    Non-positive values are clamped to the smallest positive value on the chart.
    """
    bounds = dict(bounds or {})
    if not series_set:
        raise InvalidParameter("no series to plot")
    curves = [(lab, np.asarray(t, float), np.asarray(v, float), False) for lab, (t, v) in series_set.items()]
    curves += [(lab, np.asarray(t, float), np.asarray(v, float), True) for lab, (t, v) in bounds.items()]
    for lab, t, v, _ in curves:
        if t.size == 0 or t.shape != v.shape:
            raise InvalidParameter(f"series {lab!r} is empty or misaligned")
    floor = _floor_positive([v[np.isfinite(v)] for _, _, v, _ in curves])
    logs = [np.log10(np.clip(np.where(np.isfinite(v), v, floor), floor, None)) for _, _, v, _ in curves]
    ymin = math.floor(min(l.min() for l in logs))
    ymax = math.ceil(max(l.max() for l in logs))
    if ymax == ymin:
        ymin, ymax = ymin - 1, ymax + 1
    xmin = min(float(t.min()) for _, t, _, _ in curves)
    xmax = max(float(t.max()) for _, t, _, _ in curves)
    if xmax == xmin:
        xmax = xmin + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(t):
        return MARGIN["left"] + (t - xmin) / (xmax - xmin) * pw

    def py(y):
        return MARGIN["top"] + (ymax - y) / (ymax - ymin) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    step = max(1, (ymax - ymin) // 10)
    for e in range(ymin, ymax + 1, step):
        y = py(e)
        out.append(f'<line x1="{MARGIN["left"]}" y1="{y:.2f}" x2="{MARGIN["left"] + pw}" '
                   f'y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    for q in range(6):
        t = xmin + q * (xmax - xmin) / 5
        x = px(t)
        out.append(f'<text x="{x:.2f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{t:.4g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2})">{escape(ylabel)} (log10)</text>')
    if title:
        out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="22" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    for k, ((lab, t, _, dashed), ly) in enumerate(zip(curves, logs)):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(t, ly))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
        yl = MARGIN["top"] + 14 + 18 * k
        xl = MARGIN["left"] + pw + 12
        out.append(f'<line x1="{xl}" y1="{yl - 4}" x2="{xl + 24}" y2="{yl - 4}" stroke="{color}" '
                   f'stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{xl + 30}" y="{yl}">{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(series_set, bounds, path, **kwargs):
    """Write :func:`svg_chart` output to ``path``."""
    doc = svg_chart(series_set, bounds, **kwargs)
    with open(path, "w") as fh:
        fh.write(doc)
    return path


__all__ = ["svg_chart", "emit_svg"]
