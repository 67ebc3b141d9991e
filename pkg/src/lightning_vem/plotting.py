"""Self-contained SVG log-log convergence charts (no plotting dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 480
MARGIN = dict(left=80, right=150, top=40, bottom=60)
COLORS = {"e_L2": "#1f77b4", "e_H1": "#d62728"}


def _decades(lo: float, hi: float):
    return range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)


def convergence_svg(records, title: str = "") -> str:
    """e_L2 and e_H1 against h_max on log-log axes with slope-1 and slope-2 guides."""
    h = [r.h_max for r in records]
    series = {"e_L2": [r.e_L2 for r in records], "e_H1": [r.e_H1 for r in records]}
    hmin, hmax = min(h), max(h)
    # guide lines anchored a little below the last data point of each series
    guides = []
    for slope, anchor in ((1, series["e_H1"][-1]), (2, series["e_L2"][-1])):
        ya = anchor / 3.0
        guides.append((slope, ya, ya * (hmax / hmin) ** slope))
    errs = [e for v in series.values() for e in v if e > 0] + [g[2] for g in guides]
    xd = list(_decades(min(h), max(h)))
    yd = list(_decades(min(errs), max(errs)))
    x0, x1 = xd[0], max(xd[-1], xd[0] + 1)
    y0, y1 = yd[0], max(yd[-1], yd[0] + 1)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (math.log10(v) - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN["top"] + (y1 - math.log10(v)) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect class="frame" x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for d in range(x0, x1 + 1):
        x = px(10.0**d)
        out.append(f'<path class="tick" d="M{x:.2f},{MARGIN["top"] + ph} v6" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{MARGIN["top"] + ph + 22}" text-anchor="middle" font-size="12">1e{d}</text>')
    for d in range(y0, y1 + 1):
        y = py(10.0**d)
        out.append(f'<path class="tick" d="M{MARGIN["left"]},{y:.2f} h-6" stroke="black"/>')
        out.append(f'<text x="{MARGIN["left"] - 10}" y="{y + 4:.2f}" text-anchor="end" font-size="12">1e{d}</text>')
    out.append(
        f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="14">h_max</text>'
    )
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>')

    for slope, ya, yb in guides:
        out.append(
            f'<line class="guide" x1="{px(hmin):.2f}" y1="{py(ya):.2f}" x2="{px(hmax):.2f}" y2="{py(yb):.2f}" '
            'stroke="gray" stroke-dasharray="6,4"/>'
        )
        out.append(
            f'<text x="{px(hmax) + 4:.2f}" y="{py(yb):.2f}" font-size="11" fill="gray">slope {slope}</text>'
        )
    for k, (name, vals) in enumerate(series.items()):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(h, vals))
        out.append(f'<polyline class="data" points="{pts}" fill="none" stroke="{COLORS[name]}" stroke-width="2"/>')
        for a, b in zip(h, vals):
            out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{COLORS[name]}"/>')
        ly = MARGIN["top"] + 20 + 20 * k
        lx = WIDTH - MARGIN["right"] + 15
        out.append(f'<text x="{lx}" y="{ly}" font-size="13" fill="{COLORS[name]}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
