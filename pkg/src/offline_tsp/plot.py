"""Static SVG line charts of true tour length against annealing iteration."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

from offline_tsp.errors import ValidationError

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=20, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e")


def _series(trajectory):
    pts = [(s.iteration, s.true_length) for s in trajectory if not math.isnan(s.true_length)]
    if not pts:
        raise ValidationError("trajectory has no true_length values (oracle logging was off)")
    return pts


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(trajectories, labels) -> str:
    """One polyline per trajectory; a single-sample trajectory becomes a circle marker."""
    series = [_series(t) for t in trajectories]
    xs = [x for s in series for x, _ in s]
    ys = [y for s in series for _, y in s]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"] + ph}" x2="{MARGIN["left"] + pw}" '
        f'y2="{MARGIN["top"] + ph}" stroke="black"/>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"]}" x2="{MARGIN["left"]}" '
        f'y2="{MARGIN["top"] + ph}" stroke="black"/>',
    ]
    for value, anchor in ((x0, "start"), (x1, "end")):
        out.append(
            f'<text x="{_fmt(sx(value))}" y="{MARGIN["top"] + ph + 16}" font-size="11" '
            f'text-anchor="{anchor}">{value:g}</text>'
        )
    for value in (y0, y1):
        out.append(
            f'<text x="{MARGIN["left"] - 6}" y="{_fmt(sy(value) + 4)}" font-size="11" '
            f'text-anchor="end">{value:.3f}</text>'
        )
    out.append(
        f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 10}" font-size="13" '
        'text-anchor="middle">iteration</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2})">true tour length</text>'
    )
    for k, (pts, label) in enumerate(zip(series, labels)):
        color = COLORS[k % len(COLORS)]
        if len(pts) == 1:
            x, y = pts[0]
            out.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="4" fill="{color}"/>')
        else:
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = MARGIN["top"] + 14 + 16 * k
        lx = MARGIN["left"] + pw - 150
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}" font-size="12">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
