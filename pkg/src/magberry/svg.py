"""Minimal SVG emission: line plots and a heat strip. No plotting dependency."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 640, 400
PAD_L, PAD_R, PAD_T, PAD_B = 70, 20, 40, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def _fmt(v):
    return f"{v:.4g}"


def _range(vals):
    finite = [v for v in vals if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if lo == hi:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(series, title="", xlabel="", ylabel="", logy=False):
    """``series``: list of ``(label, xs, ys)``. Returns the SVG document text."""
    tr = (lambda v: math.log10(v) if v > 0 else float("nan")) if logy else (lambda v: v)
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [tr(y) for _, _, ys in series for y in ys]
    x0, x1 = _range(xs_all)
    y0, y1 = _range(ys_all)
    pw, ph = W - PAD_L - PAD_R, H - PAD_T - PAD_B

    def px(x):
        return PAD_L + (x - x0) / (x1 - x0) * pw

    def py(y):
        return PAD_T + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<text x="{PAD_L + pw / 2}" y="{H - 12}" text-anchor="middle" font-size="12">'
           f'{escape(xlabel)}</text>',
           f'<text x="16" y="{PAD_T + ph / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 16 {PAD_T + ph / 2})">'
           f'{escape(ylabel + (" (log10)" if logy else ""))}</text>']
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{px(xv):.1f}" y="{PAD_T + ph + 16}" text-anchor="middle" '
                   f'font-size="10">{_fmt(xv)}</text>')
        out.append(f'<text x="{PAD_L - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" '
                   f'font-size="10">{_fmt(yv)}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(tr(y)):.2f}" for x, y in zip(xs, ys)
                       if math.isfinite(tr(y)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{PAD_L + 8}" y="{PAD_T + 14 + 14 * i}" font-size="11" '
                   f'fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _color(t):
    t = min(max(t, 0.0), 1.0)
    r = int(255 * t)
    b = int(255 * (1 - t))
    return f"#{r:02x}40{b:02x}"


def heat_strip(values, title="", label=""):
    """Heat map of a 2D array (rows drawn left to right, columns bottom to top)."""
    rows = len(values)
    cols = len(values[0]) if rows else 0
    flat = [v for row in values for v in row]
    lo, hi = (min(flat), max(flat)) if flat else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    pw, ph = W - PAD_L - PAD_R, H - PAD_T - PAD_B
    cw, chh = pw / max(rows, 1), ph / max(cols, 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>']
    for i in range(rows):
        for j in range(cols):
            v = values[i][j]
            x = PAD_L + i * cw
            y = PAD_T + (cols - 1 - j) * chh
            out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{chh:.2f}" '
                       f'fill="{_color((v - lo) / span)}"><title>{_fmt(v)}</title></rect>')
    out.append(f'<text x="{PAD_L}" y="{H - 12}" font-size="11">{escape(label)} range '
               f'[{_fmt(lo)}, {_fmt(hi)}]</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
