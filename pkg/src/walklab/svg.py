"""Minimal self-contained SVG line charts.

Output is a pure function of the input: coordinates are printed with a fixed
number of decimals and no timestamps or random ids are emitted.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _label(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.1e}"
    return f"{v:.3g}"


def emit_svg(series, title="", xlabel="", ylabel="", log_y=False, log_x=False, width=640, height=400,
             comment=None):
    """Render ``series`` = [(name, [(x, y), ...]), ...] as an SVG document string.

    Points with non-finite coordinates, or non-positive ones on a log axis,
    are dropped.  A series with one point is drawn as a marker.
    """
    if not series or not any(pts for _, pts in series):
        raise ValueError("emit_svg needs at least one non-empty series")

    def tx(v):
        return math.log10(v) if log_x else v

    def ty(v):
        return math.log10(v) if log_y else v

    clean = []
    for name, pts in series:
        keep = []
        for x, y in pts:
            x, y = float(x), float(y)
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            if (log_x and x <= 0) or (log_y and y <= 0):
                continue
            keep.append((tx(x), ty(y)))
        clean.append((name, keep))
    allpts = [p for _, pts in clean for p in pts]
    if not allpts:
        raise ValueError("no plottable points")
    x0, x1 = min(p[0] for p in allpts), max(p[0] for p in allpts)
    y0, y1 = min(p[1] for p in allpts), max(p[1] for p in allpts)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    if y0 == y1:
        y0, y1 = y0 - 1, y1 + 1
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
    ]
    if comment:
        out.append(f"<!-- {escape(comment)} -->")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    out.append(f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>')
    out.append(
        f'<path d="M{left} {top} V{top + ph} H{left + pw}" fill="none" stroke="black" stroke-width="1"/>'
    )
    for v in _ticks(x0, x1):
        X = px(v)
        lab = _label(10**v if log_x else v)
        out.append(f'<line x1="{_fmt(X)}" y1="{top + ph}" x2="{_fmt(X)}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(X)}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{lab}</text>')
    for v in _ticks(y0, y1):
        Y = py(v)
        lab = _label(10**v if log_y else v)
        out.append(f'<line x1="{left - 5}" y1="{_fmt(Y)}" x2="{left}" y2="{_fmt(Y)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(Y + 4)}" text-anchor="end" font-size="11">{lab}</text>')
    out.append(
        f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle" font-size="12">'
        f"{escape(xlabel)}{' (log)' if log_x else ''}</text>"
    )
    out.append(
        f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {top + ph / 2:.2f})">{escape(ylabel)}{" (log)" if log_y else ""}</text>'
    )
    for i, (name, pts) in enumerate(clean):
        color = PALETTE[i % len(PALETTE)]
        if len(pts) == 1:
            X, Y = px(pts[0][0]), py(pts[0][1])
            out.append(f'<circle cx="{_fmt(X)}" cy="{_fmt(Y)}" r="3.5" fill="{color}"/>')
        elif pts:
            coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 150}" y1="{ly}" x2="{left + pw - 130}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 125}" y="{ly + 4}" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
