"""Minimal SVG line/loop plots, no external plotting stack.

Output is deterministic for fixed inputs: fixed palette, %.6g numbers,
no timestamps. Long series are decimated by striding before drawing so
the files stay small.
"""

from __future__ import annotations

import math

import numpy as np

PALETTE = ("#1f6fb2", "#d45500", "#2e8b57", "#8b2e8b", "#666666", "#b22222")
MAX_POINTS = 4000


def _nice_ticks(lo: float, hi: float, target: int = 6):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0]
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def plot(
    path: str,
    series: list,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 880,
    height: int = 460,
) -> None:
    """Write one SVG figure.

    Each series is a dict with ``x``, ``y`` arrays and an optional
    ``label``. Works for time traces and for loop plots alike; the
    path is drawn in sample order.
    """
    if not series:
        raise ValueError("need at least one series")
    ml, mr, mt, mb = 64, 16, 34 if title else 16, 46

    xs = [np.asarray(s["x"], dtype=float) for s in series]
    ys = [np.asarray(s["y"], dtype=float) for s in series]
    x_lo = min(float(np.min(a)) for a in xs)
    x_hi = max(float(np.max(a)) for a in xs)
    y_lo = min(float(np.min(a)) for a in ys)
    y_hi = max(float(np.max(a)) for a in ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    iw = width - ml - mr
    ih = height - mt - mb

    def px(v):
        return ml + (v - x_lo) / (x_hi - x_lo) * iw

    def py(v):
        return mt + (y_hi - v) / (y_hi - y_lo) * ih

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for tv in _nice_ticks(x_lo, x_hi):
        X = px(tv)
        out.append(
            f'<line x1="{X:.1f}" y1="{mt}" x2="{X:.1f}" y2="{mt + ih}" stroke="#e0e0e0"/>'
        )
        out.append(
            f'<text x="{X:.1f}" y="{mt + ih + 16}" text-anchor="middle">{_fmt(tv)}</text>'
        )
    for tv in _nice_ticks(y_lo, y_hi):
        Y = py(tv)
        out.append(
            f'<line x1="{ml}" y1="{Y:.1f}" x2="{ml + iw}" y2="{Y:.1f}" stroke="#e0e0e0"/>'
        )
        out.append(
            f'<text x="{ml - 6}" y="{Y + 4:.1f}" text-anchor="end">{_fmt(tv)}</text>'
        )
    out.append(
        f'<rect x="{ml}" y="{mt}" width="{iw}" height="{ih}" fill="none" stroke="#333"/>'
    )

    for i, (sx, sy) in enumerate(zip(xs, ys)):
        stride = max(1, len(sx) // MAX_POINTS)
        sx, sy = sx[::stride], sy[::stride]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(sx, sy))
        color = PALETTE[i % len(PALETTE)]
        dash = "" if i < len(PALETTE) else ' stroke-dasharray="5,3"'
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.3"{dash}/>'
        )

    labels = [s.get("label") for s in series if s.get("label")]
    if labels:
        ly = mt + 14
        for i, s in enumerate(series):
            if not s.get("label"):
                continue
            color = PALETTE[i % len(PALETTE)]
            out.append(
                f'<line x1="{ml + iw - 150}" y1="{ly - 4}" x2="{ml + iw - 126}" '
                f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
            )
            out.append(f'<text x="{ml + iw - 120}" y="{ly}">{s["label"]}</text>')
            ly += 16

    if title:
        out.append(
            f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{ml + iw / 2:.0f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        out.append(
            f'<text x="16" y="{mt + ih / 2:.0f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {mt + ih / 2:.0f})">{ylabel}</text>'
        )
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
