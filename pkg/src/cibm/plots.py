"""Minimal SVG line and scatter plots written as plain text."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 480, 320
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 30, 45


def _scale(lo: float, hi: float, a: float, b: float):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lambda v: a + (np.asarray(v, dtype=np.float64) - lo) * (b - a) / (hi - lo)


def _pts(xs, ys) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def _frame(title: str, xlabel: str, ylabel: str, xr, yr) -> list[str]:
    x0, x1, y0, y1 = LEFT, W - RIGHT, H - BOTTOM, TOP
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{H - 10}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.0f})">{escape(ylabel)}</text>',
        f'<text x="{x0}" y="{y0 + 14}" font-size="9">{xr[0]:.3g}</text>',
        f'<text x="{x1}" y="{y0 + 14}" text-anchor="end" font-size="9">{xr[1]:.3g}</text>',
        f'<text x="{x0 - 4}" y="{y0}" text-anchor="end" font-size="9">{yr[0]:.3g}</text>',
        f'<text x="{x0 - 4}" y="{y1 + 8}" text-anchor="end" font-size="9">{yr[1]:.3g}</text>',
    ]


def line_plot(path, xs, ys, std=None, title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    """Polyline with an optional shaded +/- std band."""
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    std = np.zeros_like(ys) if std is None else np.asarray(std, dtype=np.float64)
    lo, hi = ys - std, ys + std
    xr, yr = (xs.min(), xs.max()), (lo.min(), hi.max())
    sx, sy = _scale(*xr, LEFT, W - RIGHT), _scale(*yr, H - BOTTOM, TOP)
    parts = _frame(title, xlabel, ylabel, xr, yr)
    if np.any(std > 0):
        band = _pts(sx(xs), sy(hi)) + " " + _pts(sx(xs[::-1]), sy(lo[::-1]))
        parts.append(f'<polygon points="{band}" fill="steelblue" fill-opacity="0.25" stroke="none"/>')
    parts.append(f'<polyline points="{_pts(sx(xs), sy(ys))}" fill="none" stroke="steelblue" stroke-width="2"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8", newline="\n")


def scatter_plot(path, xs, ys, t=None, title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    """Points coloured from light to dark by ``t`` (e.g. training progress)."""
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    t = np.arange(len(xs)) if t is None else np.asarray(t, dtype=np.float64)
    span = t.max() - t.min() if len(t) and t.max() > t.min() else 1.0
    frac = (t - (t.min() if len(t) else 0.0)) / span
    xr, yr = (xs.min(), xs.max()), (ys.min(), ys.max())
    sx, sy = _scale(*xr, LEFT, W - RIGHT), _scale(*yr, H - BOTTOM, TOP)
    parts = _frame(title, xlabel, ylabel, xr, yr)
    for px, py, f in zip(sx(xs), sy(ys), frac):
        shade = int(round(220 - 200 * f))
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="rgb({shade},{shade},255)" stroke="navy" stroke-width="0.5"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8", newline="\n")
