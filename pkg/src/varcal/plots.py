"""Static artifacts for variable-based calibration plots.

Two formats: a delimited grid dump and a hand-assembled SVG. Both are pure
string builders with fixed number formatting, so identical curves always give
identical bytes.
"""

from __future__ import annotations

import io
import csv

import numpy as np

from .loess import CurveEstimate

TABLE_COLUMNS = ["grid", "err_mean", "err_lo", "err_hi", "pred_mean", "pred_lo", "pred_hi"]
FORMATS = ("svg", "table")

_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 30, 60
_ERR_COLOR = "#1f77b4"
_PRED_COLOR = "#d62728"


def curves_table(error: CurveEstimate, predicted: CurveEstimate) -> str:
    if not np.array_equal(error.grid, predicted.grid):
        raise ValueError("curves must share the same grid")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    cols = [
        error.grid,
        error.mean, error.ci_low, error.ci_high,
        predicted.mean, predicted.ci_low, predicted.ci_high,
    ]
    for row in zip(*cols):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + step * 1e-9, step)]


def curves_svg(error: CurveEstimate, predicted: CurveEstimate, variable: str = "variable value") -> str:
    """Two curves with shaded 95% bands. Display is clipped to [0, 1]."""
    if not np.array_equal(error.grid, predicted.grid):
        raise ValueError("curves must share the same grid")
    grid = error.grid
    x_lo, x_hi = float(grid[0]), float(grid[-1])
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    clip = lambda a: np.clip(a, 0.0, 1.0)  # noqa: E731
    top = float(max(clip(error.ci_high).max(), clip(predicted.ci_high).max()))
    y_hi = min(1.0, max(0.05, top * 1.1))
    y_lo = 0.0
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(x):
        return _LEFT + (np.asarray(x) - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return _TOP + ph - (np.clip(np.asarray(y), y_lo, y_hi) - y_lo) / (y_hi - y_lo) * ph

    def polyline(ys):
        return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(grid), py(ys)))

    def band(lo, hi):
        pts = list(zip(px(grid), py(hi))) + list(zip(px(grid[::-1]), py(lo[::-1])))
        return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in pts)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<g font-family="sans-serif" font-size="12">',
    ]
    for curve, color, name in ((error, _ERR_COLOR, "actual error"), (predicted, _PRED_COLOR, "predicted error")):
        out.append(f'<polygon points="{band(curve.ci_low, curve.ci_high)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{polyline(curve.mean)}" fill="none" stroke="{color}" stroke-width="2"><title>{name}</title></polyline>')

    x0, y0 = _LEFT, _TOP + ph
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{_TOP}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for t in _nice_ticks(x_lo, x_hi):
        xp = float(px(t))
        out.append(f'<line x1="{_fmt(xp)}" y1="{y0}" x2="{_fmt(xp)}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(xp)}" y="{y0 + 18}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        yp = float(py(t))
        out.append(f'<line x1="{x0 - 5}" y1="{_fmt(yp)}" x2="{x0}" y2="{_fmt(yp)}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{_fmt(yp + 4)}" text-anchor="end">{100 * t:g}</text>')
    out.append(f'<text x="{_fmt(x0 + pw / 2)}" y="{_H - 15}" text-anchor="middle">{_escape(variable)}</text>')
    out.append(
        f'<text x="18" y="{_fmt(_TOP + ph / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_fmt(_TOP + ph / 2)})">error (%)</text>'
    )
    lx = x0 + pw - 130
    for j, (color, name) in enumerate(((_ERR_COLOR, "actual error"), (_PRED_COLOR, "predicted error"))):
        ly = _TOP + 10 + 16 * j
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{name}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_plot(error: CurveEstimate, predicted: CurveEstimate, fmt: str = "svg", xlabel: str = "variable value") -> str:
    if fmt == "svg":
        return curves_svg(error, predicted, xlabel)
    if fmt == "table":
        return curves_table(error, predicted)
    raise ValueError(f"unknown plot format {fmt!r}; choose from {', '.join(FORMATS)}")
