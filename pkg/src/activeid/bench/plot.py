"""Deterministic SVG line charts of error percentiles (log-log axes)."""
from __future__ import annotations

import math
from pathlib import Path

from ..errors import ConfigError

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 72, 132, 20, 52
COLORS = {
    "active": "#1f77b4",
    "oracle": "#2ca02c",
    "iso_noise": "#d62728",
    "opt_noise": "#9467bd",
}
FALLBACK_COLORS = ("#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
FLOOR = 1e-16


def _log(v: float) -> float:
    return math.log10(max(v, FLOOR))


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _decades(lo: float, hi: float):
    a, b = math.floor(lo), math.ceil(hi)
    if a == b:
        b = a + 1
    return a, b


def render_svg(report) -> str:
    series = {k: v for k, v in sorted(report.series.items()) if v}
    if not series:
        raise ConfigError("report has no data to plot")
    xs = [_log(c.T) for pts in series.values() for c in pts]
    ys = [_log(v) for pts in series.values() for c in pts for v in (c.p10, c.median, c.p90)]
    x0, x1 = _decades(min(xs), max(xs))
    y0, y1 = _decades(min(ys), max(ys))
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(lx):
        return LEFT + (lx - x0) / (x1 - x0) * pw

    def py(ly):
        return TOP + (y1 - ly) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for e in range(x0, x1 + 1):
        x = _fmt(px(e))
        out.append(f'<line x1="{x}" y1="{TOP + ph}" x2="{x}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{TOP + ph + 18}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        y = _fmt(py(e))
        out.append(f'<line x1="{LEFT - 5}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/>')
        out.append(f'<line x1="{LEFT}" y1="{y}" x2="{LEFT + pw}" y2="{y}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">'
                   f'1e{e}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'time steps T</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">spectral error</text>')
    extra = iter(FALLBACK_COLORS)
    for i, (name, pts) in enumerate(series.items()):
        color = COLORS.get(name) or next(extra, "#000000")
        upper = [f"{_fmt(px(_log(c.T)))},{_fmt(py(_log(c.p90)))}" for c in pts]
        lower = [f"{_fmt(px(_log(c.T)))},{_fmt(py(_log(c.p10)))}" for c in reversed(pts)]
        med = [f"{_fmt(px(_log(c.T)))},{_fmt(py(_log(c.median)))}" for c in pts]
        out.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                   f'fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{" ".join(med)}" fill="none" stroke="{color}" '
                   f'stroke-width="2"/>')
        ly = TOP + 10 + 18 * i
        lx = LEFT + pw + 12
        out.append(f'<rect x="{lx}" y="{ly - 5}" width="14" height="10" fill="{color}"/>')
        out.append(f'<text x="{lx + 20}" y="{ly}" dominant-baseline="middle">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(report, path) -> Path:
    """Write the median / 10-90% band chart of ``report`` to ``path``."""
    svg = render_svg(report)
    path = Path(path)
    path.write_text(svg)
    return path
