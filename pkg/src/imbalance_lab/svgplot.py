"""Minimal self-contained SVG line plots (no external assets).

Each plot holds any number of series; a series can carry a shaded band
(mean +- spread) and a dashed overlay curve (the analytic prediction).
Output is deterministic for identical inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["Series", "line_plot"]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]
    band_low: list[float] | None = None
    band_high: list[float] | None = None
    overlay: list[float] | None = None  # dashed companion curve
    color: str | None = None


@dataclass
class _Axis:
    lo: float
    hi: float
    log: bool

    def place(self, v: float) -> float:
        a, b, x = (self.lo, self.hi, v)
        if self.log:
            a, b, x = math.log10(a), math.log10(b), math.log10(max(v, 1e-300))
        if b <= a:
            return 0.5
        return (x - a) / (b - a)

    def ticks(self, n: int = 5) -> list[float]:
        if self.log:
            lo, hi = math.floor(math.log10(self.lo)), math.ceil(math.log10(self.hi))
            return [10.0**e for e in range(int(lo), int(hi) + 1)]
        if self.hi <= self.lo:
            return [self.lo]
        step = (self.hi - self.lo) / (n - 1)
        return [self.lo + i * step for i in range(n)]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_plot(
    path: str | Path,
    series: list[Series],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log_x: bool = False,
    width: int = 720,
    height: int = 480,
) -> None:
    """Write one SVG file with the given series."""
    xs = [v for s in series for v in s.x]
    ys = [v for s in series for v in (list(s.y) + list(s.band_low or []) + list(s.band_high or []) + list(s.overlay or [])) if math.isfinite(v)]
    if not xs or not ys:
        raise ValueError("nothing to plot")
    x_axis = _Axis(min(xs), max(xs), log_x)
    y_lo, y_hi = min(ys), max(ys)
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_axis = _Axis(y_lo - pad, y_hi + pad, False)

    left, right, top, bottom = 64, 16, 36, 48
    pw, ph = width - left - right, height - top - bottom

    def px(v: float) -> float:
        return left + x_axis.place(v) * pw

    def py(v: float) -> float:
        return top + (1.0 - y_axis.place(v)) * ph

    out: list[str] = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">'
    )
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    out.append(
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>'
    )
    if title:
        out.append(
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>'
        )
    for t in x_axis.ticks():
        if not (x_axis.lo <= t <= x_axis.hi):
            continue
        x = px(t)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in y_axis.ticks():
        y = py(t)
        out.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#444"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    if xlabel:
        out.append(
            f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>'
        )
    if ylabel:
        out.append(
            f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2:.1f})">{ylabel}</text>'
        )

    def _clip(v: float) -> float:
        return min(max(v, y_axis.lo), y_axis.hi)

    for i, s in enumerate(series):
        color = s.color or _COLORS[i % len(_COLORS)]
        order = sorted(range(len(s.x)), key=lambda j: s.x[j])
        if s.band_low is not None and s.band_high is not None:
            upper = " ".join(
                f"{px(s.x[j]):.2f},{py(_clip(s.band_high[j])):.2f}" for j in order
            )
            lower = " ".join(
                f"{px(s.x[j]):.2f},{py(_clip(s.band_low[j])):.2f}" for j in reversed(order)
            )
            out.append(f'<polygon points="{upper} {lower}" fill="{color}" opacity="0.15"/>')
        line = " ".join(
            f"{px(s.x[j]):.2f},{py(s.y[j]):.2f}" for j in order if math.isfinite(s.y[j])
        )
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if s.overlay is not None:
            dash = " ".join(
                f"{px(s.x[j]):.2f},{py(s.overlay[j]):.2f}"
                for j in order
                if math.isfinite(s.overlay[j])
            )
            out.append(
                f'<polyline points="{dash}" fill="none" stroke="{color}" '
                f'stroke-width="1.2" stroke-dasharray="5,3"/>'
            )
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 150}" y1="{ly - 4}" x2="{left + pw - 128}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 124}" y="{ly}">{s.label}</text>')

    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
