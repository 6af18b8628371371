"""Hand-emitted SVG line and bar charts; no plotting dependency.

Series elements carry ``data-series`` (and bars also ``data-bin`` /
``data-count``) attributes so emitted files can be checked mechanically.
"""

from __future__ import annotations

from xml.sax.saxutils import escape, quoteattr

import numpy as np

WIDTH, HEIGHT = 760, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 160, 40, 50

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_AXIS_STYLE = 'stroke="#333333" stroke-width="1"'
_GRID_STYLE = 'stroke="#dddddd" stroke-width="0.5"'


def _span(lo: float, hi: float) -> tuple[float, float]:
    if lo == hi:
        pad = 1.0 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _fmt(v: float) -> str:
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        ]
        if title:
            self.parts.append(
                f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
                f'font-size="15">{escape(title)}</text>'
            )

    def add(self, fragment: str) -> None:
        self.parts.append(fragment)

    def write(self, path) -> None:
        self.parts.append("</svg>")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(self.parts) + "\n")


def _axes(canvas: _Canvas, x_lo, x_hi, y_lo, y_hi, x_label, y_label):
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

    def sx(v):
        return x0 + (v - x_lo) / (x_hi - x_lo) * (x1 - x0)

    def sy(v):
        return y0 + (v - y_lo) / (y_hi - y_lo) * (y1 - y0)

    canvas.add(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" {_AXIS_STYLE}/>')
    canvas.add(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" {_AXIS_STYLE}/>')
    for v in np.linspace(x_lo, x_hi, 5):
        px = sx(v)
        canvas.add(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y1}" {_GRID_STYLE}/>')
        canvas.add(
            f'<text x="{px:.1f}" y="{y0 + 16}" text-anchor="middle">{_fmt(v)}</text>'
        )
    for v in np.linspace(y_lo, y_hi, 5):
        py = sy(v)
        canvas.add(f'<line x1="{x0}" y1="{py:.1f}" x2="{x1}" y2="{py:.1f}" {_GRID_STYLE}/>')
        canvas.add(
            f'<text x="{x0 - 6}" y="{py + 4:.1f}" text-anchor="end">{_fmt(v)}</text>'
        )
    if x_label:
        canvas.add(
            f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" '
            f'text-anchor="middle">{escape(x_label)}</text>'
        )
    if y_label:
        mid_y = (y0 + y1) / 2
        canvas.add(
            f'<text x="16" y="{mid_y:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {mid_y:.1f})">{escape(y_label)}</text>'
        )
    return sx, sy


def line_chart(
    series: list[tuple[str, list[float], list[float]]],
    path,
    title: str = "",
    x_label: str = "epoch",
    y_label: str = "value",
) -> None:
    """One polyline per (name, xs, ys) series over shared axes."""
    if not series:
        raise ValueError("no series to plot")
    for name, xs, ys in series:
        if len(xs) != len(ys) or not xs:
            raise ValueError(f"series {name!r} must have matching non-empty coordinates")
    all_x = [v for _, xs, _ in series for v in xs]
    all_y = [v for _, _, ys in series for v in ys]
    x_lo, x_hi = _span(min(all_x), max(all_x))
    y_lo, y_hi = _span(min(all_y), max(all_y))

    canvas = _Canvas(title)
    sx, sy = _axes(canvas, x_lo, x_hi, y_lo, y_hi, x_label, y_label)
    for i, (name, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        canvas.add(
            f"<polyline data-series={quoteattr(name)} fill=\"none\" "
            f'stroke="{color}" stroke-width="1.5" points="{points}"/>'
        )
        ly = MARGIN_T + 14 + i * 18
        lx = WIDTH - MARGIN_R + 14
        canvas.add(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        canvas.add(f'<text x="{lx + 28}" y="{ly}">{escape(name)}</text>')
    canvas.write(path)


def bar_chart(
    edges: np.ndarray,
    groups: list[tuple[str, np.ndarray]],
    path,
    title: str = "",
    x_label: str = "embedding",
    y_label: str = "count",
) -> None:
    """Grouped bars per bin; heights are proportional to counts."""
    edges = np.asarray(edges, dtype=np.float64)
    if edges.size < 2 or not groups:
        raise ValueError("need at least one bin and one group")
    n_bins = edges.size - 1
    for name, counts in groups:
        if len(counts) != n_bins:
            raise ValueError(f"group {name!r} has {len(counts)} counts for {n_bins} bins")
    x_lo, x_hi = float(edges[0]), float(edges[-1])
    if x_lo == x_hi:  # degenerate single-bin dump
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        edges = np.array([x_lo, x_hi])
    max_count = max(1, max(int(np.max(counts)) for _, counts in groups))

    canvas = _Canvas(title)
    sx, sy = _axes(canvas, x_lo, x_hi, 0.0, float(max_count), x_label, y_label)
    base_y = sy(0.0)
    for b in range(edges.size - 1):
        left, right = sx(float(edges[b])), sx(float(edges[b + 1]))
        slot = (right - left) / len(groups)
        for gi, (name, counts) in enumerate(groups):
            count = int(counts[b] if b < len(counts) else 0)
            top = sy(float(count))
            height = base_y - top
            color = PALETTE[gi % len(PALETTE)]
            canvas.add(
                f"<rect data-series={quoteattr(name)} data-bin=\"{b}\" "
                f'data-count="{count}" x="{left + gi * slot:.2f}" y="{top:.2f}" '
                f'width="{max(slot - 1, 0.5):.2f}" height="{height:.2f}" '
                f'fill="{color}" fill-opacity="0.75"/>'
            )
    for gi, (name, _) in enumerate(groups):
        color = PALETTE[gi % len(PALETTE)]
        ly = MARGIN_T + 14 + gi * 18
        lx = WIDTH - MARGIN_R + 14
        canvas.add(f'<rect x="{lx}" y="{ly - 12}" width="14" height="12" fill="{color}"/>')
        canvas.add(f'<text x="{lx + 20}" y="{ly - 2}">{escape(name)}</text>')
    canvas.write(path)
