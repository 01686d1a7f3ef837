"""Tiny deterministic SVG writers (scatter plots and trace grids).

Hand-rolled rather than a plotting library so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import numpy as np

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _f(v) -> str:
    return f"{float(v):.3f}"


def _fit(values, lo, hi):
    values = np.asarray(values, dtype=np.float64)
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin
    if span == 0.0:
        span = 1.0
    return lo + (values - vmin) / span * (hi - lo)


def scatter_svg(u, v, labels, title="") -> str:
    """Colored scatter plot; one color per distinct label, with a legend."""
    width, height, margin = 640.0, 480.0, 48.0
    xs = _fit(u, margin, width - margin)
    ys = height - _fit(v, margin, height - margin)  # SVG y grows downward
    classes = sorted({str(lb) for lb in labels})
    color = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(classes)}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(width)}" height="{int(height)}" '
        f'viewBox="0 0 {int(width)} {int(height)}">',
        f'<rect x="0" y="0" width="{int(width)}" height="{int(height)}" fill="white"/>',
        f'<rect x="{_f(margin)}" y="{_f(margin)}" width="{_f(width - 2 * margin)}" '
        f'height="{_f(height - 2 * margin)}" fill="none" stroke="#444444"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_f(width / 2)}" y="28" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{title}</text>'
        )
    for x, y, lb in zip(xs, ys, labels):
        parts.append(
            f'<circle cx="{_f(x)}" cy="{_f(y)}" r="4" fill="{color[str(lb)]}" '
            f'fill-opacity="0.75"/>'
        )
    for i, c in enumerate(classes):
        ly = margin + 14 + 18 * i
        parts.append(
            f'<circle cx="{_f(width - margin - 110)}" cy="{_f(ly - 4)}" r="5" fill="{color[c]}"/>'
        )
        parts.append(
            f'<text x="{_f(width - margin - 98)}" y="{_f(ly)}" '
            f'font-family="sans-serif" font-size="12">{c}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def trace_grid_svg(groups, columns=6, cell=120.0) -> str:
    """Grid of drawn traces; each group is (label, [(points, color), ...]).

    points is an (n, >=2) array whose first two columns are x, y.
    """
    n = len(groups)
    columns = max(1, min(columns, n)) if n else 1
    rows = (n + columns - 1) // columns if n else 1
    width = columns * cell
    height = rows * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(width)}" height="{int(height)}" '
        f'viewBox="0 0 {int(width)} {int(height)}">',
        f'<rect x="0" y="0" width="{int(width)}" height="{int(height)}" fill="white"/>',
    ]
    pad = 12.0
    for i, (label, layers) in enumerate(groups):
        cx = (i % columns) * cell
        cy = (i // columns) * cell
        all_xy = np.concatenate([np.asarray(p)[:, :2] for p, _ in layers], axis=0)
        lo = all_xy.min(axis=0)
        hi = all_xy.max(axis=0)
        span = np.maximum(hi - lo, 1e-12).max()
        for points, color in layers:
            xy = (np.asarray(points)[:, :2] - lo) / span
            px = cx + pad + xy[:, 0] * (cell - 2 * pad)
            py = cy + (cell - pad) - xy[:, 1] * (cell - 2 * pad)
            coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(px, py))
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        parts.append(
            f'<text x="{_f(cx + 6)}" y="{_f(cy + 14)}" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
