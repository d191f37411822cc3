"""Deterministic unit-visualization layouts: square grid, circle packing,
and grouped bands.

Circle packing runs on the compiled kernel when the extension built,
falling back to the pure-Python twin; both produce identical positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

try:
    from . import _packing as _kernel
except ImportError:  # pragma: no cover - depends on build environment
    from . import _packing_py as _kernel

PACKING_BACKEND: str = _kernel.BACKEND

Point = tuple[float, float]


@dataclass(frozen=True)
class Canvas:
    width: float = 640.0
    height: float = 480.0
    margin: float = 24.0

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0

    @property
    def avail_w(self) -> float:
        return max(1.0, self.width - 2.0 * self.margin)

    @property
    def avail_h(self) -> float:
        return max(1.0, self.height - 2.0 * self.margin)


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0


def grid_shape(n: int) -> tuple[int, int]:
    """Columns and rows of the square-form grid: ceil(sqrt(n)) columns."""
    if n <= 0:
        return (0, 0)
    cols = math.isqrt(n)
    if cols * cols < n:
        cols += 1
    rows = (n + cols - 1) // cols
    return cols, rows


def layout_grid_rect(n: int, rect: Rect, unit_radius: float) -> tuple[list[Point], float]:
    """Row-major grid centered in a rectangle; gap is radius/2.

    The radius shrinks automatically when the grid would overflow, so the
    layout never errors.
    """
    if n <= 0:
        return [], unit_radius
    cols, rows = grid_shape(n)
    # block extent in radius units: 2*cols + (cols-1)/2
    def extent(k: int) -> float:
        return 2.0 * k + 0.5 * (k - 1)

    r = min(unit_radius, rect.w / extent(cols), rect.h / extent(rows))
    pitch = 2.5 * r
    block_w = extent(cols) * r
    block_h = extent(rows) * r
    x0 = rect.cx - block_w / 2.0 + r
    y0 = rect.cy - block_h / 2.0 + r
    points = [
        (x0 + (i % cols) * pitch, y0 + (i // cols) * pitch) for i in range(n)
    ]
    return points, r


def layout_grid(n: int, canvas: Canvas, unit_radius: float) -> tuple[list[Point], float]:
    """Square-form grid centered on the canvas."""
    rect = Rect(canvas.margin, canvas.margin, canvas.avail_w, canvas.avail_h)
    return layout_grid_rect(n, rect, unit_radius)


def _fit_into_rect(
    positions: list[Point], radii: list[float], rect: Rect
) -> tuple[list[Point], list[float]]:
    """Translate a packing to the rect center, shrinking uniformly to fit."""
    if not positions:
        return [], []
    min_x = min(p[0] - r for p, r in zip(positions, radii))
    max_x = max(p[0] + r for p, r in zip(positions, radii))
    min_y = min(p[1] - r for p, r in zip(positions, radii))
    max_y = max(p[1] + r for p, r in zip(positions, radii))
    width = max(max_x - min_x, 1e-9)
    height = max(max_y - min_y, 1e-9)
    scale = min(1.0, rect.w / width, rect.h / height)
    bcx = (min_x + max_x) / 2.0
    bcy = (min_y + max_y) / 2.0
    out_pos = [
        (rect.cx + (x - bcx) * scale, rect.cy + (y - bcy) * scale)
        for x, y in positions
    ]
    out_radii = [r * scale for r in radii]
    return out_pos, out_radii


def layout_pack_rect(radii: Sequence[float], rect: Rect) -> tuple[list[Point], list[float]]:
    """Deterministic circle packing fitted into a rectangle.

    Placement order is radius-descending with ties by position in the input
    (callers pass units in row order, so ties resolve by row id).
    """
    n = len(radii)
    if n == 0:
        return [], []
    order = sorted(range(n), key=lambda i: (-radii[i], i))
    packed = _kernel.pack_circles([float(radii[i]) for i in order])
    positions: list[Optional[Point]] = [None] * n
    for slot, i in enumerate(order):
        positions[i] = packed[slot]
    return _fit_into_rect(positions, [float(r) for r in radii], rect)


def layout_pack(radii: Sequence[float], canvas: Canvas) -> tuple[list[Point], list[float]]:
    rect = Rect(canvas.margin, canvas.margin, canvas.avail_w, canvas.avail_h)
    return layout_pack_rect(radii, rect)


@dataclass(frozen=True)
class Band:
    label: str
    start: float  # pixel extent along the axis
    end: float


def split_bands(total_start: float, total_extent: float, labels: Sequence[str]) -> list[Band]:
    """Equal-width bands partitioning the extent exactly."""
    k = len(labels)
    out = []
    for i, label in enumerate(labels):
        start = total_start + total_extent * i / k
        end = total_start + total_extent * (i + 1) / k
        out.append(Band(label, start, end))
    return out


def layout_grouped(
    groups: Sequence[tuple[str, Sequence[int]]],
    axis: str,
    canvas: Canvas,
    unit_radius: float,
    sizes: Optional[dict[int, float]] = None,
) -> tuple[dict[int, Point], dict[int, float], list[Band]]:
    """Equal-width bands along one axis with a per-band grid (or packing
    when per-unit sizes are given). Returns positions and radii keyed by
    unit id, plus the band extents."""
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    if not groups:
        return {}, {}, []
    labels = [g[0] for g in groups]
    if axis == "x":
        bands = split_bands(canvas.margin, canvas.avail_w, labels)
    else:
        bands = split_bands(canvas.margin, canvas.avail_h, labels)
    positions: dict[int, Point] = {}
    radii: dict[int, float] = {}
    for band, (_, members) in zip(bands, groups):
        if axis == "x":
            rect = Rect(band.start, canvas.margin, band.end - band.start, canvas.avail_h)
        else:
            rect = Rect(canvas.margin, band.start, canvas.avail_w, band.end - band.start)
        _fill_cell(list(members), rect, unit_radius, sizes, positions, radii)
    return positions, radii, bands


def layout_matrix(
    x_groups: Sequence[str],
    y_groups: Sequence[str],
    members: dict[tuple[str, str], Sequence[int]],
    canvas: Canvas,
    unit_radius: float,
    sizes: Optional[dict[int, float]] = None,
) -> tuple[dict[int, Point], dict[int, float], list[Band], list[Band]]:
    """Cell matrix when both axes carry bands."""
    x_bands = split_bands(canvas.margin, canvas.avail_w, list(x_groups))
    y_bands = split_bands(canvas.margin, canvas.avail_h, list(y_groups))
    positions: dict[int, Point] = {}
    radii: dict[int, float] = {}
    for xb in x_bands:
        for yb in y_bands:
            cell_members = list(members.get((xb.label, yb.label), ()))
            if not cell_members:
                continue
            rect = Rect(xb.start, yb.start, xb.end - xb.start, yb.end - yb.start)
            _fill_cell(cell_members, rect, unit_radius, sizes, positions, radii)
    return positions, radii, x_bands, y_bands


def _fill_cell(
    members: list[int],
    rect: Rect,
    unit_radius: float,
    sizes: Optional[dict[int, float]],
    positions: dict[int, Point],
    radii: dict[int, float],
) -> None:
    pad = min(rect.w, rect.h) * 0.08
    inner = Rect(rect.x + pad, rect.y + pad, max(rect.w - 2 * pad, 1.0), max(rect.h - 2 * pad, 1.0))
    if sizes:
        cell_radii = [sizes.get(m, unit_radius) for m in members]
        pos, rad = layout_pack_rect(cell_radii, inner)
        for m, p, r in zip(members, pos, rad):
            positions[m] = p
            radii[m] = r
    else:
        pos, r = layout_grid_rect(len(members), inner, unit_radius)
        for m, p in zip(members, pos):
            positions[m] = p
            radii[m] = r
