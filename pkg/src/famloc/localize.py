"""Bounding-box proposal generation from an activation grid.

Four steps under parameters {t, s, e}: threshold at a fraction t of the grid
maximum, drop 8-connected regions smaller than a fraction s of the grid,
box each surviving region, expand each box by a fraction e. Gated by the
binary food decision: a non-food image proposes nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grids import ActivationGrid, grid_max
from .head import FoodDecision

# 8-neighborhood offsets
_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass
class LocalizerParams:
    t: float = 0.4
    s: float = 0.1
    e: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValidationError(f"t must be in (0, 1], got {self.t}")
        if not 0.0 <= self.s < 1.0:
            raise ValidationError(f"s must be in [0, 1), got {self.s}")
        if self.e < 0.0:
            raise ValidationError(f"e must be >= 0, got {self.e}")


@dataclass(frozen=True)
class Region:
    """A maximal 8-connected set of above-threshold grid cells."""

    cells: frozenset

    @property
    def area(self):
        return len(self.cells)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous image coordinates, origin top-left."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValidationError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def area(self):
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def threshold_mask(grid: ActivationGrid, t: float) -> np.ndarray:
    """Boolean mask of cells >= t * grid max; all false if the max is <= 0."""
    if not 0.0 < t <= 1.0:
        raise ValidationError(f"t must be in (0, 1], got {t}")
    peak = grid_max(grid)
    if peak <= 0.0:
        return np.zeros(grid.values.shape, dtype=bool)
    return grid.values >= t * peak


def connected_components(mask: np.ndarray) -> list:
    """Partition true cells into maximal 8-connected regions.

    Output sorted by each region's (min y, min x).
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    seen = np.zeros_like(mask)
    regions = []
    for y0 in range(h):
        for x0 in range(w):
            if not mask[y0, x0] or seen[y0, x0]:
                continue
            stack = [(y0, x0)]
            seen[y0, x0] = True
            cells = []
            while stack:
                y, x = stack.pop()
                cells.append((y, x))
                for dy, dx in _NEIGHBORS:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            regions.append(Region(frozenset(cells)))
    regions.sort(key=lambda r: (min(y for y, _ in r.cells), min(x for _, x in r.cells)))
    return regions


def filter_regions(regions, grid_area: int, s: float) -> list:
    """Keep regions whose cell count covers at least a fraction s of the grid."""
    if grid_area <= 0:
        raise ValidationError("grid_area must be positive")
    if not 0.0 <= s < 1.0:
        raise ValidationError(f"s must be in [0, 1), got {s}")
    return [r for r in regions if r.area / grid_area >= s]


def region_to_box(region: Region, grid_h, grid_w, img_h, img_w) -> BoundingBox:
    """Tight box around a region's cells, scaled from grid to image coordinates.

    Cell (y, x) occupies the unit square [x, x+1) x [y, y+1) at grid scale.
    """
    ys = [y for y, _ in region.cells]
    xs = [x for _, x in region.cells]
    sx = img_w / grid_w
    sy = img_h / grid_h
    return BoundingBox(
        x_min=min(xs) * sx,
        y_min=min(ys) * sy,
        x_max=(max(xs) + 1) * sx,
        y_max=(max(ys) + 1) * sy,
    )


def expand_box(box: BoundingBox, e: float, img_h, img_w) -> BoundingBox:
    """Grow width and height by a factor (1+e) about the center, then clip."""
    if e < 0.0:
        raise ValidationError(f"e must be >= 0, got {e}")
    cx = (box.x_min + box.x_max) / 2.0
    cy = (box.y_min + box.y_max) / 2.0
    half_w = (box.x_max - box.x_min) * (1.0 + e) / 2.0
    half_h = (box.y_max - box.y_min) * (1.0 + e) / 2.0
    return BoundingBox(
        x_min=max(0.0, cx - half_w),
        y_min=max(0.0, cy - half_h),
        x_max=min(float(img_w), cx + half_w),
        y_max=min(float(img_h), cy + half_h),
    )


def propose_boxes(
    grid: ActivationGrid,
    decision: FoodDecision,
    params: LocalizerParams,
    img_h,
    img_w,
) -> list:
    """Full proposal pipeline; empty when the image is gated as non-food."""
    if not decision.is_food:
        return []
    mask = threshold_mask(grid, params.t)
    regions = connected_components(mask)
    regions = filter_regions(regions, grid.height * grid.width, params.s)
    boxes = [
        region_to_box(r, grid.height, grid.width, img_h, img_w) for r in regions
    ]
    return [expand_box(b, params.e, img_h, img_w) for b in boxes]
