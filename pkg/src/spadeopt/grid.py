"""Uniform 1D/2D sampling grids with quadrature-weighted inner products.

All lengths are in units of the PSF width sigma.  A 2D grid is the tensor
product of two identical axes and its points are ordered row-major with x
varying fastest, i.e. ``points[iy * n + ix] = (axis[ix], axis[iy])``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from spadeopt.errors import DimensionError, InvalidArgument

# slack for floor() on ratios such as 24 / 0.1 that land a hair below an integer
_FLOOR_SLACK = 1e-9

_grid_ids = itertools.count()


def robust_floor(x: float) -> int:
    return int(math.floor(x + _FLOOR_SLACK))


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    extent: float
    spacing: float
    axis: np.ndarray
    uid: int = field(default_factory=lambda: next(_grid_ids))

    @property
    def n_axis(self) -> int:
        return self.axis.size

    @property
    def size(self) -> int:
        return self.n_axis**self.dim

    @property
    def weight(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_axis,) * self.dim

    @property
    def points(self) -> np.ndarray:
        """Sample coordinates, shape ``(size,)`` in 1D and ``(size, 2)`` in 2D."""
        if self.dim == 1:
            return self.axis.copy()
        xx, yy = np.meshgrid(self.axis, self.axis, indexing="xy")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def key(self) -> tuple:
        return (self.dim, self.extent, self.spacing)

    def __repr__(self) -> str:
        return f"Grid(dim={self.dim}, extent={self.extent:g}, spacing={self.spacing:g}, size={self.size})"


def make_grid(dim: int, extent: float, spacing: float) -> Grid:
    """Build a centered uniform grid covering ``[-extent, extent]`` per axis.

    The per-axis point count is ``floor(2 * extent / spacing) + 1``.  When the
    ratio is not an integer the samples are centered on the origin.
    """
    if dim not in (1, 2):
        raise InvalidArgument(f"dim must be 1 or 2, got {dim}")
    if not (extent > 0 and spacing > 0):
        raise InvalidArgument(f"extent and spacing must be positive (got {extent}, {spacing})")
    if spacing > extent * (1 + _FLOOR_SLACK):
        raise InvalidArgument(f"spacing {spacing} exceeds extent {extent}")
    n = robust_floor(2.0 * extent / spacing) + 1
    axis = (np.arange(n) - (n - 1) / 2.0) * spacing
    axis.setflags(write=False)
    return Grid(dim=dim, extent=float(extent), spacing=float(spacing), axis=axis)


def inner_product(f, g, grid: Grid) -> float:
    """Quadrature inner product ``sum(f * g) * weight`` of two sampled real fields."""
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if f.size != grid.size or g.size != grid.size:
        raise DimensionError(f"expected {grid.size} samples, got {f.size} and {g.size}")
    return float(np.dot(f, g) * grid.weight)


def convergence_check(integrand, extent: float, spacing: float, dim: int = 1) -> float:
    """Change in the quadrature of ``integrand(grid)`` when the spacing is halved."""
    coarse = make_grid(dim, extent, spacing)
    fine = make_grid(dim, extent, spacing / 2)
    return abs(float(np.sum(integrand(fine)) * fine.weight) - float(np.sum(integrand(coarse)) * coarse.weight))
