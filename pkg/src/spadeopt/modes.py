"""Orthonormal imaging-mode sets sampled on an image grid.

A :class:`ModeSet` holds a ``(J, G)`` matrix whose rows are orthonormal under
the grid inner product, ``Phi @ diag(w) @ Phi.T == I``.  Pixel bases are kept
as sparse matrices so the fine-pixel direct-imaging baseline stays cheap on 2D
grids.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from spadeopt.errors import DimensionError, InvalidArgument, RankError
from spadeopt.grid import Grid

RANK_TOL = 1e-10

_mode_ids = itertools.count()


@dataclass(frozen=True, eq=False)
class ModeSet:
    matrix: np.ndarray | sp.csr_matrix
    grid: Grid
    label: str = "custom"
    uid: int = field(default_factory=lambda: next(_mode_ids))

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.grid.size:
            raise DimensionError(f"mode matrix shape {self.matrix.shape} does not fit {self.grid}")
        if self.matrix.shape[0] > self.grid.size:
            raise DimensionError("more modes than grid points")

    @property
    def J(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def weighted(self) -> np.ndarray:
        """Rows scaled to plain Euclidean orthonormality (a point on the standard Stiefel manifold)."""
        return self.dense() * math.sqrt(self.grid.weight)

    def relabel(self, label: str) -> "ModeSet":
        return ModeSet(self.matrix, self.grid, label)


def from_weighted(Y: np.ndarray, grid: Grid, label: str = "custom") -> ModeSet:
    return ModeSet(Y / math.sqrt(grid.weight), grid, label)


def _split_bins(n_points: int, J: int) -> np.ndarray:
    """Bin index (0..J-1) of each of ``n_points`` consecutive samples, near-equal bins."""
    edges = np.linspace(0, n_points, J + 1)
    return np.searchsorted(edges, np.arange(n_points), side="right") - 1


def pixel_basis(grid: Grid, J: int | None = None, span: tuple[float, float] | None = None, label: str = "direct") -> ModeSet:
    """Contiguous top-hat pixels tiling ``span`` (per axis in 2D), unit grid norm.

    ``J`` defaults to one pixel per grid point in the span.  In 2D ``J`` must
    be a perfect square; pixels are ordered row-major with x fastest.
    """
    lo, hi = (-grid.extent, grid.extent) if span is None else span
    if hi <= lo:
        raise InvalidArgument("empty span")
    eps = 1e-9 * grid.spacing
    inside = np.flatnonzero((grid.axis >= lo - eps) & (grid.axis <= hi + eps))
    n = inside.size
    if n == 0:
        raise InvalidArgument("span contains no grid points")
    if grid.dim == 1:
        J = n if J is None else J
        per_axis = J
    else:
        per_axis = n if J is None else math.isqrt(J)
        if J is not None and per_axis * per_axis != J:
            raise InvalidArgument("2D pixel count must be a perfect square")
        J = per_axis * per_axis
    if J < 1 or per_axis > n:
        raise InvalidArgument(f"{J} pixels requested but the span holds {n} points per axis")
    bin_axis = np.full(grid.n_axis, -1)
    bin_axis[inside] = _split_bins(n, per_axis)
    if grid.dim == 1:
        bins = bin_axis
    else:
        by, bx = np.meshgrid(bin_axis, bin_axis, indexing="ij")
        bins = np.where((bx >= 0) & (by >= 0), by * per_axis + bx, -1).ravel()
    cols = np.flatnonzero(bins >= 0)
    rows = bins[cols]
    counts = np.bincount(rows, minlength=J)
    vals = 1.0 / np.sqrt(counts[rows] * grid.weight)
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(J, grid.size))
    return ModeSet(matrix, grid, label)


def orthonormalize(raw, grid: Grid, label: str = "custom") -> ModeSet:
    """Orthonormal rows spanning the same space as ``raw`` (weighted QR).

    Signs are fixed so that the triangular factor has a positive diagonal,
    which makes the map idempotent on already-orthonormal input.
    """
    raw = raw.toarray() if sp.issparse(raw) else np.asarray(raw, dtype=float)
    raw = np.atleast_2d(raw)
    if raw.shape[1] != grid.size:
        raise DimensionError(f"expected {grid.size} columns, got {raw.shape[1]}")
    Y = raw * math.sqrt(grid.weight)
    sv = np.linalg.svd(Y, compute_uv=False)
    if sv.size < Y.shape[0] or sv[-1] < RANK_TOL * max(1.0, sv[0]):
        raise RankError(f"mode rows are rank deficient (smallest singular value {sv[-1]:.3g})")
    return from_weighted(qr_rows(Y), grid, label)


def qr_rows(Y: np.ndarray) -> np.ndarray:
    """Row-orthonormal factor of ``Y`` with a positive-diagonal R."""
    Q, R = np.linalg.qr(Y.T)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return (Q * d).T


def validate(modes: ModeSet) -> float:
    """Frobenius norm of ``Phi diag(w) Phi^T - I``."""
    Phi = modes.matrix
    gram = Phi @ Phi.T * modes.grid.weight
    if sp.issparse(gram):
        gram = gram.toarray()
    return float(np.linalg.norm(gram - np.eye(modes.J)))


def random_modes(grid: Grid, J: int, rng: np.random.Generator, label: str = "random") -> ModeSet:
    return orthonormalize(rng.standard_normal((J, grid.size)), grid, label)


def write_csv(modes: ModeSet, path) -> None:
    """One row per grid point: coordinate column(s) then one column per mode."""
    pts = modes.grid.points.reshape(modes.grid.size, -1)
    coord_names = ["x"] if modes.grid.dim == 1 else ["x", "y"]
    data = modes.dense()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(coord_names + [f"mode_{j}" for j in range(modes.J)])
        for g in range(modes.grid.size):
            w.writerow([f"{v:.10g}" for v in pts[g]] + [f"{v:.12g}" for v in data[:, g]])
