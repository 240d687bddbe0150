"""Gaussian field PSF and the overlap/response kernels.

The overlap ``O[j, s] = <phi_j | psi_{R_s}>`` links imaging mode ``j`` to the
source sample point ``R_s``; squaring it and integrating against the source
modes gives the response matrix ``M[j, k] = dP_j / dc_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from spadeopt.errors import DimensionError, InvalidArgument
from spadeopt.grid import Grid, make_grid
from spadeopt.sources import SourceBasis

# image grid margin beyond the source region, in units of sigma
IMAGE_MARGIN = 6.0
DEFAULT_SPACING = {1: 0.1, 2: 0.25}


@dataclass(frozen=True)
class Psf:
    kind: str = "gaussian-1d"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian-1d", "gaussian-2d"):
            raise InvalidArgument(f"unknown PSF kind {self.kind!r}")
        if not self.sigma > 0:
            raise InvalidArgument("sigma must be positive")

    @property
    def dim(self) -> int:
        return 2 if self.kind == "gaussian-2d" else 1

    def profile(self, d):
        """1D field amplitude at displacement ``d``; unit L2 norm."""
        s2 = self.sigma**2
        return (2 * np.pi * s2) ** -0.25 * np.exp(-np.square(d) / (4 * s2))


def psf_amplitude(psf: Psf, R, x):
    """Field amplitude at image point ``x`` from a point source at ``R``.

    In 2D both arguments are ``(x, y)`` pairs and the PSF is the product of
    two 1D Gaussians.
    """
    if psf.dim == 1:
        return psf.profile(np.asarray(x) - np.asarray(R))
    R = np.asarray(R, dtype=float)
    x = np.asarray(x, dtype=float)
    return psf.profile(x[..., 0] - R[..., 0]) * psf.profile(x[..., 1] - R[..., 1])


def image_grid_for(basis: SourceBasis, spacing: float | None = None, margin: float = IMAGE_MARGIN) -> Grid:
    """Image grid covering the source region plus ``margin`` on every side."""
    h = DEFAULT_SPACING[basis.dim] if spacing is None else spacing
    return make_grid(basis.dim, basis.half_extent + margin, h)


@dataclass(frozen=True, eq=False)
class OverlapKernel:
    values: np.ndarray  # (J, S)
    points: np.ndarray
    source_spacing: float
    mode_ref: int


class ForwardModel:
    """Cached linear maps between mode matrices and source-sample overlaps.

    Precomputes the weighted PSF samples so that ``overlaps(Phi)`` is one
    matrix product (two small ones in 2D, using separability) and
    ``overlaps_adjoint`` maps an overlap-space gradient back onto the grid.
    """

    def __init__(self, grid: Grid, psf: Psf, basis: SourceBasis, source_spacing: float | None = None):
        if grid.dim != psf.dim or basis.dim != psf.dim:
            raise DimensionError("grid, PSF and source basis dimensions differ")
        self.grid = grid
        self.psf = psf
        self.basis = basis
        self.source_spacing = grid.spacing if source_spacing is None else source_spacing
        self.points, self.F = basis.quadrature(self.source_spacing)
        if grid.dim == 1:
            # (G, S) weighted PSF samples: O = Phi @ A
            self.A = psf.profile(grid.axis[:, None] - self.points[None, :]) * grid.weight
        else:
            src_axis, _ = basis.quadrature_axis(self.source_spacing)
            # per-axis factor with the 1D weight h folded in; h * h = grid weight
            self.P1 = psf.profile(grid.axis[:, None] - src_axis[None, :]) * grid.spacing
            self._A2 = None
        self._cache: dict[int, np.ndarray] = {}

    @property
    def S(self) -> int:
        return self.F.shape[0]

    @property
    def K(self) -> int:
        return self.F.shape[1]

    @property
    def weighted_psf(self) -> np.ndarray:
        """Dense ``(G, S)`` weighted PSF sample matrix (built lazily in 2D)."""
        if self.grid.dim == 1:
            return self.A
        if self._A2 is None:
            n, m = self.P1.shape
            # rows (iy, ix), columns (source y, source x)
            self._A2 = np.einsum("ya,xb->yxab", self.P1, self.P1).reshape(n * n, m * m)
        return self._A2

    def overlaps(self, Phi) -> np.ndarray:
        if sp.issparse(Phi):
            return np.asarray(Phi @ self.weighted_psf)
        Phi = np.asarray(Phi)
        if Phi.shape[-1] != self.grid.size:
            raise DimensionError(f"mode matrix has {Phi.shape[-1]} columns, grid has {self.grid.size} points")
        if self.grid.dim == 1:
            return Phi @ self.A
        n = self.grid.n_axis
        T = Phi.reshape(-1, n, n)  # [j, iy, ix]
        O = self.P1.T @ (T @ self.P1)  # [j, source y, source x]
        return O.reshape(Phi.shape[0], -1)

    def overlaps_adjoint(self, G_O: np.ndarray) -> np.ndarray:
        """Gradient with respect to the mode matrix given one with respect to ``O``."""
        if self.grid.dim == 1:
            return G_O @ self.A.T
        m = self.P1.shape[1]
        T = G_O.reshape(-1, m, m)  # [j, source y, source x]
        T = self.P1 @ (T @ self.P1.T)  # [j, iy, ix]
        return T.reshape(G_O.shape[0], -1)

    def response_from_overlaps(self, O: np.ndarray) -> np.ndarray:
        return np.square(O) @ self.F

    def response(self, modes) -> np.ndarray:
        """Response matrix ``M`` for a :class:`ModeSet`, cached by mode-set id."""
        M = self._cache.get(modes.uid)
        if M is None:
            if modes.grid.key() != self.grid.key():
                raise DimensionError("mode set lives on a different grid")
            M = self.response_from_overlaps(self.overlaps(modes.matrix))
            self._cache[modes.uid] = M
        return M


def overlap_kernel(modes, basis: SourceBasis, psf: Psf, source_spacing: float | None = None) -> OverlapKernel:
    """Overlaps of every mode with the PSF of every source sample point."""
    fwd = ForwardModel(modes.grid, psf, basis, source_spacing)
    return OverlapKernel(fwd.overlaps(modes.matrix), fwd.points, fwd.source_spacing, modes.uid)


def response_matrix(kernel: OverlapKernel, basis: SourceBasis) -> np.ndarray:
    """``M[j, k] = sum_s f_k(R_s) w_s O[j, s]**2``; entries are non-negative."""
    points, F = basis.quadrature(kernel.source_spacing)
    if F.shape[0] != kernel.values.shape[1]:
        raise DimensionError(f"kernel has {kernel.values.shape[1]} source samples, basis quadrature has {F.shape[0]}")
    return np.square(kernel.values) @ F
