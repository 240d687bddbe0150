"""Source decompositions F(R) = sum_k c_k f_k(R) and the named test scenes.

Every source mode is normalized to unit integral (a delta, or an indicator
divided by its area), so a unit-flux model simply has ``sum(c) == 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from spadeopt.errors import InvalidArgument
from spadeopt.grid import robust_floor

DELTA = "delta-array"
RECT = "rect-1d"
SQUARE = "square-2d"

SCENARIOS = ("five-points", "uniform-1d", "smooth-1d-a", "smooth-1d-b", "chirp-2d", "siemens-2d")


@dataclass(frozen=True, eq=False)
class SourceBasis:
    """Orthogonal source modes.

    ``centers`` has shape ``(K,)`` for 1D kinds and ``(K, 2)`` for squares,
    ordered row-major with x fastest.  ``width`` is unused for deltas.
    """

    kind: str
    centers: np.ndarray
    width: float = 0.0
    bins_per_axis: int = 0

    @property
    def K(self) -> int:
        return len(self.centers)

    @property
    def dim(self) -> int:
        return 2 if self.kind == SQUARE else 1

    @property
    def half_extent(self) -> float:
        """Half-width of the region covered by the modes."""
        if self.kind == DELTA:
            return float(np.max(np.abs(self.centers)))
        return float(np.max(np.abs(self.centers))) + self.width / 2

    def axis_centers(self) -> np.ndarray:
        """Bin centers along one axis (square kind only)."""
        return np.asarray(self.centers[: self.bins_per_axis, 0])

    def subsample(self, h: float) -> int:
        """Number of midpoint samples per mode (per axis) for spacing ``h``."""
        if self.kind == DELTA:
            return 1
        return max(1, math.ceil(self.width / h - 1e-9))

    def quadrature(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        """Source sample points and the ``(S, K)`` weight matrix ``f_k(R_s) * w_s``.

        Deltas are sampled exactly at their locations.  Rectangles and squares
        use a midpoint rule with at most ``h`` between samples.  For squares the
        sample points form a tensor grid; see :meth:`quadrature_axis`.
        """
        if self.kind == DELTA:
            return np.asarray(self.centers, dtype=float), np.eye(self.K)
        n = self.subsample(h)
        offsets = (np.arange(n) + 0.5) * self.width / n - self.width / 2
        if self.kind == RECT:
            pts = (self.centers[:, None] + offsets[None, :]).ravel()
            F = np.kron(np.eye(self.K), np.full((n, 1), 1.0 / n))
            return pts, F
        ax, F = self.quadrature_axis(h)
        xx, yy = np.meshgrid(ax, ax, indexing="xy")
        return np.column_stack([xx.ravel(), yy.ravel()]), F

    def quadrature_axis(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis sample coordinates for squares plus the (S, K) weights.

        Sample ``s = iy * len(axis) + ix`` sits at ``(axis[ix], axis[iy])``.
        """
        if self.kind != SQUARE:
            raise InvalidArgument("quadrature_axis is only defined for square bases")
        n = self.subsample(h)
        nb = self.bins_per_axis
        offsets = (np.arange(n) + 0.5) * self.width / n - self.width / 2
        axis = (self.axis_centers()[:, None] + offsets[None, :]).ravel()
        owner = np.repeat(np.arange(nb), n)  # bin index of each axis sample
        k_of_s = (owner[:, None] * nb + owner[None, :]).ravel()  # iy-major
        F = np.zeros((axis.size**2, self.K))
        F[np.arange(axis.size**2), k_of_s] = 1.0 / n**2
        return axis, F


@dataclass(frozen=True, eq=False)
class SourceModel:
    basis: SourceBasis
    c: np.ndarray
    name: str = "custom"

    @property
    def K(self) -> int:
        return self.basis.K

    def flux(self) -> float:
        return float(np.sum(self.c))


def _normalized(values) -> np.ndarray:
    c = np.asarray(values, dtype=float)
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise InvalidArgument("source coefficients must be finite and non-negative")
    total = c.sum()
    if total <= 0:
        raise InvalidArgument("source coefficients are all zero")
    return c / total


def point_array(n: int, dx: float, amplitudes=None) -> SourceModel:
    """``n`` point sources spaced ``dx`` apart and centered on the origin."""
    if n < 1 or dx <= 0:
        raise InvalidArgument("need n >= 1 and dx > 0")
    amplitudes = np.ones(n) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    if amplitudes.shape != (n,):
        raise InvalidArgument(f"expected {n} amplitudes, got shape {amplitudes.shape}")
    locs = (np.arange(n) - (n - 1) / 2.0) * dx
    return SourceModel(SourceBasis(DELTA, locs), _normalized(amplitudes), name="points")


def rect_basis(extent: float, a: float) -> SourceBasis:
    """Contiguous width-``a`` rectangles tiling ``[-extent, extent]``, centered."""
    if a <= 0 or extent <= 0:
        raise InvalidArgument("extent and width must be positive")
    if a > 2 * extent * (1 + 1e-9):
        raise InvalidArgument(f"width {a} exceeds region {2 * extent}")
    K = robust_floor(2 * extent / a)
    centers = (np.arange(K) - (K - 1) / 2.0) * a
    return SourceBasis(RECT, centers, width=float(a))


def square_basis(bins_per_axis: int, width: float) -> SourceBasis:
    """``bins_per_axis`` squared square bins of side ``width`` centered on the origin."""
    if bins_per_axis < 1 or width <= 0:
        raise InvalidArgument("need at least one bin of positive width")
    ax = (np.arange(bins_per_axis) - (bins_per_axis - 1) / 2.0) * width
    xx, yy = np.meshgrid(ax, ax, indexing="xy")
    return SourceBasis(SQUARE, np.column_stack([xx.ravel(), yy.ravel()]), width=float(width), bins_per_axis=bins_per_axis)


def eval_source(model: SourceModel, R) -> float:
    """Brightness F(R).  Delta modes report their weight only at their exact location."""
    b = model.basis
    if b.kind == DELTA:
        hit = np.isclose(b.centers, float(R), rtol=0, atol=1e-12)
        return float(np.sum(model.c[hit]))
    R = np.atleast_1d(np.asarray(R, dtype=float))
    lo = b.centers - b.width / 2
    hi = b.centers + b.width / 2
    if b.kind == RECT:
        inside = (R[0] >= lo) & (R[0] < hi)
        return float(np.sum(model.c[inside]) / b.width)
    inside = np.all((R[None, :] >= lo) & (R[None, :] < hi), axis=1)
    return float(np.sum(model.c[inside]) / b.width**2)


def bin_average(profile, basis: SourceBasis, oversample: int = 32) -> np.ndarray:
    """Average of ``profile`` over each source mode's support (point value for deltas)."""
    if basis.kind == DELTA:
        return np.asarray(profile(basis.centers), dtype=float)
    offs = (np.arange(oversample) + 0.5) / oversample * basis.width - basis.width / 2
    if basis.kind == RECT:
        return profile(basis.centers[:, None] + offs[None, :]).mean(axis=1)
    ox, oy = np.meshgrid(offs, offs, indexing="xy")
    xs = basis.centers[:, 0, None] + ox.ravel()[None, :]
    ys = basis.centers[:, 1, None] + oy.ravel()[None, :]
    return profile(xs, ys).mean(axis=1)


def discretize(profile, basis: SourceBasis, oversample: int = 32, name: str = "custom") -> SourceModel:
    """Project a brightness profile onto ``basis`` by bin-averaging."""
    return SourceModel(basis, _normalized(bin_average(profile, basis, oversample)), name=name)


# 1D extended profiles: all confined to |x| <= 8 sigma.

def uniform_profile(x, half_width: float = 8.0):
    return (np.abs(x) <= half_width).astype(float)


def hump_pair_profile(x, half_width: float = 8.0, floor: float = 0.3):
    """Two raised-cosine humps peaking at +-half_width/2 on a pedestal."""
    humps = 0.5 * (1 - np.cos(2 * np.pi * (x + half_width) / half_width))
    return np.where(np.abs(x) <= half_width, floor + (1 - floor) * humps, 0.0)


def double_gaussian_profile(x, half_width: float = 8.0):
    """Asymmetric pair of Gaussians, truncated to the support."""
    g = np.exp(-((x + 3.0) ** 2) / (2 * 2.0**2)) + 0.6 * np.exp(-((x - 4.0) ** 2) / (2 * 1.5**2))
    return np.where(np.abs(x) <= half_width, g, 0.0)


def michelson_contrast(values) -> float:
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / (v.max() + v.min()))


def _with_contrast(shape_values: np.ndarray, contrast: float) -> np.ndarray:
    """Map bin values of a pattern in [-1, 1] to ``1 + m * s`` with exact Michelson contrast."""
    lo, hi = float(shape_values.min()), float(shape_values.max())
    if contrast == 0 or hi == lo:
        return np.ones_like(shape_values)
    m = 2 * contrast / ((hi - lo) - contrast * (hi + lo))
    if m <= 0 or np.any(1 + m * shape_values <= 0):
        raise InvalidArgument(f"contrast {contrast} not reachable for this pattern")
    return 1 + m * shape_values


def chirp_pattern(x, y, f0: float = 0.15, beta: float = 0.03):
    """Chirp along x with local frequency increasing in x; constant along y."""
    return np.cos(2 * np.pi * (f0 + beta * x) * x) + 0 * y


def siemens_pattern(x, y, spokes: int = 8):
    theta = np.arctan2(y, x)
    return np.sign(np.cos(spokes * theta))


def scenario(name: str, **params) -> SourceModel:
    """Ground-truth scene ``name`` discretized on its basis.

    Parameters per scene (all optional, defaults in brackets):

    * five-points: ``dx`` [0.3], ``n`` [5], ``amplitudes``
    * uniform-1d / smooth-1d-a / smooth-1d-b: ``a`` [0.8], ``extent`` [12.0]
    * chirp-2d / siemens-2d: ``bins`` [8], ``width`` [0.9], ``contrast``
      [0.028 chirp, 0.025 siemens], ``f0``, ``beta``, ``spokes`` [8]
    """
    if name == "five-points":
        model = point_array(params.get("n", 5), params.get("dx", 0.3), params.get("amplitudes"))
        return SourceModel(model.basis, model.c, name=name)
    if name in ("uniform-1d", "smooth-1d-a", "smooth-1d-b"):
        basis = rect_basis(params.get("extent", 12.0), params.get("a", 0.8))
        profile = {"uniform-1d": uniform_profile, "smooth-1d-a": hump_pair_profile, "smooth-1d-b": double_gaussian_profile}[name]
        return discretize(profile, basis, name=name)
    if name in ("chirp-2d", "siemens-2d"):
        basis = square_basis(params.get("bins", 8), params.get("width", 0.9))
        if name == "chirp-2d":
            contrast = params.get("contrast", 0.028)
            f0, beta = params.get("f0", 0.15), params.get("beta", 0.03)
            pattern = lambda x, y: chirp_pattern(x, y, f0, beta)  # noqa: E731
        else:
            contrast = params.get("contrast", 0.025)
            spokes = params.get("spokes", 8)
            pattern = lambda x, y: siemens_pattern(x, y, spokes)  # noqa: E731
        s = bin_average(pattern, basis)
        return SourceModel(basis, _normalized(_with_contrast(s, contrast)), name=name)
    raise InvalidArgument(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
