"""Mode-design helpers shared by the CLI pipelines and the adaptive loop.

The optimizer is started from the ``J`` strongest eigenmodes of the
image-plane state of a *uniformly bright* source on the same basis.  That
state depends only on the source basis and the PSF, never on the
coefficients being estimated, and it spans the light actually present in
the image, which pixel starts do not for sub-Rayleigh extended sources.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from spadeopt.errors import InvalidArgument
from spadeopt.fisher import CrbObjective, ObjectiveConfig
from spadeopt.modes import ModeSet, from_weighted, pixel_basis, qr_rows
from spadeopt.stiefel import OptimizerOptions, minimize

FLOOR_REL = 1e-6


def floor_coefficients(c, rel: float = FLOOR_REL) -> np.ndarray:
    """Raise entries below ``rel * max(c)`` to that level and renormalize to unit flux.

    Fisher information is undefined at exactly-dark bins; the floor keeps it
    finite while moving bright coefficients by at most ``K * rel`` relative.
    """
    c = np.asarray(c, dtype=float)
    if np.any(~np.isfinite(c)):
        raise InvalidArgument("coefficients must be finite")
    top = float(np.max(c, initial=0.0))
    if top <= 0:
        raise InvalidArgument("all-zero coefficient vector: Fisher information is undefined")
    out = np.maximum(c, rel * top)
    return out / out.sum()


def state_modes(fwd, J: int, c=None, label: str = "eigen-init") -> ModeSet:
    """The ``J`` leading eigenmodes of ``rho(c)`` (uniform ``c`` by default).

    Computed from the source-sample Gram matrix, so the image grid may be
    much larger than the number of source samples.
    """
    S = fwd.F.shape[0]
    if c is None:
        c = np.full(fwd.K, 1.0 / fwd.K)
    s_weight = fwd.F @ np.asarray(c, dtype=float)
    if J > fwd.grid.size:
        raise InvalidArgument(f"cannot draw {J} modes from a grid of {fwd.grid.size} points")
    r = min(J, S)
    B = fwd.weighted_psf * (np.sqrt(s_weight) / np.sqrt(fwd.grid.weight))
    # leading left singular vectors of B from the small (S, S) Gram matrix
    lam, v = sla.eigh(B.T @ B, subset_by_index=[S - r, S - 1])
    Y = (B @ v[:, ::-1]).T
    if J > r:
        # the state has rank < J: complete with pixels over the source region
        half = fwd.basis.half_extent + 2 * fwd.psf.sigma
        span = (-half, half)
        n = J - r
        pix = pixel_basis(fwd.grid, n if fwd.grid.dim == 1 else math.ceil(math.sqrt(n)) ** 2, span).weighted()
        Y = np.vstack([qr_rows(Y), pix[:n]])
    return from_weighted(qr_rows(Y), fwd.grid, label)


def direct_modes(fwd) -> ModeSet:
    """Fine-pixel direct imaging: one bin per image sample."""
    return pixel_basis(fwd.grid)


@dataclass
class DesignResult:
    modes: ModeSet
    traces: list
    objective: float


def design_modes(
    fwd,
    c,
    J: int,
    init: ModeSet | None = None,
    opts: OptimizerOptions | None = None,
    config: ObjectiveConfig | None = None,
    prior_factor=None,
    budget: float = 1.0,
) -> DesignResult:
    """Optimize ``J`` modes for ``tr(W [prior + budget * I(c)]^-1)``.

    ``c`` is floored before use.  Without ``init`` the run starts from the
    uniform-source eigenmodes.
    """
    c = floor_coefficients(c)
    opts = opts or OptimizerOptions(max_iters=3000)
    config = config or ObjectiveConfig()
    start = init if init is not None else state_modes(fwd, J)
    if start.J != J:
        raise InvalidArgument(f"initial mode set has {start.J} modes, expected {J}")
    obj = CrbObjective(fwd, c, config, budget=budget, prior_factor=prior_factor)
    modes, trace = minimize(obj, start, opts)
    return DesignResult(modes=modes.relabel("optimized"), traces=[trace], objective=trace.values[-1])
