"""Non-negative least-squares reconstruction from one or more measurement records."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from spadeopt.errors import DimensionError, InvalidArgument

KKT_TOL = 1e-8


class NnlsWarning(RuntimeWarning):
    """The solver stopped before the KKT conditions were met; the estimate is the best feasible point."""


@dataclass
class DesignSystem:
    """Stacked expected-count model ``E[y] = A @ c``."""

    A: np.ndarray
    y: np.ndarray
    row_scale: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.y.shape[0]:
            raise DimensionError(f"design {self.A.shape} and data {self.y.shape} do not align")

    def weighted(self) -> tuple[np.ndarray, np.ndarray]:
        if self.row_scale is None:
            return self.A, self.y
        s = np.asarray(self.row_scale, dtype=float)
        return self.A * s[:, None], self.y * s


def stack_design(records, responses, poisson_weights: bool = False) -> DesignSystem:
    """Rows ``N_m * M_m[j]`` and counts ``n_j`` for every record, in the order given.

    ``poisson_weights`` scales each row by ``1 / sqrt(max(n_j, 1))``.
    """
    records = list(records)
    responses = list(responses)
    if not records:
        raise InvalidArgument("no measurement records")
    if len(records) != len(responses):
        raise DimensionError(f"{len(records)} records but {len(responses)} response matrices")
    blocks, ys = [], []
    for rec, M in zip(records, responses):
        M = np.asarray(M, dtype=float)
        if M.shape[0] != len(rec.counts):
            raise DimensionError(f"record has {len(rec.counts)} counts, response matrix has {M.shape[0]} rows")
        blocks.append(rec.budget * M)
        ys.append(np.asarray(rec.counts, dtype=float))
    A = np.vstack(blocks)
    y = np.concatenate(ys)
    scale = 1.0 / np.sqrt(np.maximum(y, 1.0)) if poisson_weights else None
    return DesignSystem(A, y, scale)


def kkt_violation(A: np.ndarray, y: np.ndarray, c: np.ndarray) -> float:
    """Largest KKT violation of ``min ||A c - y||^2, c >= 0`` relative to ``||A^T y||_inf``."""
    g = A.T @ (A @ c - y)
    scale = max(float(np.max(np.abs(A.T @ y))), np.finfo(float).tiny)
    free = c > 0
    v = np.concatenate([np.abs(g[free]), np.clip(-g[~free], 0, None)])
    return float(v.max(initial=0.0)) / scale


def nnls(system: DesignSystem, maxiter: int | None = None) -> np.ndarray:
    """``argmin_{c >= 0} ||A c - y||^2`` (Lawson-Hanson active set via SciPy).

    Columns are rescaled to unit norm before solving, which leaves the
    solution unchanged but improves the conditioning of the active-set
    subproblems.  A :class:`NnlsWarning` is issued when the returned point
    does not satisfy the KKT conditions to ``1e-8``.
    """
    A, y = system.weighted()
    K = A.shape[1]
    if K < 1 or not np.any(A):
        raise InvalidArgument("design matrix is empty or all zero")
    norms = np.linalg.norm(A, axis=0)
    live = norms > 0
    c = np.zeros(K)
    As = A[:, live] / norms[live]
    maxiter = maxiter or 50 * K
    try:
        z, _ = scipy.optimize.nnls(As, y, maxiter=maxiter)
    except RuntimeError:
        warnings.warn("NNLS iteration limit reached", NnlsWarning, stacklevel=2)
        z = np.zeros(As.shape[1])
    c[live] = np.maximum(z, 0.0) / norms[live]
    viol = kkt_violation(A, y, c)
    if viol > KKT_TOL:
        c = _polish(A, y, c)
        viol = kkt_violation(A, y, c)
        if viol > KKT_TOL:
            warnings.warn(f"NNLS KKT violation {viol:.2e}", NnlsWarning, stacklevel=2)
    return c


def _polish(A, y, c):
    """Re-solve least squares on the free set; keep the result only if it stays feasible."""
    free = c > 0
    if not np.any(free):
        return c
    sol, *_ = np.linalg.lstsq(A[:, free], y, rcond=None)
    if np.any(sol <= 0):
        return c
    out = c.copy()
    out[free] = sol
    return out


def write_estimate_csv(c_hat, path, coords=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        coords = None if coords is None else np.asarray(coords).reshape(len(c_hat), -1)
        if coords is None:
            w.writerow(["index", "c_hat"])
            for k, v in enumerate(c_hat):
                w.writerow([k, repr(float(v))])
        else:
            names = ["x"] if coords.shape[1] == 1 else ["x", "y"]
            w.writerow(["index"] + names + ["c_hat"])
            for k, v in enumerate(c_hat):
                w.writerow([k] + [repr(float(x)) for x in coords[k]] + [repr(float(v))])
