"""Classical Fisher information, Cramér-Rao bounds and the mode-design objective.

Counts in mode ``j`` are Poisson with mean ``N * P_j`` where ``P = M @ c``.
The per-photon Fisher matrix is ``I = M.T @ diag(1 / P) @ M``; no
``sum(P) == 1`` constraint is needed, so modes that do not capture all the
light are handled without special cases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from spadeopt.errors import DimensionError, SingularityError

# Fisher matrices with a larger condition number are reported as singular;
# the square-root route resolves up to about 1 / eps**2
MAX_CONDITION = 1e30


@dataclass
class ObjectiveConfig:
    W: np.ndarray | None = None  # None means identity
    prob_floor: float = 1e-12
    ridge: float = 1e-9

    def weight(self, K: int) -> np.ndarray:
        if self.W is None:
            return np.eye(K)
        W = np.asarray(self.W, dtype=float)
        if W.shape != (K, K):
            raise DimensionError(f"weighting matrix must be {K}x{K}")
        return 0.5 * (W + W.T)


REPORT_CONFIG = ObjectiveConfig(ridge=0.0)


@dataclass
class FisherReport:
    P: np.ndarray
    M: np.ndarray
    I: np.ndarray
    crb_diag: np.ndarray
    crb_mean: float
    condition: float
    objective: float = field(default=float("nan"))

    def write_csv(self, path, header: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for key, val in (header or {}).items():
                w.writerow([f"# {key}", val])
            w.writerow(["# crb_mean", repr(self.crb_mean)])
            w.writerow(["# condition", repr(self.condition)])
            w.writerow(["index", "crb_diag"])
            for k, v in enumerate(self.crb_diag):
                w.writerow([k, repr(float(v))])


def detection_probs(M: np.ndarray, c: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    c = np.asarray(c, dtype=float)
    if M.shape[1] != c.shape[0]:
        raise DimensionError(f"response matrix has {M.shape[1]} columns, c has {c.shape[0]} entries")
    return M @ c


def fisher_matrix(M: np.ndarray, c: np.ndarray, config: ObjectiveConfig = REPORT_CONFIG) -> np.ndarray:
    """Per-photon Fisher matrix ``sum_j M[j,k] M[j,l] / max(P_j, floor)``."""
    P = detection_probs(M, c)
    D = 1.0 / np.maximum(P, config.prob_floor)
    I = (M.T * D) @ M
    return 0.5 * (I + I.T)


def _regularized(I: np.ndarray, ridge: float) -> np.ndarray:
    if ridge == 0:
        return I
    K = I.shape[0]
    return I + ridge * np.trace(I) / K * np.eye(K)


def _condition(I: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(0.5 * (I + I.T))
    if ev[0] <= 0:
        return float("inf")
    return float(ev[-1] / ev[0])


def sqrt_factor(M: np.ndarray, c: np.ndarray, prob_floor: float = REPORT_CONFIG.prob_floor) -> np.ndarray:
    """``B`` with ``B.T @ B`` equal to the Fisher matrix: rows ``M[j] / sqrt(P_j)``."""
    P = detection_probs(M, c)
    return M / np.sqrt(np.maximum(P, prob_floor))[:, None]


def inverse_from_factor(B: np.ndarray, ridge: float = 0.0) -> tuple[np.ndarray, float]:
    """``(B^T B + ridge * tr(B^T B) / K * Id)^-1`` via QR of ``B`` and its condition number.

    Working with the square-root factor keeps the relative error near
    ``eps * sqrt(cond)`` instead of ``eps * cond`` for the normal equations,
    which matters for sub-Rayleigh source grids.
    """
    K = B.shape[1]
    if ridge:
        lam = ridge * float(np.sum(B * B)) / K
        B = np.vstack([B, np.sqrt(lam) * np.eye(K)])
    if B.shape[0] < K:
        raise SingularityError(f"{B.shape[0]} measurements cannot determine {K} parameters", float("inf"))
    R = np.linalg.qr(B, mode="r")
    d = np.abs(np.diag(R))
    if not np.all(np.isfinite(R)):
        raise SingularityError("non-finite Fisher factor", float("inf"))
    if d.min() == 0:
        raise SingularityError("Fisher matrix is singular", float("inf"))
    cond_r = np.linalg.cond(R)
    cond = float(cond_r**2)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularityError(f"Fisher matrix is numerically singular (condition {cond:.3g})", cond)
    Rinv = sla.solve_triangular(R, np.eye(K))
    inv = Rinv @ Rinv.T
    return 0.5 * (inv + inv.T), cond


def crb(I: np.ndarray, config: ObjectiveConfig = REPORT_CONFIG) -> tuple[np.ndarray, float]:
    """Diagonal of the (optionally ridge-regularized) inverse Fisher matrix and its mean.

    This is the plain-inverse route (Cholesky of ``I``).  :func:`fisher_report`
    uses the better-conditioned square-root route instead.
    """
    I = np.asarray(I, dtype=float)
    Ir = _regularized(0.5 * (I + I.T), config.ridge)
    try:
        cf = sla.cho_factor(Ir, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"Fisher matrix is not positive definite: {exc}", _condition(Ir)) from None
    inv = sla.cho_solve(cf, np.eye(I.shape[0]))
    d = np.diag(inv).copy()
    return d, float(d.mean())


def fisher_report(M: np.ndarray, c: np.ndarray, config: ObjectiveConfig = REPORT_CONFIG) -> FisherReport:
    """Probabilities, Fisher matrix and CRBs for one mode set."""
    P = detection_probs(M, c)
    I = fisher_matrix(M, c, config)
    inv, cond = inverse_from_factor(sqrt_factor(M, c, config.prob_floor), config.ridge)
    d = np.diag(inv).copy()
    W = config.weight(len(c))
    return FisherReport(P=P, M=M, I=I, crb_diag=d, crb_mean=float(d.mean()), condition=cond, objective=float(np.sum(W * inv)))


def _psd_factor(A: np.ndarray) -> np.ndarray:
    """``F`` with ``F.T @ F == A`` for symmetric PSD ``A`` (eigen-route, negatives clipped)."""
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    lam = np.clip(lam, 0, None)
    return (V * np.sqrt(lam)).T


class CrbObjective:
    """``L = tr(W [prior + budget * I(c; Phi)]^-1)`` and its gradient.

    Evaluated on the weighted mode matrix ``Y = Phi * sqrt(w)`` (rows
    Euclidean-orthonormal), which is the variable the Stiefel optimizer
    works with.  ``prior`` is the Fisher information already collected in
    earlier measurement phases (zero for a one-shot design); passing its
    square-root factor as ``prior_factor`` avoids a lossy matrix square root.
    """

    def __init__(self, fwd, c, config: ObjectiveConfig | None = None, prior=None, budget: float = 1.0, prior_factor=None):
        self.fwd = fwd
        self.c = np.asarray(c, dtype=float)
        self.config = config or ObjectiveConfig()
        K = fwd.K
        if self.c.shape != (K,):
            raise DimensionError(f"c must have {K} entries")
        self.W = self.config.weight(K)
        # prior information enters through a square-root factor so the QR route still applies
        if prior_factor is None and prior is not None:
            prior_factor = _psd_factor(np.asarray(prior, dtype=float))
        if prior_factor is not None and prior_factor.shape[0] > K:
            # the triangular factor has the same Gram matrix and only K rows
            prior_factor = np.linalg.qr(prior_factor, mode="r")
        self.prior_factor = prior_factor
        self.budget = float(budget)
        self.sqrt_w = np.sqrt(fwd.grid.weight)
        self.n_evals = 0

    def fisher(self, Phi: np.ndarray) -> np.ndarray:
        M = self.fwd.response_from_overlaps(self.fwd.overlaps(Phi))
        return fisher_matrix(M, self.c, self.config)

    def value_and_grad_phi(self, Phi: np.ndarray) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        cfg = self.config
        K = self.c.size
        O = self.fwd.overlaps(Phi)
        M = self.fwd.response_from_overlaps(O)
        P = M @ self.c
        active = P > cfg.prob_floor
        Pf = np.where(active, P, cfg.prob_floor)
        D = 1.0 / Pf
        B = np.sqrt(self.budget) * M * np.sqrt(D)[:, None]
        if self.prior_factor is not None:
            B = np.vstack([self.prior_factor, B])
        inv, _ = inverse_from_factor(B, cfg.ridge)
        L = float(np.sum(self.W * inv))
        if not np.any(self.W):
            return L, np.zeros_like(Phi)
        C = inv @ self.W @ inv
        if cfg.ridge:
            C = C + cfg.ridge / K * np.trace(C) * np.eye(K)
        MC = M @ C
        a = np.where(active, np.einsum("jk,jk->j", MC, M) / Pf**2, 0.0)
        G_M = -self.budget * (2.0 * D[:, None] * MC - np.outer(a, self.c))
        G_O = 2.0 * O * (G_M @ self.fwd.F.T)
        return L, self.fwd.overlaps_adjoint(G_O)

    def __call__(self, Y: np.ndarray) -> tuple[float, np.ndarray]:
        """Objective and Euclidean gradient with respect to the weighted matrix ``Y``."""
        L, G = self.value_and_grad_phi(Y / self.sqrt_w)
        return L, G / self.sqrt_w


def objective_and_gradient(modes, model, psf, config: ObjectiveConfig | None = None, fwd=None):
    """Design objective and its gradient with respect to the entries of ``modes.matrix``."""
    from spadeopt.psf import ForwardModel

    fwd = fwd or ForwardModel(modes.grid, psf, model.basis)
    return CrbObjective(fwd, model.c, config).value_and_grad_phi(modes.dense())
