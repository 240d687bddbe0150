"""Quantum Fisher information from symmetric logarithmic derivatives.

The image-plane state of an incoherent source is
``rho = sum_k c_k rho_k`` with ``rho_k = int f_k(R) |psi_R><psi_R| dR``,
represented as a dense matrix.  Since ``rho`` is linear in ``c``,
``d rho / d c_k = rho_k``.

Every operator involved lives in the span of the S sampled PSF states, so
when S is smaller than the image grid (always the case in 2D) the matrices
are written in an orthonormal basis of that span instead of the grid basis.
Traces, the QFI and all residuals are unchanged by this choice.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from spadeopt.errors import QuadratureError
from spadeopt.fisher import inverse_from_factor
from spadeopt.psf import ForwardModel

TRACE_TOL = 1e-6
DEFAULT_CUTOFF = 1e-10  # relative to the largest eigenvalue


@dataclass(eq=False)
class DensityState:
    """``rho`` and its eigendecomposition (descending).

    Matrices are in the weighted grid basis when ``basis`` is None, otherwise
    in the orthonormal columns of ``basis`` (grid points x rank).  The per-mode
    derivatives are kept in factored form, ``rho_k = V diag(F[:, k]) V^T``,
    and materialized by :meth:`drho`.
    """

    rho: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    V: np.ndarray
    F: np.ndarray
    c: np.ndarray
    basis: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.F.shape[1]

    def to_grid(self, A: np.ndarray) -> np.ndarray:
        """An operator in this state's basis, rewritten in the weighted grid basis."""
        return A if self.basis is None else self.basis @ A @ self.basis.T

    def drho(self, k: int) -> np.ndarray:
        f = self.F[:, k]
        s = np.flatnonzero(f)
        return (self.V[:, s] * f[s]) @ self.V[:, s].T

    def drho_eigen(self, k: int, U: np.ndarray | None = None) -> np.ndarray:
        """``E^T rho_k E`` computed from the factors (``U = E^T V`` may be passed in)."""
        U = self.eigvecs.T @ self.V if U is None else U
        f = self.F[:, k]
        s = np.flatnonzero(f)
        return (U[:, s] * f[s]) @ U[:, s].T


@dataclass
class QfiReport:
    K_matrix: np.ndarray
    qcrb_diag: np.ndarray
    qcrb_mean: float
    weak_comm_residual: float

    def write_csv(self, path, header: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for key, val in (header or {}).items():
                w.writerow([f"# {key}", val])
            w.writerow(["# qcrb_mean", repr(self.qcrb_mean)])
            w.writerow(["# weak_comm_residual", repr(self.weak_comm_residual)])
            w.writerow(["index", "qcrb_diag"])
            for k, v in enumerate(self.qcrb_diag):
                w.writerow([k, repr(float(v))])


def density_matrix(model, psf, image_grid, source_spacing: float | None = None) -> DensityState:
    fwd = ForwardModel(image_grid, psf, model.basis, source_spacing)
    V = fwd.weighted_psf / np.sqrt(image_grid.weight)  # columns: unit-norm PSF states
    basis = None
    if V.shape[1] < V.shape[0]:
        basis, V = np.linalg.qr(V)  # exact change of basis, V_grid = basis @ V
    c = np.asarray(model.c, dtype=float)
    s_weight = fwd.F @ c
    rho = (V * s_weight) @ V.T
    rho = 0.5 * (rho + rho.T)
    tr = float(np.trace(rho))
    if abs(tr - c.sum()) > TRACE_TOL:
        raise QuadratureError(f"state trace {tr:.9f} deviates from the source flux {c.sum():.9f}; widen or refine the grid")
    lam, E = np.linalg.eigh(rho)
    order = np.argsort(lam)[::-1]
    return DensityState(rho=rho, eigvals=lam[order], eigvecs=E[:, order], V=V, F=fwd.F, c=c, basis=basis)


def _pair_weights(lam: np.ndarray, cutoff: float) -> np.ndarray:
    """``2 / (lam_q + lam_p)`` on retained pairs, zero elsewhere."""
    s = lam[:, None] + lam[None, :]
    keep = s > cutoff
    out = np.zeros_like(s)
    out[keep] = 2.0 / s[keep]
    return out


def _abs_cutoff(state: DensityState, cutoff: float | None) -> float:
    rel = DEFAULT_CUTOFF if cutoff is None else cutoff
    return rel * float(state.eigvals[0])


def sld_eigen(state: DensityState, k: int, cutoff: float | None = None, U=None) -> np.ndarray:
    """SLD of parameter ``k`` expressed in the eigenbasis of ``rho``."""
    R = _pair_weights(state.eigvals, _abs_cutoff(state, cutoff))
    return R * state.drho_eigen(k, U)


def sld(state: DensityState, k: int, cutoff: float | None = None) -> np.ndarray:
    """Symmetric logarithmic derivative ``L_k`` in the state's basis (see :meth:`DensityState.to_grid`).

    ``cutoff`` is relative to the largest eigenvalue: eigen-pairs with
    ``lam_q + lam_p <= cutoff * lam_max`` are dropped from the sum.
    """
    E = state.eigvecs
    L = E @ sld_eigen(state, k, cutoff) @ E.T
    return 0.5 * (L + L.T)


def lyapunov_residual(state: DensityState, k: int, L: np.ndarray, cutoff: float | None = None) -> float:
    """``|| d rho_k - (L rho + rho L) / 2 ||_F`` restricted to the retained eigen-pairs."""
    R = state.drho(k) - 0.5 * (L @ state.rho + state.rho @ L)
    Re = state.eigvecs.T @ R @ state.eigvecs
    keep = _pair_weights(state.eigvals, _abs_cutoff(state, cutoff)) > 0
    return float(np.linalg.norm(Re[keep]))


def qfi_and_qcrb(state: DensityState, slds=None, W=None, cutoff: float | None = None) -> QfiReport:
    """QFI matrix ``Re tr(L_k L_l rho)``, its inverse diagonal, and the weak-commutativity residual.

    ``slds`` may be a list of SLDs in the state's basis; otherwise they are built in the
    eigenbasis, where ``rho`` is diagonal and the traces reduce to sums.
    """
    K = state.K
    lam = state.eigvals
    if slds is None:
        U = state.eigvecs.T @ state.V
        Le = [sld_eigen(state, k, cutoff, U) for k in range(K)]
    else:
        E = state.eigvecs
        Le = [E.T @ L @ E for L in slds]
    # tr(L_k L_l rho) = sum_qp Lk_qp Ll_pq lam_q
    flat = np.stack([L.ravel() for L in Le])  # (K, G*G)
    flatT = np.stack([L.T.ravel() for L in Le])
    lam_q = np.repeat(lam, lam.size)
    K_raw = (flat * lam_q) @ flatT.T
    K_mat = 0.5 * (K_raw + K_raw.T)
    weak = K_raw - K_raw.T  # tr(rho [L_k, L_l])
    # invert through the square-root factor: K_kl = sum_qp (lam_q + lam_p) / 2 * Lk_qp Ll_qp
    iu = np.triu_indices(lam.size)
    pair = lam[iu[0]] + lam[iu[1]]
    mult = np.where(iu[0] == iu[1], 0.5, 1.0) * pair
    keep = mult > 0
    B = np.stack([L[iu][keep] for L in Le], axis=1) * np.sqrt(mult[keep])[:, None]
    inv, _ = inverse_from_factor(B)
    Wm = np.eye(K) if W is None else np.asarray(W, dtype=float)
    diag = np.diag(inv).copy()
    qmean = float(np.sum(Wm * inv)) / K
    return QfiReport(K_matrix=K_mat, qcrb_diag=diag, qcrb_mean=qmean, weak_comm_residual=float(np.max(np.abs(weak))))
