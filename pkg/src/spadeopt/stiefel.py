"""Gradient projection on the Stiefel manifold of row-orthonormal matrices.

The optimizer works on ``Y`` with ``Y @ Y.T == I``.  Each step projects the
Euclidean gradient onto the tangent space, moves along the negative
projected gradient with a Barzilai-Borwein step, and maps back to the
manifold with a QR retraction.  Step acceptance uses a nonmonotone Armijo
test against the worst of the last ``window`` objective values.

``project_tangent`` and ``retract`` also accept :class:`ModeSet` inputs, in
which case the metric is the grid-weighted one.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from spadeopt.errors import RankError, SingularityError, DimensionError
from spadeopt.modes import ModeSet, from_weighted, qr_rows, RANK_TOL

log = logging.getLogger(__name__)


@dataclass
class OptimizerOptions:
    max_iters: int = 500
    grad_tol: float = 1e-6
    window: int = 5
    armijo: float = 1e-4
    step_min: float = 1e-10
    step_max: float = 1e10
    max_backtracks: int = 40
    restarts: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.grad_tol <= 0 or self.armijo <= 0 or self.window < 1 or self.max_iters < 0:
            raise ValueError("invalid optimizer options")


@dataclass
class OptimTrace:
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    reason: str = "max-iters"
    n_evals: int = 0

    @property
    def iterations(self) -> int:
        return len(self.values) - 1

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# termination", self.reason])
            w.writerow(["iteration", "objective", "grad_norm", "step", "orthonormality_residual"])
            for i, row in enumerate(zip(self.values, self.grad_norms, self.steps, self.residuals)):
                w.writerow([i] + [repr(float(v)) for v in row])


def _sym(A):
    return 0.5 * (A + A.T)


def tangent(Y: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Project ``G`` onto the tangent space at row-orthonormal ``Y``."""
    return G - _sym(G @ Y.T) @ Y


def qr_retract(Y: np.ndarray, D: np.ndarray, t: float) -> np.ndarray:
    if t == 0:
        return Y
    return qr_rows(Y + t * D)


def residual(Y: np.ndarray) -> float:
    return float(np.linalg.norm(Y @ Y.T - np.eye(Y.shape[0])))


def project_tangent(modes, G):
    """Tangent component of ``G`` at ``modes``.

    For a :class:`ModeSet` this is ``G - sym(G Phi^T w) Phi`` (weighted metric);
    for a plain array the unweighted formula is used.
    """
    if isinstance(modes, ModeSet):
        Phi = modes.dense()
        G = np.asarray(G, dtype=float)
        if G.shape != Phi.shape:
            raise DimensionError(f"gradient shape {G.shape} != mode shape {Phi.shape}")
        return G - _sym(G @ Phi.T * modes.grid.weight) @ Phi
    if np.shape(G) != np.shape(modes):
        raise DimensionError("shape mismatch")
    return tangent(np.asarray(modes), np.asarray(G))


def retract(modes, direction, step: float):
    """Orthonormal factor of ``modes + step * direction``; ``step == 0`` is the identity."""
    if isinstance(modes, ModeSet):
        if step == 0:
            return modes
        sw = math.sqrt(modes.grid.weight)
        Z = (modes.dense() + step * np.asarray(direction)) * sw
        _check_rank(Z)
        return from_weighted(qr_rows(Z), modes.grid, modes.label)
    Z = np.asarray(modes) + step * np.asarray(direction)
    if step == 0:
        return np.asarray(modes)
    _check_rank(Z)
    return qr_rows(Z)


def _check_rank(Z):
    sv = np.linalg.svd(Z, compute_uv=False)
    if sv[-1] < RANK_TOL * max(1.0, sv[0]):
        raise RankError("retraction collapsed the mode rank")


def _run(objective, Y0: np.ndarray, opts: OptimizerOptions):
    trace = OptimTrace()
    Y = np.array(Y0, dtype=float)
    f, G = objective(Y)
    trace.n_evals += 1
    grad = tangent(Y, G)
    gnorm = float(np.linalg.norm(grad))
    trace.values.append(f)
    trace.grad_norms.append(gnorm)
    trace.steps.append(0.0)
    trace.residuals.append(residual(Y))
    tau = min(1.0, 1.0 / max(gnorm, 1e-300))
    for it in range(opts.max_iters):
        if gnorm <= opts.grad_tol * (1 + abs(f)):
            trace.reason = "converged"
            return Y, f, trace
        ref = max(trace.values[-opts.window:])
        t = float(np.clip(tau, opts.step_min, opts.step_max))
        g2 = gnorm**2
        accepted = False
        for _ in range(opts.max_backtracks):
            try:
                Yn = qr_retract(Y, -grad, t)
                fn, Gn = objective(Yn)
                trace.n_evals += 1
                ok = np.isfinite(fn) and fn <= ref - opts.armijo * t * g2
            except (SingularityError, RankError, np.linalg.LinAlgError):
                ok = False
            if ok:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            trace.reason = "line-search-failure"
            log.debug("line search failed at iteration %d (f=%g)", it, f)
            return Y, f, trace
        gradn = tangent(Yn, Gn)
        s = Yn - Y
        yv = gradn - grad
        sy = abs(float(np.vdot(s, yv)))
        if sy > 0:
            tau = float(np.vdot(s, s)) / sy if it % 2 == 0 else sy / float(np.vdot(yv, yv))
        else:
            tau = opts.step_max
        Y, f, grad = Yn, fn, gradn
        gnorm = float(np.linalg.norm(grad))
        trace.values.append(f)
        trace.grad_norms.append(gnorm)
        trace.steps.append(t)
        trace.residuals.append(residual(Y))
    if gnorm <= opts.grad_tol * (1 + abs(f)):
        trace.reason = "converged"
    return Y, f, trace


def minimize(objective, Y_init, opts: OptimizerOptions | None = None):
    """Minimize ``objective(Y) -> (value, euclidean_gradient)`` over row-orthonormal ``Y``.

    ``Y_init`` may be an array or a :class:`ModeSet`; the result has the same
    type.  With ``opts.restarts > 0`` additional runs start from random
    orthonormal matrices drawn from ``opts.seed`` and the lowest objective
    wins (earlier runs win ties).
    """
    opts = opts or OptimizerOptions()
    as_modes = isinstance(Y_init, ModeSet)
    Y0 = Y_init.weighted() if as_modes else np.asarray(Y_init, dtype=float)
    best = _run(objective, Y0, opts)
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.restarts):
        Yr = qr_rows(rng.standard_normal(Y0.shape))
        try:
            cand = _run(objective, Yr, opts)
        except SingularityError:
            continue
        if cand[1] < best[1]:
            best = cand
    Y, _, trace = best
    if as_modes:
        return from_weighted(Y, Y_init.grid, "optimized"), trace
    return Y, trace
