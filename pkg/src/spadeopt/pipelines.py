"""Experiment building blocks used by the CLI and the acceptance tests.

Every function here is a pure function of its arguments (including seeds),
so sweep points and trials can run in any order or in worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from spadeopt.adaptive import AdaptiveOptions, AdaptiveSchedule, run_adaptive
from spadeopt.design import design_modes, direct_modes, floor_coefficients
from spadeopt.estimator import nnls, stack_design
from spadeopt.fisher import ObjectiveConfig, fisher_report
from spadeopt.modes import ModeSet
from spadeopt.psf import ForwardModel, Psf, image_grid_for
from spadeopt.quantum import density_matrix, qfi_and_qcrb
from spadeopt.sampling import MeasurementRecord, sample_counts, trial_seed
from spadeopt.sources import SourceModel
from spadeopt.stiefel import OptimizerOptions


def default_psf(model) -> Psf:
    return Psf("gaussian-1d" if model.basis.dim == 1 else "gaussian-2d")


def forward_for(model, psf: Psf | None = None, spacing: float | None = None, margin: float = 6.0) -> ForwardModel:
    psf = psf or default_psf(model)
    return ForwardModel(image_grid_for(model.basis, spacing, margin), psf, model.basis)


def bound_model(model) -> SourceModel:
    """``model`` with dark coefficients floored, the point at which bounds are evaluated."""
    return SourceModel(model.basis, floor_coefficients(model.c), model.name)


@dataclass
class BoundPoint:
    K: int
    J: int
    direct_crb: float
    mo_crb: float
    qcrb: float
    modes: ModeSet
    trace: object

    @property
    def mo_over_q(self) -> float:
        return self.mo_crb / self.qcrb

    @property
    def direct_over_mo(self) -> float:
        return self.direct_crb / self.mo_crb


def bounds(model, J: int | None = None, opts: OptimizerOptions | None = None, fwd: ForwardModel | None = None,
           cutoff: float | None = None, ridge: float = 1e-9, cycles: int = 1) -> BoundPoint:
    """Direct-imaging CRB, optimized-mode CRB and QCRB (all means over coefficients).

    ``cycles > 1`` warm-restarts the optimizer from its own result, which
    clears the step-size history; on badly conditioned designs this gets
    further than one long run with the same total iteration count.
    """
    model = bound_model(model)
    fwd = fwd or forward_for(model)
    J = model.K + 1 if J is None else J
    opts = opts or OptimizerOptions(max_iters=3000)
    res = None
    for _ in range(max(1, cycles)):
        res = design_modes(fwd, model.c, J, init=None if res is None else res.modes, opts=opts, config=ObjectiveConfig(ridge=ridge))
    mo = fisher_report(fwd.response(res.modes), model.c).crb_mean
    direct = fisher_report(fwd.response(direct_modes(fwd)), model.c).crb_mean
    q = qfi_and_qcrb(density_matrix(model, fwd.psf, fwd.grid), cutoff=cutoff).qcrb_mean
    return BoundPoint(model.K, J, direct, mo, q, res.modes, res.traces[0])


def estimate(fwd: ForwardModel, modes: ModeSet, c_true, N: float, seed, poisson_weights: bool = True) -> np.ndarray:
    """NNLS estimate from one simulated measurement with ``modes`` (zeros when ``N == 0``).

    Rows are weighted by ``1 / sqrt(max(n_j, 1))`` unless ``poisson_weights`` is off.
    """
    c_true = np.asarray(c_true, dtype=float)
    if N == 0:
        return np.zeros_like(c_true)
    M = fwd.response(modes)
    counts = sample_counts(np.clip(M @ c_true, 0, None), N, seed)
    return nnls(stack_design([MeasurementRecord(modes, counts, N)], [M], poisson_weights))


def estimate_mse(fwd: ForwardModel, modes: ModeSet, c_true, N: float, seed, poisson_weights: bool = True) -> float:
    """Mean squared NNLS error of one simulated measurement with ``modes``."""
    return float(np.mean((estimate(fwd, modes, c_true, N, seed, poisson_weights) - np.asarray(c_true)) ** 2))


def adaptive_mse(fwd: ForwardModel, truth, N: float, J_adapt: int, seed, n_phases: int = 3, opts: AdaptiveOptions | None = None):
    sched = AdaptiveSchedule.equal(N, n_phases, J_adapt, seed=int(seed))
    res = run_adaptive(truth, truth.basis, sched, fwd.psf, opts, fwd=fwd)
    return float(np.mean((res.c_hat - truth.c) ** 2)), res


def trial_key(master: int, trial: int) -> int:
    """Integer seed for trial ``trial`` of master seed ``master``."""
    return int(trial_seed(master, trial).generate_state(1, np.uint64)[0])


def parallel_map(fn, items, threads: int = 1) -> list:
    """``[fn(x) for x in items]`` on a process pool; results are in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
