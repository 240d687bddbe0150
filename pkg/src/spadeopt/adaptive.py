"""Adaptive measurement without prior knowledge of the source.

Phase 0 is direct imaging.  After every phase the source is re-estimated by
NNLS over *all* records so far, and the next phase's modes minimize

    tr(W [sum_m N_m I(c_est; Phi_m) + N_next I(c_est; Phi)]^-1)

where ``c_est`` is the floored, renormalized estimate.  The ground truth is
only ever seen by the photon source that produces counts.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from spadeopt.design import FLOOR_REL, direct_modes, floor_coefficients, state_modes
from spadeopt.errors import InvalidArgument, RankError, SingularityError
from spadeopt.estimator import nnls, stack_design, write_estimate_csv
from spadeopt.fisher import CrbObjective, ObjectiveConfig, fisher_matrix, inverse_from_factor, sqrt_factor
from spadeopt.modes import ModeSet, write_csv as write_modes_csv
from spadeopt.psf import ForwardModel, Psf, image_grid_for
from spadeopt.sampling import MeasurementRecord, sample_counts, trial_seed, write_records_csv
from spadeopt.stiefel import OptimizerOptions, minimize

log = logging.getLogger(__name__)

DIRECT = "direct"
OPTIMIZE = "optimize"


@dataclass
class Phase:
    budget: float
    policy: str = OPTIMIZE


@dataclass
class AdaptiveSchedule:
    phases: list
    J_adapt: int = 8
    seed: int = 0

    def __post_init__(self):
        if not self.phases:
            raise InvalidArgument("schedule needs at least one phase")
        for p in self.phases:
            if not p.budget > 0:
                raise InvalidArgument("phase budgets must be positive")
            if p.policy not in (DIRECT, OPTIMIZE):
                raise InvalidArgument(f"unknown phase policy {p.policy!r}")
        if self.phases[0].policy != DIRECT:
            raise InvalidArgument("the first phase must be direct imaging")
        if self.J_adapt < 1:
            raise InvalidArgument("J_adapt must be positive")

    @classmethod
    def equal(cls, total: float, n_phases: int = 3, J_adapt: int = 8, seed: int = 0) -> "AdaptiveSchedule":
        """``n_phases`` equal budgets summing to ``total``; phase 0 direct, the rest optimized."""
        if n_phases < 1:
            raise InvalidArgument("schedule needs at least one phase")
        phases = [Phase(total / n_phases, DIRECT if i == 0 else OPTIMIZE) for i in range(n_phases)]
        return cls(phases, J_adapt, seed)

    @property
    def total(self) -> float:
        return float(sum(p.budget for p in self.phases))


@dataclass
class AdaptiveOptions:
    optimizer: OptimizerOptions = field(default_factory=lambda: OptimizerOptions(max_iters=1500))
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    floor: float = FLOOR_REL
    poisson_weights: bool = True
    image_spacing: float | None = None


@dataclass
class PhaseResult:
    record: MeasurementRecord
    modes: ModeSet
    response: np.ndarray
    c_est: np.ndarray  # raw NNLS estimate after this phase
    optimizer_failed: bool = False
    trace: object = None


@dataclass
class AdaptiveResult:
    phases: list
    c_hat: np.ndarray
    crb_diag: np.ndarray  # estimated CRB per coefficient, total budget, at the floored final estimate
    crb_mean: float
    floor: float

    @property
    def records(self) -> list:
        return [p.record for p in self.phases]

    def write(self, directory, header: dict | None = None) -> None:
        """Per-phase modes, counts and estimates plus a summary CSV."""
        os.makedirs(directory, exist_ok=True)
        for i, ph in enumerate(self.phases):
            d = os.path.join(directory, f"phase{i}")
            os.makedirs(d, exist_ok=True)
            if not ph.modes.is_sparse:  # pixel bases are implied by the grid
                write_modes_csv(ph.modes, os.path.join(d, "modes.csv"))
            write_records_csv([ph.record], os.path.join(d, "counts.csv"))
            write_estimate_csv(ph.c_est, os.path.join(d, "estimate.csv"))
        with open(os.path.join(directory, "summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            for key, val in (header or {}).items():
                w.writerow([f"# {key}", val])
            w.writerow(["# c_est_floor_rel", repr(self.floor)])
            w.writerow(["# estimated_crb_mean", repr(self.crb_mean)])
            # estimate_all_zero: the next design used a uniform stand-in for c_est
            w.writerow(["phase", "label", "budget", "modes", "optimizer_failed", "estimate_all_zero"])
            for i, ph in enumerate(self.phases):
                w.writerow([i, ph.modes.label, repr(float(ph.record.budget)), ph.modes.J, int(ph.optimizer_failed),
                            int(not np.any(ph.c_est > 0))])


def accumulate_fisher(records, c_est, responses) -> np.ndarray:
    """``sum_m N_m I(c_est; Phi_m)`` with ``c_est`` renormalized to unit flux."""
    c = np.asarray(c_est, dtype=float)
    if np.any(c < 0):
        raise InvalidArgument("c_est must be non-negative")
    if not np.any(c > 0):
        raise InvalidArgument("all-zero c_est: Fisher information is undefined")
    c = c / c.sum()
    records, responses = list(records), list(responses)
    if len(records) != len(responses):
        raise InvalidArgument("records and response matrices differ in number")
    I = np.zeros((c.size, c.size))
    for rec, M in zip(records, responses):
        I += rec.budget * fisher_matrix(M, c)
    return 0.5 * (I + I.T)


def _stacked_factor(records, responses, c, scale: float) -> np.ndarray:
    """Square-root factor of ``accumulate_fisher(...) / scale``."""
    return np.vstack([np.sqrt(rec.budget / scale) * sqrt_factor(M, c) for rec, M in zip(records, responses)])


class PhotonSource:
    """Counts from a ground-truth model; the only holder of the truth."""

    def __init__(self, truth, fwd: ForwardModel):
        self._c = np.asarray(truth.c, dtype=float)
        self._fwd = fwd

    def __call__(self, modes: ModeSet, budget: float, seed) -> np.ndarray:
        P = self._fwd.response(modes) @ self._c
        return sample_counts(np.clip(P, 0, None), budget, seed)


def run_adaptive(truth, basis, schedule: AdaptiveSchedule, psf: Psf | None = None, opts: AdaptiveOptions | None = None, measure=None, fwd=None) -> AdaptiveResult:
    """Execute ``schedule`` against ``truth`` (or a custom ``measure(modes, N, seed)``)."""
    psf = psf or Psf("gaussian-1d" if basis.dim == 1 else "gaussian-2d")
    opts = opts or AdaptiveOptions()
    if fwd is None:
        fwd = ForwardModel(image_grid_for(basis, opts.image_spacing), psf, basis)
    if measure is None:
        if truth is None:
            raise InvalidArgument("either a ground truth or a measurement callable is required")
        measure = PhotonSource(truth, fwd)
    return _adapt(measure, fwd, schedule, opts)


def _adapt(measure, fwd: ForwardModel, schedule: AdaptiveSchedule, opts: AdaptiveOptions) -> AdaptiveResult:
    records, responses, phases = [], [], []
    modes = direct_modes(fwd)
    failed, trace = False, None
    for i, phase in enumerate(schedule.phases):
        if phase.policy == DIRECT:
            modes, failed, trace = direct_modes(fwd), False, None
        counts = measure(modes, phase.budget, trial_seed(schedule.seed, i))
        records.append(MeasurementRecord(modes, counts, phase.budget, (schedule.seed, i)))
        responses.append(fwd.response(modes))
        c_est = nnls(stack_design(records, responses, opts.poisson_weights))
        phases.append(PhaseResult(records[-1], modes, responses[-1], c_est, failed, trace))
        if i + 1 < len(schedule.phases) and schedule.phases[i + 1].policy == OPTIMIZE:
            modes, failed, trace = _next_modes(fwd, records, responses, c_est, schedule, i + 1, modes, opts)
            if failed:
                log.warning("phase %d: mode optimization failed, reusing previous modes", i + 1)
    c_hat = phases[-1].c_est
    c_f = _floored(c_hat, opts.floor, fwd.K)
    try:
        inv, _ = inverse_from_factor(_stacked_factor(records, responses, c_f, 1.0))
        crb_diag = np.diag(inv).copy()
    except SingularityError:
        crb_diag = np.full(fwd.K, np.inf)
    return AdaptiveResult(phases, c_hat, crb_diag, float(np.mean(crb_diag)), opts.floor)


def _floored(c, rel, K):
    if not np.any(np.asarray(c) > 0):
        return np.full(K, 1.0 / K)  # uniform stand-in for an all-zero estimate
    return floor_coefficients(c, rel)


def _next_modes(fwd, records, responses, c_est, schedule, index, previous, opts):
    c_f = _floored(c_est, opts.floor, fwd.K)
    J = schedule.J_adapt
    total = schedule.total
    prior = _stacked_factor(records, responses, c_f, total)
    obj = CrbObjective(fwd, c_f, opts.objective, budget=schedule.phases[index].budget / total, prior_factor=prior)
    init = previous if (previous.J == J and previous.label == "adaptive") else state_modes(fwd, J, c=c_f)
    try:
        modes, trace = minimize(obj, init, opts.optimizer)
    except (SingularityError, RankError, np.linalg.LinAlgError) as exc:
        log.debug("optimizer failed: %s", exc)
        return previous, True, None
    if trace.reason == "line-search-failure" and trace.iterations == 0:
        return previous, True, trace
    return modes.relabel("adaptive"), False, trace
