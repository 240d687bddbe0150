"""Command-line experiment runner.

    spadeopt crb-sweep --config sweep.ini --out results/
    spadeopt plot results/crb_sweep.csv --out figures/

Exit status: 0 on success, 2 for configuration or input errors, 3 for
numerical failures (singular Fisher matrices, bad quadrature, rank loss).
"""

from __future__ import annotations

import argparse
import csv
import functools
import logging
import os
import sys

import numpy as np

from spadeopt import __version__
from spadeopt import config as cfgmod
from spadeopt.adaptive import AdaptiveOptions
from spadeopt.design import design_modes, direct_modes
from spadeopt.errors import ConfigError, InvalidArgument, SpadeError
from spadeopt.fisher import ObjectiveConfig, fisher_report
from spadeopt.modes import write_csv as write_modes_csv
from spadeopt.pipelines import (
    adaptive_mse,
    bound_model,
    bounds,
    estimate,
    estimate_mse,
    forward_for,
    parallel_map,
    trial_key,
)
from spadeopt.plotting import bin_maps_svg, plot_csv, profiles_svg
from spadeopt.psf import Psf
from spadeopt.quantum import density_matrix, lyapunov_residual, qfi_and_qcrb, sld
from spadeopt.sources import scenario
from spadeopt.stiefel import OptimizerOptions

log = logging.getLogger("spadeopt")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
DESK_BINS, DESK_TRIALS, DESK_ITERS = 8, 5, 300


class Run:
    """Resolved settings for one invocation (config plus command-line overrides)."""

    def __init__(self, cfg: cfgmod.ExperimentConfig, out: str, seed: int | None, threads: int | None, desk: bool):
        self.cfg = cfg
        self.out = out
        self.seed = cfg.get("experiment", "seed") if seed is None else seed
        self.threads = cfg.get("experiment", "threads") if threads is None else threads
        self.desk = desk
        os.makedirs(out, exist_ok=True)

    def provenance(self) -> dict:
        return {
            "config_hash": self.cfg.digest(),
            "master_seed": self.seed,
            "version": __version__,
            "command": self.cfg.command,
            "desk_scale": int(self.desk),
        }

    def path(self, *parts) -> str:
        p = os.path.join(self.out, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def stamp(self, path, extra: dict | None = None) -> None:
        """Prepend provenance comment rows to an existing CSV."""
        with open(path) as fh:
            body = fh.read()
        head = {**self.provenance(), **(extra or {})}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for k, v in head.items():
                w.writerow([f"# {k}", v])
            fh.write(body)

    def model(self, **override):
        params = {**self.cfg.scenario_params(), **override}
        if self.desk and self.cfg.get("scenario", "name").endswith("-2d"):
            params["bins"] = min(self.cfg.get("scenario", "bins"), DESK_BINS)
        return scenario(self.cfg.get("scenario", "name"), **params)

    def psf(self, model) -> Psf:
        return Psf("gaussian-1d" if model.basis.dim == 1 else "gaussian-2d", self.cfg.get("psf", "sigma"))

    def forward(self, model):
        return forward_for(model, self.psf(model), self.cfg.get("grid", "spacing"), self.cfg.get("grid", "margin"))

    def optimizer(self, max_iters: int | None = None) -> OptimizerOptions:
        iters = self.cfg.get("modes", "max_iters") if max_iters is None else max_iters
        if self.desk:
            iters = min(iters, DESK_ITERS)
        return OptimizerOptions(max_iters=iters, grad_tol=self.cfg.get("modes", "grad_tol"),
                                restarts=self.cfg.get("modes", "restarts"), seed=self.seed)

    def objective(self) -> ObjectiveConfig:
        return ObjectiveConfig(ridge=self.cfg.get("modes", "ridge"))

    @property
    def weighted(self) -> bool:
        return self.cfg.get("estimator", "weights") == "poisson"

    def adaptive_options(self) -> AdaptiveOptions:
        return AdaptiveOptions(optimizer=self.optimizer(self.cfg.get("adaptive", "max_iters")),
                               objective=self.objective(), poisson_weights=self.weighted)

    def trials(self, section: str) -> int:
        n = self.cfg.get(section, "trials")
        return min(n, DESK_TRIALS) if self.desk else n


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _sweep_point(run: Run, value: float):
    axis = run.cfg.get("sweep", "axis")
    model = run.model(**{axis: value})
    fwd = run.forward(model)
    J = run.cfg.get("modes", "count")
    return bounds(model, J, run.optimizer(), fwd, run.cfg.get("qcrb", "cutoff"),
                  run.cfg.get("modes", "ridge"), 1 if run.desk else run.cfg.get("modes", "cycles"))


def cmd_crb_sweep(run: Run) -> str:
    axis = run.cfg.get("sweep", "axis")
    name = run.cfg.get("scenario", "name")
    if axis == "N" or (axis == "dx") != (name == "five-points"):
        raise ConfigError(f"{run.cfg.source}: [sweep] axis {axis!r} does not apply to scenario {name!r}")
    values = run.cfg.get("sweep", "values")
    points = parallel_map(functools.partial(_sweep_point, run), values, run.threads)
    rows = []
    for i, (v, p) in enumerate(zip(values, points)):
        rows.append([v, p.K, p.J, p.direct_crb, p.mo_crb, p.qcrb, p.mo_over_q, p.direct_over_mo])
        mpath = run.path("modes", f"modes_{i:03d}.csv")
        write_modes_csv(p.modes, mpath)
        run.stamp(mpath, {axis: v})
        log.info("sweep %s=%g: direct %.4g  MO %.4g  Q %.4g", axis, v, p.direct_crb, p.mo_crb, p.qcrb)
    path = run.path("crb_sweep.csv")
    _write_rows(path, [axis, "K", "J", "direct_crb", "mo_crb", "qcrb", "mo_over_q", "direct_over_mo"], rows)
    run.stamp(path)
    return path


def cmd_optimize_modes(run: Run) -> str:
    model = bound_model(run.model())
    fwd = run.forward(model)
    J = run.cfg.get("modes", "count") or model.K + 1
    res = design_modes(fwd, model.c, J, opts=run.optimizer(), config=run.objective())
    direct = fisher_report(fwd.response(direct_modes(fwd)), model.c)
    report = fisher_report(fwd.response(res.modes), model.c)
    write_modes_csv(res.modes, run.path("modes.csv"))
    run.stamp(run.path("modes.csv"))
    res.traces[0].write_csv(run.path("trace.csv"))
    run.stamp(run.path("trace.csv"))
    path = run.path("crb.csv")
    report.write_csv(path, {"direct_crb_mean": repr(direct.crb_mean)})
    run.stamp(path)
    return path


def cmd_qcrb(run: Run) -> str:
    model = bound_model(run.model())
    fwd = run.forward(model)
    cutoff = run.cfg.get("qcrb", "cutoff")
    state = density_matrix(model, fwd.psf, fwd.grid)
    slds = [sld(state, k, cutoff) for k in range(model.K)]
    lyap = max(lyapunov_residual(state, k, L, cutoff) for k, L in enumerate(slds))
    rep = qfi_and_qcrb(state, cutoff=cutoff)
    path = run.path("qcrb.csv")
    rep.write_csv(path, {"lyapunov_residual": repr(lyap), "cutoff": repr(cutoff)})
    run.stamp(path)
    return path


def _mc_trial(run: Run, fwd, model, designs, methods, N, J_adapt, trial):
    key = trial_key(run.seed, trial)
    out = {}
    for m in methods:
        if N == 0:
            out[m] = float(np.mean(model.c**2))
        elif m == "adaptive":
            out[m] = adaptive_mse(fwd, model, N, J_adapt, key, run.cfg.get("adaptive", "phases"), run.adaptive_options())[0]
        else:
            out[m] = estimate_mse(fwd, designs[m], model.c, N, key, run.weighted)
    return out


def cmd_monte_carlo(run: Run) -> str:
    model = run.model()
    fwd = run.forward(model)
    methods = run.cfg.get("monte-carlo", "methods")
    trials = run.trials("monte-carlo")
    fmodel = bound_model(model)
    designs = {"direct": direct_modes(fwd)}
    J = run.cfg.get("modes", "count") or model.K + 1
    designs["optimal"] = design_modes(fwd, fmodel.c, J, opts=run.optimizer(), config=run.objective()).modes
    crbs = {m: fisher_report(fwd.response(designs[m]), fmodel.c).crb_mean for m in ("direct", "optimal")}
    J_adapt = run.cfg.get("adaptive", "modes") or model.K + 1
    rows = []
    for N in run.cfg.get("monte-carlo", "budgets"):
        fn = functools.partial(_mc_trial, run, fwd, model, designs, methods, N, J_adapt)
        per = parallel_map(fn, range(trials), run.threads)
        mse = {m: float(np.mean([p[m] for p in per])) for m in methods}
        row = [N] + [mse.get(m, float("nan")) for m in ("direct", "optimal", "adaptive")]
        row += [crbs[m] / N if N > 0 else float("inf") for m in ("direct", "optimal")]
        rows.append(row)
        log.info("N=%g: %s", N, mse)
    path = run.path("monte_carlo.csv")
    _write_rows(path, ["N", "mse_direct", "mse_optimal", "mse_adaptive", "crb_direct_over_N", "crb_optimal_over_N"], rows)
    run.stamp(path, {"trials": trials})
    return path


def _adaptive_trial(run: Run, fwd, model, J_adapt, trial):
    tdir = run.path(f"trial_{trial:03d}", "result.csv")
    if os.path.exists(tdir):  # resume: completed trial
        with open(tdir) as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        vals = dict(zip(rows[0], rows[1]))
        c = [float(v) for v in vals["c_hat_adaptive"].split()]
        cd = [float(v) for v in vals["c_hat_direct"].split()]
        log.info("trial %d: reusing completed result", trial)
        return float(vals["mse_direct"]), float(vals["mse_adaptive"]), np.array(cd), np.array(c)
    key = trial_key(run.seed, trial)
    N = run.cfg.get("adaptive", "budget")
    mse_a, res = adaptive_mse(fwd, model, N, J_adapt, key, run.cfg.get("adaptive", "phases"), run.adaptive_options())
    c_d = estimate(fwd, direct_modes(fwd), model.c, N, key, run.weighted)
    mse_d = float(np.mean((c_d - model.c) ** 2))
    res.write(os.path.dirname(tdir), run.provenance())
    with open(tdir, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mse_direct", "mse_adaptive", "c_hat_direct", "c_hat_adaptive"])
        w.writerow([repr(mse_d), repr(mse_a), " ".join(repr(float(v)) for v in c_d), " ".join(repr(float(v)) for v in res.c_hat)])
    run.stamp(tdir)
    log.info("trial %d: direct MSE %.4g  adaptive MSE %.4g", trial, mse_d, mse_a)
    return mse_d, mse_a, c_d, res.c_hat


def cmd_adaptive(run: Run) -> str:
    model = run.model()
    fwd = run.forward(model)
    J_adapt = run.cfg.get("adaptive", "modes") or model.K + 1
    if run.desk:
        J_adapt = min(J_adapt, model.K + 1)
    trials = run.trials("adaptive")
    results = parallel_map(functools.partial(_adaptive_trial, run, fwd, model, J_adapt), range(trials), run.threads)
    rows = [[t, d, a, a / d if d > 0 else float("inf")] for t, (d, a, _, _) in enumerate(results)]
    path = run.path("adaptive.csv")
    _write_rows(path, ["trial", "mse_direct", "mse_adaptive", "ratio"], rows)
    mean_d = float(np.mean([r[1] for r in rows]))
    mean_a = float(np.mean([r[2] for r in rows]))
    run.stamp(path, {"J_adapt": J_adapt, "K": model.K, "mse_ratio": repr(mean_a / mean_d if mean_d > 0 else float("inf"))})
    _, _, c_d, c_a = results[0]
    maps = {"truth": model.c, "direct": c_d, "adaptive": c_a}
    if model.basis.dim == 2:
        bin_maps_svg(maps, model.basis.bins_per_axis, run.path("reconstruction.svg"))
    else:
        profiles_svg(model.basis.centers, maps, run.path("reconstruction.svg"))
    return path


def cmd_plot(paths, out: str) -> list:
    os.makedirs(out, exist_ok=True)
    written = []
    for p in paths:
        svg = os.path.join(out, os.path.splitext(os.path.basename(p))[0] + ".svg")
        plot_csv(p, svg)
        written.append(svg)
    return written


COMMANDS = {
    "crb-sweep": cmd_crb_sweep,
    "optimize-modes": cmd_optimize_modes,
    "monte-carlo": cmd_monte_carlo,
    "adaptive": cmd_adaptive,
    "qcrb": cmd_qcrb,
}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spadeopt", description="Cramér-Rao-optimal spatial-mode imaging experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=f"run the {name} pipeline")
        s.add_argument("--config", required=True, help="experiment config (INI)")
        s.add_argument("--out", default="out", help="output directory [out]")
        s.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        s.add_argument("--threads", type=_positive_int, help="worker processes (overrides the config)")
        s.add_argument("--desk-scale", action="store_true", help="cap bins, modes, trials and iterations for a laptop run")
        s.add_argument("-v", "--verbose", action="store_true")
    s = sub.add_parser("plot", help="render CLI CSV outputs as SVG")
    s.add_argument("csv", nargs="+")
    s.add_argument("--out", default="figures")
    s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "plot":
            for svg in cmd_plot(args.csv, args.out):
                print(svg)
            return EXIT_OK
        cfg = cfgmod.load(args.config)
        if cfg.command != args.command:
            raise ConfigError(f"{args.config}: config is for {cfg.command!r}, not {args.command!r}")
        run = Run(cfg, args.out, args.seed, args.threads, args.desk_scale)
        print(COMMANDS[args.command](run))
        return EXIT_OK
    except (ConfigError, InvalidArgument, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, SpadeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
