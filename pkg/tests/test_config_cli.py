import csv
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spadeopt import config as cfgmod
from spadeopt.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from spadeopt.errors import ConfigError
from spadeopt.plotting import CsvFormatError, plot_csv, read_table
from spadeopt.sources import scenario

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rows(path):
    meta, header, data = read_table(path)
    return meta, header, data


SWEEP = """\
[experiment]
command = crb-sweep
seed = 3

[scenario]
name = five-points

[modes]
count = 6
max_iters = 200

[sweep]
axis = dx
values = 3.0
"""


# --- config ---------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**63),
    dx=st.floats(1e-3, 1e3, allow_nan=False),
    values=st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=5),
    trials=st.integers(1, 1000),
    count=st.one_of(st.none(), st.integers(1, 50)),
)
def test_round_trip(seed, dx, values, trials, count):
    text = (
        f"[experiment]\ncommand = crb-sweep\nseed = {seed}\n"
        f"[scenario]\nname = five-points\ndx = {dx!r}\n"
        f"[modes]\ncount = {'auto' if count is None else count}\n"
        f"[sweep]\nvalues = {', '.join(repr(v) for v in values)}\n"
        f"[monte-carlo]\ntrials = {trials}\n"
    )
    cfg = cfgmod.loads(text)
    again = cfgmod.loads(cfgmod.dumps(cfg))
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert cfg.get("sweep", "values") == tuple(values)


def test_defaults_and_digest_sensitivity():
    a = cfgmod.loads(SWEEP)
    assert a.get("grid", "margin") == 6.0
    assert a.get("qcrb", "cutoff") == 1e-10
    b = cfgmod.loads(SWEEP.replace("seed = 3", "seed = 4"))
    assert a.digest() != b.digest()


@pytest.mark.parametrize(
    "edit,line,needle",
    [
        (("[sweep]", "[swep]"), 12, "unknown section"),
        (("count = 6", "cuont = 6"), 9, "unknown key"),
        (("max_iters = 200", "max_iters = many"), 10, "max_iters"),
        (("values = 3.0", "values = -1.0"), 14, "positive"),
        (("name = five-points", "name = nebula"), 6, "unknown scenario"),
    ],
)
def test_errors_name_the_line(edit, line, needle):
    with pytest.raises(ConfigError) as exc:
        cfgmod.loads(SWEEP.replace(*edit), "x.ini")
    assert f"x.ini:{line}" in str(exc.value)
    assert needle in str(exc.value)


def test_estimator_weights_key():
    assert cfgmod.loads(SWEEP).get("estimator", "weights") == "poisson"
    cfg = cfgmod.loads(SWEEP + "[estimator]\nweights = none\n")
    assert cfg.get("estimator", "weights") == "none"
    with pytest.raises(ConfigError, match="weights"):
        cfgmod.loads(SWEEP + "[estimator]\nweights = sqrt\n")


def test_zero_trials_is_a_config_error():
    text = "[experiment]\ncommand = monte-carlo\n[scenario]\nname = five-points\n[monte-carlo]\ntrials = 0\n"
    with pytest.raises(ConfigError, match="trial"):
        cfgmod.loads(text)


def test_missing_command_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        cfgmod.loads("[scenario]\nname = five-points\n")
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "nope.ini")


def test_shipped_configs_parse():
    names = sorted(f for f in os.listdir(CONFIGS) if f.endswith(".ini"))
    assert names
    for f in names:
        cfgmod.load(os.path.join(CONFIGS, f))


def test_full_siemens_config():
    cfg = cfgmod.load(os.path.join(CONFIGS, "siemens_full.ini"))
    assert cfg.get("scenario", "bins") == 24
    assert cfg.get("adaptive", "modes") == 24**2 + 1
    m = scenario("siemens-2d", **cfg.scenario_params())
    assert m.K == 576


# --- cli ------------------------------------------------------------------

def test_crb_sweep_single_value(tmp_path):
    out = tmp_path / "out"
    assert main(["crb-sweep", "--config", write(tmp_path, SWEEP), "--out", str(out)]) == EXIT_OK
    meta, header, data = rows(out / "crb_sweep.csv")
    assert header[:3] == ["dx", "K", "J"]
    assert data.shape[0] == 1
    assert meta["master_seed"] == "3"
    assert meta["config_hash"] == cfgmod.loads(SWEEP).digest()
    direct, mo, q = data[0, 3:6]
    assert q <= mo <= direct * (1 + 1e-9)
    assert (out / "modes" / "modes_000.csv").exists()


def test_seed_override_and_threads(tmp_path):
    out = tmp_path / "o"
    assert main(["crb-sweep", "--config", write(tmp_path, SWEEP), "--out", str(out), "--seed", "99", "--threads", "1"]) == 0
    assert rows(out / "crb_sweep.csv")[0]["master_seed"] == "99"


def test_bad_config_exits_2(tmp_path, capsys):
    bad = write(tmp_path, SWEEP.replace("axis = dx", "axis = wavelength"))
    assert main(["crb-sweep", "--config", bad, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "axis" in capsys.readouterr().err


def test_command_mismatch_exits_2(tmp_path):
    assert main(["qcrb", "--config", write(tmp_path, SWEEP), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_axis_scenario_mismatch_exits_2(tmp_path):
    text = SWEEP.replace("axis = dx", "axis = a")
    assert main(["crb-sweep", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_truncated_grid_exits_3(tmp_path, capsys):
    text = "[experiment]\ncommand = qcrb\n[scenario]\nname = five-points\n[grid]\nmargin = 0.5\n"
    assert main(["qcrb", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_qcrb_command_reports_residuals(tmp_path):
    text = "[experiment]\ncommand = qcrb\n[scenario]\nname = five-points\ndx = 0.5\n"
    out = tmp_path / "o"
    assert main(["qcrb", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    meta, header, data = rows(out / "qcrb.csv")
    assert float(meta["lyapunov_residual"]) < 1e-8
    assert float(meta["weak_comm_residual"]) < 1e-8
    assert header == ["index", "qcrb_diag"] and data.shape == (5, 2)


def test_monte_carlo_zero_budget(tmp_path):
    text = (
        "[experiment]\ncommand = monte-carlo\n[scenario]\nname = five-points\ndx = 1.0\n"
        "[modes]\ncount = 6\nmax_iters = 50\n[monte-carlo]\ntrials = 1\nbudgets = 0\nmethods = direct, optimal\n"
    )
    out = tmp_path / "o"
    assert main(["monte-carlo", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    _, header, data = rows(out / "monte_carlo.csv")
    c = scenario("five-points", dx=1.0).c
    assert data[0, header.index("mse_direct")] == pytest.approx(np.mean(c**2))
    assert data[0, header.index("mse_optimal")] == pytest.approx(np.mean(c**2))


def test_optimize_modes_outputs(tmp_path):
    text = "[experiment]\ncommand = optimize-modes\n[scenario]\nname = five-points\ndx = 0.5\n[modes]\nmax_iters = 100\n"
    out = tmp_path / "o"
    assert main(["optimize-modes", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    for name in ("modes.csv", "trace.csv", "crb.csv"):
        assert (out / name).exists()
    meta, _, _ = rows(out / "crb.csv")
    assert float(meta["crb_mean"]) <= float(meta["direct_crb_mean"])


def test_adaptive_desk_scale_and_resume(tmp_path):
    cfg = os.path.join(CONFIGS, "siemens_full.ini")
    out = tmp_path / "o"
    assert main(["adaptive", "--config", cfg, "--out", str(out), "--desk-scale", "--seed", "2"]) == 0
    meta, header, data = rows(out / "adaptive.csv")
    assert meta["desk_scale"] == "1" and meta["K"] == "64"
    assert data.shape[0] == 1
    assert (out / "trial_000" / "phase2" / "counts.csv").exists()
    assert (out / "reconstruction.svg").exists()
    # rerun picks up the completed trial instead of recomputing
    before = (out / "trial_000" / "result.csv").read_text()
    assert main(["adaptive", "--config", cfg, "--out", str(out), "--desk-scale", "--seed", "2"]) == 0
    assert (out / "trial_000" / "result.csv").read_text() == before
    assert rows(out / "adaptive.csv")[2][0, 1] == data[0, 1]


# --- plot -----------------------------------------------------------------

def test_plot_header_only(tmp_path):
    p = tmp_path / "crb_sweep.csv"
    p.write_text("dx,K,J,direct_crb,mo_crb,qcrb,mo_over_q,direct_over_mo\n")
    kind, n = plot_csv(p, tmp_path / "e.svg")
    assert kind == "sweep" and n == 0
    assert "<svg" in (tmp_path / "e.svg").read_text()


def test_plot_sweep_and_modes(tmp_path):
    out = tmp_path / "o"
    assert main(["crb-sweep", "--config", write(tmp_path, SWEEP), "--out", str(out)]) == 0
    assert plot_csv(out / "crb_sweep.csv", tmp_path / "s.svg") == ("sweep", 4)
    kind, n = plot_csv(out / "modes" / "modes_000.csv", tmp_path / "m.svg")
    assert kind == "modes" and n == 6
    assert main(["plot", str(out / "crb_sweep.csv"), "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "crb_sweep.svg").exists()


def test_plot_is_byte_deterministic(tmp_path):
    p = tmp_path / "t.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "mse_direct", "mse_optimal", "mse_adaptive", "crb_direct_over_N", "crb_optimal_over_N"])
        w.writerow([1e5, 1e-5, 5e-6, 4e-6, 1e-5, 5e-6])
    plot_csv(p, tmp_path / "a.svg")
    plot_csv(p, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_malformed_csv(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("dx,K\n0.3,five\n")
    with pytest.raises(CsvFormatError, match="row"):
        plot_csv(p, tmp_path / "x.svg")
    assert main(["plot", str(p), "--out", str(tmp_path / "f")]) == EXIT_CONFIG
    assert "bad.csv" in capsys.readouterr().err
