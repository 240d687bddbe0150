"""Experiment configuration files.

Configs are INI text read with :mod:`configparser` and checked against a
typed schema; unknown sections or keys are errors so typos fail loudly::

    [experiment]
    command = crb-sweep
    seed = 1

    [scenario]
    name = five-points

    [sweep]
    axis = dx
    values = 0.3, 1.0, 3.0

Values are parsed into Python types, and :func:`dumps` writes them back in a
canonical form, so ``loads(dumps(cfg)) == cfg``.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field

from spadeopt.errors import ConfigError
from spadeopt.sources import SCENARIOS

COMMANDS = ("crb-sweep", "optimize-modes", "monte-carlo", "adaptive", "qcrb")
SWEEP_AXES = ("dx", "a", "N")
METHODS = ("direct", "optimal", "adaptive")
WEIGHTS = ("poisson", "none")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _words(text: str) -> tuple:
    return tuple(v for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str):
    return None if text.strip().lower() in ("auto", "") else int(text)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {
        "command": (str, None),
        "seed": (int, 0),
        "threads": (int, 1),
        "label": (str, ""),
    },
    "scenario": {
        "name": (str, None),
        "dx": (float, 0.3),
        "n": (int, 5),
        "amplitudes": (_floats, ()),
        "a": (float, 0.8),
        "extent": (float, 12.0),
        "bins": (int, 8),
        "width": (float, 0.9),
        "contrast": (float, None),
        "f0": (float, 0.15),
        "beta": (float, 0.03),
        "spokes": (int, 8),
    },
    "grid": {
        "spacing": (float, None),
        "margin": (float, 6.0),
    },
    "psf": {
        "sigma": (float, 1.0),
    },
    "modes": {
        "count": (_opt_int, None),
        "max_iters": (int, 3000),
        "grad_tol": (float, 1e-6),
        "restarts": (int, 0),
        "cycles": (int, 1),
        "ridge": (float, 1e-9),
    },
    "sweep": {
        "axis": (str, "dx"),
        "values": (_floats, ()),
    },
    "monte-carlo": {
        "trials": (int, 25),
        "budgets": (_floats, (1e6,)),
        "methods": (_words, METHODS),
    },
    "adaptive": {
        "phases": (int, 3),
        "modes": (_opt_int, 8),
        "budget": (float, 1e6),
        "trials": (int, 5),
        "max_iters": (int, 1000),
    },
    "estimator": {
        "weights": (str, "poisson"),
    },
    "qcrb": {
        "cutoff": (float, 1e-10),
    },
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return "auto"
    return str(value)


@dataclass
class ExperimentConfig:
    """Parsed config: only keys present in the source are stored; defaults fill in on lookup."""

    values: dict = field(default_factory=dict)
    source: str = "<string>"

    def get(self, section: str, key: str):
        try:
            parser, default = SCHEMA[section][key]
        except KeyError:
            raise ConfigError(f"no config field [{section}] {key}") from None
        return self.values.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"no config field [{section}] {key}")
        self.values.setdefault(section, {})[key] = value

    def has(self, section: str, key: str) -> bool:
        return key in self.values.get(section, {})

    @property
    def command(self) -> str:
        return self.get("experiment", "command")

    def scenario_params(self) -> dict:
        name = self.get("scenario", "name")
        keys = {
            "five-points": ("dx", "n", "amplitudes"),
            "uniform-1d": ("a", "extent"),
            "smooth-1d-a": ("a", "extent"),
            "smooth-1d-b": ("a", "extent"),
            "chirp-2d": ("bins", "width", "contrast", "f0", "beta"),
            "siemens-2d": ("bins", "width", "contrast", "spokes"),
        }[name]
        out = {k: self.get("scenario", k) for k in keys if self.has("scenario", k)}
        if "amplitudes" in out:
            out["amplitudes"] = list(out["amplitudes"]) or None
        return out

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and self.values == other.values


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section:
            m = re.match(r"^([^=:#;]+?)\s*[=:]", s)
            if m and m.group(1).strip().lower() == key:
                return i
    return None


def _where(source: str, text: str, section: str, key: str | None = None) -> str:
    line = _line_of(text, section, key)
    loc = f"{source}:{line}" if line else source
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def loads(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values: dict = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{_where(source, text, section)}: unknown section; expected one of {sorted(SCHEMA)}")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{_where(source, text, section, key)}: unknown key; expected one of {sorted(SCHEMA[section])}")
            parser = SCHEMA[section][key][0]
            try:
                values.setdefault(section, {})[key] = _bool(raw) if parser is bool else parser(raw)
            except ValueError as exc:
                raise ConfigError(f"{_where(source, text, section, key)}: {exc}") from None
    cfg = ExperimentConfig(values, source)
    _validate(cfg, text)
    return cfg


def load(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text, str(path))


def dumps(cfg: ExperimentConfig) -> str:
    """Canonical text: schema order, only explicitly set keys."""
    lines = []
    for section, keys in SCHEMA.items():
        present = cfg.values.get(section, {})
        if not present:
            continue
        lines.append(f"[{section}]")
        for key in keys:
            if key in present:
                lines.append(f"{key} = {_fmt(present[key])}")
        lines.append("")
    return "\n".join(lines)


def _validate(cfg: ExperimentConfig, text: str) -> None:
    src = cfg.source

    def fail(section, key, msg):
        raise ConfigError(f"{_where(src, text, section, key)}: {msg}")

    cmd = cfg.get("experiment", "command")
    if cmd is None:
        raise ConfigError(f"{src}: [experiment] command is required")
    if cmd not in COMMANDS:
        fail("experiment", "command", f"unknown command {cmd!r}; expected one of {COMMANDS}")
    if cfg.get("experiment", "seed") < 0:
        fail("experiment", "seed", "seed must be non-negative")
    if cfg.get("experiment", "threads") < 1:
        fail("experiment", "threads", "threads must be >= 1")
    name = cfg.get("scenario", "name")
    if name is None:
        raise ConfigError(f"{src}: [scenario] name is required")
    if name not in SCENARIOS:
        fail("scenario", "name", f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    for key in ("dx", "a", "extent", "width"):
        if cfg.has("scenario", key) and not cfg.get("scenario", key) > 0:
            fail("scenario", key, "must be positive")
    for key in ("n", "bins", "spokes"):
        if cfg.has("scenario", key) and cfg.get("scenario", key) < 1:
            fail("scenario", key, "must be >= 1")
    c = cfg.get("scenario", "contrast")
    if c is not None and not 0 <= c < 1:
        fail("scenario", "contrast", "contrast must lie in [0, 1)")
    if cfg.has("grid", "spacing") and not cfg.get("grid", "spacing") > 0:
        fail("grid", "spacing", "must be positive")
    if cfg.get("grid", "margin") < 0:
        fail("grid", "margin", "must be non-negative")
    if not cfg.get("psf", "sigma") > 0:
        fail("psf", "sigma", "must be positive")
    count = cfg.get("modes", "count")
    if count is not None and count < 1:
        fail("modes", "count", "must be >= 1 or auto")
    if cfg.get("modes", "max_iters") < 0 or cfg.get("modes", "restarts") < 0:
        fail("modes", "max_iters", "iteration and restart counts must be non-negative")
    if cfg.get("modes", "cycles") < 1:
        fail("modes", "cycles", "must be >= 1")
    if cfg.get("sweep", "axis") not in SWEEP_AXES:
        fail("sweep", "axis", f"expected one of {SWEEP_AXES}")
    if any(not v > 0 for v in cfg.get("sweep", "values")):
        fail("sweep", "values", "sweep values must be positive")
    if cmd == "crb-sweep" and not cfg.get("sweep", "values"):
        fail("sweep", "values", "crb-sweep needs at least one sweep value")
    if cfg.get("monte-carlo", "trials") < 1:
        fail("monte-carlo", "trials", "trial count must be >= 1")
    if any(v < 0 for v in cfg.get("monte-carlo", "budgets")) or not cfg.get("monte-carlo", "budgets"):
        fail("monte-carlo", "budgets", "budgets must be a non-empty list of non-negative numbers")
    bad = [m for m in cfg.get("monte-carlo", "methods") if m not in METHODS]
    if bad or not cfg.get("monte-carlo", "methods"):
        fail("monte-carlo", "methods", f"methods must be drawn from {METHODS}")
    if cfg.get("adaptive", "phases") < 1:
        fail("adaptive", "phases", "need at least one phase")
    m = cfg.get("adaptive", "modes")
    if m is not None and m < 1:
        fail("adaptive", "modes", "must be >= 1 or auto")
    if not cfg.get("adaptive", "budget") > 0:
        fail("adaptive", "budget", "must be positive")
    if cfg.get("adaptive", "trials") < 1:
        fail("adaptive", "trials", "trial count must be >= 1")
    if cfg.get("estimator", "weights") not in WEIGHTS:
        fail("estimator", "weights", f"expected one of {WEIGHTS}")
    if not 0 < cfg.get("qcrb", "cutoff") < 1:
        fail("qcrb", "cutoff", "cutoff must lie in (0, 1)")
