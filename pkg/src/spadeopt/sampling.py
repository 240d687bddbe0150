"""Seeded Poisson photon counts.

Counts come from numpy's ``Generator`` on the PCG64 bit generator.  Its
Poisson sampler uses multiplication-based inversion for means below 10 and
Hörmann's PTRS transformed rejection above, so results are reproducible
for a given seed within this implementation on any platform.

Per-trial streams are derived with ``SeedSequence(master).spawn``-style
keys: trial ``i`` of master seed ``s`` uses ``SeedSequence(s, spawn_key=(i,))``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from spadeopt.errors import InvalidArgument


def trial_seed(master: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(int(trial),))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def sample_counts(P, N: float, seed) -> np.ndarray:
    """Independent Poisson counts with means ``N * P``."""
    P = np.asarray(P, dtype=float)
    if np.any(P < 0) or not np.all(np.isfinite(P)):
        raise InvalidArgument("detection probabilities must be finite and non-negative")
    if N < 0:
        raise InvalidArgument("photon budget must be non-negative")
    return make_rng(seed).poisson(N * P).astype(np.int64)


@dataclass
class MeasurementRecord:
    modes: object  # ModeSet
    counts: np.ndarray
    budget: float
    seed: object = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if np.any(self.counts < 0) or not np.all(np.isfinite(self.counts)):
            raise InvalidArgument("counts must be finite and non-negative")


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record", "label", "budget", "mode", "count"])
        for r, rec in enumerate(records):
            for j, n in enumerate(rec.counts):
                w.writerow([r, rec.modes.label, repr(float(rec.budget)), j, int(n)])
