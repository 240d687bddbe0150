"""SVG figures from the package's CSV outputs (matplotlib, Agg backend).

The plot kind is inferred from the CSV header, so ``plot`` works on any
file written by the CLI.  Output is deterministic for a given input file.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from spadeopt.errors import InvalidArgument  # noqa: E402

plt.rcParams["svg.hashsalt"] = "spadeopt"


class CsvFormatError(InvalidArgument):
    pass


def read_table(path) -> tuple[dict, list, np.ndarray]:
    """``(metadata, column names, float rows)``; ``#`` lines are metadata."""
    meta, header, rows = {}, None, []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if row[0].startswith("#"):
                meta[row[0].lstrip("# ").strip()] = row[1] if len(row) > 1 else ""
                continue
            if header is None:
                header = [c.strip() for c in row]
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}")
            try:
                rows.append([_num(v) for v in row])
            except ValueError:
                raise CsvFormatError(f"{path}: row {lineno} has a non-numeric field: {row}") from None
    if header is None:
        raise CsvFormatError(f"{path}: no header row")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return meta, header, data


def _num(v: str) -> float:
    v = v.strip()
    if v.lower() in ("true", "false"):
        return float(v.lower() == "true")
    return float(v)


def _kind(header: list) -> str:
    if "mo_crb" in header:
        return "sweep"
    if header[0] == "x" and all(h.startswith("mode_") for h in header[1:] if h != "y"):
        return "modes"
    if "objective" in header:
        return "trace"
    if any(h.startswith("mse_") for h in header):
        return "monte-carlo"
    return "generic"


def _positive(ax, data) -> None:
    if data.size and np.all(data[np.isfinite(data)] > 0):
        ax.set_yscale("log")


def plot_csv(path, out_svg) -> tuple[str, int]:
    """Render ``path`` to ``out_svg``; returns the inferred plot kind and the number of series drawn."""
    _, header, data = read_table(path)
    kind = _kind(header)
    fig, ax = plt.subplots(figsize=(6, 4))
    if data.shape[0] == 0:
        ax.set_xlabel(header[0])
    elif kind == "sweep":
        x = data[:, 0]
        for name in ("direct_crb", "mo_crb", "qcrb", "mo_over_q"):
            if name in header:
                ax.plot(x, data[:, header.index(name)], marker="o", label=name)
        ax.set_xlabel(header[0])
        ax.set_yscale("log")
        ax.legend()
    elif kind == "modes":
        x = data[:, 0]
        for j, name in enumerate(header[1:]):
            ax.plot(x, data[:, j + 1], label=name)
        ax.set_xlabel("x / sigma")
        ax.set_ylabel("mode amplitude")
        if len(header) <= 12:
            ax.legend(fontsize="small")
    elif kind == "trace":
        ax.plot(data[:, 0], data[:, header.index("objective")])
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective")
        _positive(ax, data[:, header.index("objective")])
    elif kind == "monte-carlo":
        x = data[:, 0]
        for j, name in enumerate(header[1:], 1):
            if name.startswith(("mse_", "crb_")):
                ax.plot(x, data[:, j], marker="o", label=name)
        ax.set_xlabel(header[0])
        if np.all(x > 0):
            ax.set_xscale("log")
        _positive(ax, data[:, 1:])
        ax.legend()
    else:
        for j, name in enumerate(header[1:], 1):
            ax.plot(data[:, 0], data[:, j], label=name)
        ax.set_xlabel(header[0])
        if len(header) > 1:
            ax.legend()
    n_series = len(ax.get_lines())
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    return kind, n_series


def bin_maps_svg(maps: dict, bins: int, out_svg) -> None:
    """Side-by-side images of 2D bin coefficient vectors (x fastest)."""
    n = len(maps)
    fig, axes = plt.subplots(1, n, figsize=(3 * n, 3), squeeze=False)
    for ax, (title, c) in zip(axes[0], maps.items()):
        ax.imshow(np.asarray(c).reshape(bins, bins), origin="lower", cmap="gray")
        ax.set_title(title, fontsize="small")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)


def profiles_svg(x, profiles: dict, out_svg) -> None:
    """1D coefficient profiles on one set of axes."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, c in profiles.items():
        ax.step(x, c, where="mid", label=name)
    ax.set_xlabel("x / sigma")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)

