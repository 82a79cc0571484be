"""Figure builders for the solver CLI's CSV outputs.

Pure readers: the scripts never modify their inputs and produce the same
image for the same input files.  Field images truncate the color map to
[-2, 2] to keep the wave pattern outside the scatterer visible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIELD_CLIM = (-2.0, 2.0)

CONVERGENCE_REQUIRED = ("H", "m", "err_energy_rel", "err_l2A_rel", "err_l2_rel")
DECAY_REQUIRED = ("element", "m", "tail_energy", "localization_error", "fitted_beta")
FIELD_REQUIRED = ("x", "y", "re", "im")

NORM_COLUMNS = {
    "energy": "err_energy_rel",
    "l2A": "err_l2A_rel",
    "l2": "err_l2_rel",
}


class PlotInputError(Exception):
    """Missing columns or malformed input files."""


@dataclass
class PlotSpec:
    inputs: list[str | Path]
    kind: str  # convergence | decay | field
    output: str | Path
    norm: str = "energy"
    slope_guides: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if self.kind not in ("convergence", "decay", "field"):
            raise PlotInputError(f"unknown figure kind {self.kind!r}")
        if self.norm not in NORM_COLUMNS:
            raise PlotInputError(
                f"norm must be one of {sorted(NORM_COLUMNS)}, got {self.norm!r}"
            )
        if not self.inputs:
            raise PlotInputError("at least one input file is required")


def read_csv_columns(path: str | Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Load a CSV with a header row, failing fast on missing columns."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotInputError(f"{path} is empty") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise PlotInputError(f"{path} is missing columns {missing}")
        rows = [row for row in reader if row]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


def fit_loglog_slope(H: np.ndarray, err: np.ndarray) -> float:
    """Least-squares slope of log(err) against log(H)."""
    H = np.asarray(H, dtype=float)
    err = np.asarray(err, dtype=float)
    keep = (H > 0) & (err > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(H[keep]), np.log(err[keep]), 1)[0])


def plot_convergence(spec: PlotSpec) -> dict[str, float]:
    """Log-log error histories, one line per (method file, m), plus guides.

    Returns the fitted slope per plotted series, keyed by its legend label.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    slopes: dict[str, float] = {}
    all_H: list[float] = []
    all_e: list[float] = []
    col = NORM_COLUMNS[spec.norm]
    markers = "os^vDP*X"
    series_idx = 0
    for path in spec.inputs:
        data = read_csv_columns(path, CONVERGENCE_REQUIRED)
        method = Path(path).stem
        for m in np.unique(data["m"]):
            sel = data["m"] == m
            H = data["H"][sel]
            err = data[col][sel]
            order = np.argsort(H)[::-1]
            H, err = H[order], err[order]
            label = method if (m == 0 and method.startswith("p1")) else f"{method} m={int(m)}"
            slope = fit_loglog_slope(H, err)
            slopes[label] = slope
            if np.isfinite(slope):
                label += f" (slope {slope:.2f})"
            ax.loglog(
                H, err, marker=markers[series_idx % len(markers)], label=label
            )
            series_idx += 1
            all_H += H.tolist()
            all_e += err.tolist()
    if all_H:
        H_ref = np.array([max(all_H), min(all_H)])
        anchor = min(e for e in all_e if e > 0) if any(e > 0 for e in all_e) else 1.0
        for p in spec.slope_guides:
            guide = anchor * (H_ref / H_ref[1]) ** p
            ax.loglog(H_ref, guide, "k--", linewidth=0.8)
            ax.annotate(
                f"slope {p}", (H_ref[0], guide[0]), fontsize=8, color="0.3",
                textcoords="offset points", xytext=(2, 2),
            )
    ax.set_xlabel("H")
    ax.set_ylabel(f"relative error ({spec.norm})")
    ax.invert_xaxis()
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return slopes


def plot_decay(spec: PlotSpec) -> Path:
    """Semilog tail energies and localization errors against the layer count."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for path in spec.inputs:
        data = read_csv_columns(path, DECAY_REQUIRED)
        name = Path(path).stem
        order = np.argsort(data["m"])
        m = data["m"][order]
        beta = data["fitted_beta"][order][0]
        for column, style in (("tail_energy", "o-"), ("localization_error", "s--")):
            vals = data[column][order]
            pos = vals > 0
            ax.semilogy(
                m[pos], vals[pos], style,
                label=f"{name} {column} (beta {beta:.3f})",
            )
    ax.set_xlabel("patch layers m")
    ax.set_ylabel("energy seminorm")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return Path(spec.output)


def _is_cells_file(path: Path) -> bool:
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().split()
    if len(first) != 3:
        return False
    try:
        [int(t) for t in first]
    except ValueError:
        return False
    return True


def read_cells_grid(path: str | Path) -> np.ndarray:
    """0/1 inclusion flags of the coefficient export, row 0 = bottom band."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    _, rows, cols = (int(t) for t in lines[0].split())
    grid = np.array([[int(t) for t in ln.split()] for ln in lines[1:]])
    if grid.shape != (rows, cols):
        raise PlotInputError(f"{path}: grid shape {grid.shape} mismatches header")
    return grid


def plot_field(spec: PlotSpec) -> Path:
    """Real-part heat map of a nodal field CSV, or a two-tone coefficient image."""
    if len(spec.inputs) != 1:
        raise PlotInputError("field figures take exactly one input file")
    path = Path(spec.inputs[0])
    fig, ax = plt.subplots(figsize=(5.4, 4.8))
    if _is_cells_file(path):
        grid = read_cells_grid(path)
        im = ax.imshow(
            grid, origin="lower", extent=(0, 1, 0, 1), cmap="binary",
            interpolation="none",
        )
    else:
        data = read_csv_columns(path, FIELD_REQUIRED)
        xs = np.unique(data["x"])
        ys = np.unique(data["y"])
        if xs.size * ys.size != data["x"].size:
            raise PlotInputError(f"{path}: nodes do not form a tensor grid")
        # node order is row-major in y, matching the solver export
        re = data["re"].reshape(ys.size, xs.size)
        im = ax.imshow(
            re, origin="lower", extent=(0, 1, 0, 1), cmap="RdBu_r",
            vmin=FIELD_CLIM[0], vmax=FIELD_CLIM[1], interpolation="bilinear",
        )
        fig.colorbar(im, ax=ax, label="Re u")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    return Path(spec.output)
