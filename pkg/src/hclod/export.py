"""CSV and legacy VTK writers.

All files use UTF-8, '.' decimals, '\n' newlines, and a fixed column order;
identical inputs produce identical bytes (wall-clock columns excepted).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .analysis import ErrorReport
from .errors import ConfigurationError
from .mesh import StructuredTriMesh

CONVERGE_COLUMNS = (
    "H",
    "m",
    "err_energy_rel",
    "err_l2A_rel",
    "err_l2_rel",
    "eoc_energy",
    "eoc_l2A",
    "dim_VH",
    "wall_time_s",
)

DECAY_COLUMNS = ("element", "m", "tail_energy", "localization_error", "fitted_beta")

FIELD_COLUMNS = ("x", "y", "re", "im")


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def write_convergence_csvs(outdir: str | Path, report: ErrorReport) -> list[Path]:
    """One CSV per method; EOC columns relate consecutive H within each m."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    methods = []
    for method, _ in report.methods_and_ms():
        if method not in methods:
            methods.append(method)
    for method in methods:
        ms = sorted({m for mth, m in report.methods_and_ms() if mth == method})
        lines = [",".join(CONVERGE_COLUMNS)]
        for m in ms:
            rows = report.series(method, m)
            for i, row in enumerate(rows):
                if i == 0:
                    eoc_e = eoc_a = float("nan")
                else:
                    prev = rows[i - 1]
                    ratio = np.log(prev.H / row.H)
                    eoc_e = np.log(prev.err_energy_rel / row.err_energy_rel) / ratio
                    eoc_a = np.log(prev.err_l2A_rel / row.err_l2A_rel) / ratio
                lines.append(
                    ",".join(
                        [
                            _fmt(row.H),
                            str(row.m),
                            _fmt(row.err_energy_rel),
                            _fmt(row.err_l2A_rel),
                            _fmt(row.err_l2_rel),
                            _fmt(eoc_e),
                            _fmt(eoc_a),
                            str(row.dim_VH),
                            _fmt(row.wall_time_s),
                        ]
                    )
                )
        path = outdir / f"{method}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written


def write_field_csv(path: str | Path, mesh: StructuredTriMesh, values: np.ndarray) -> Path:
    """Node-indexed complex field as x,y,re,im rows."""
    values = np.asarray(values, dtype=complex)
    if values.shape != (mesh.n_nodes,):
        raise ConfigurationError(
            f"field has shape {values.shape}, expected ({mesh.n_nodes},)"
        )
    lines = [",".join(FIELD_COLUMNS)]
    for (x, y), v in zip(mesh.nodes, values):
        lines.append(f"{_fmt(x)},{_fmt(y)},{_fmt(v.real)},{_fmt(v.imag)}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_field_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Load a field CSV back as (points, complex values)."""
    raw = np.genfromtxt(path, delimiter=",", skip_header=1)
    if raw.ndim == 1:
        raw = raw[None, :]
    if raw.shape[1] != 4:
        raise ConfigurationError(f"field file {path} must have 4 columns")
    return raw[:, :2], raw[:, 2] + 1j * raw[:, 3]


def write_vtk(
    path: str | Path,
    mesh: StructuredTriMesh,
    fields: dict[str, np.ndarray],
    title: str = "hclod field export",
) -> Path:
    """Legacy ASCII VTK unstructured grid with point-data scalars (float64)."""
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.nodes]
    lines.append(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += ["5"] * mesh.n_elements
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name, values in fields.items():
        values = np.asarray(values, dtype=complex)
        if values.shape != (mesh.n_nodes,):
            raise ConfigurationError(
                f"field '{name}' has shape {values.shape}, "
                f"expected ({mesh.n_nodes},)"
            )
        for part, comp in (("re", values.real), ("im", values.imag)):
            lines.append(f"SCALARS {part}_{name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [_fmt(v) for v in comp]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_decay_csv(path: str | Path, rows: list[dict]) -> Path:
    """Corrector decay study: element, m, tail_energy, localization_error, beta."""
    lines = [",".join(DECAY_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                [
                    str(row["element"]),
                    str(row["m"]),
                    _fmt(row["tail_energy"]),
                    _fmt(row["localization_error"]),
                    _fmt(row["fitted_beta"]),
                ]
            )
        )
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
