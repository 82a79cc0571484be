"""Two-phase diffusion fields A in {1, eps^2} and scatterer geometry builders.

The coefficient lives on a uniform cell grid over (0,1)^2.  Geometry
builders use resolution eps/4, the coarsest dyadic grid on which the
centered square inclusions (corners at odd multiples of eps/4) are exactly
representable; each inclusion occupies the central 2x2 block of an
eps-cell's 4x4 subgrid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .mesh import StructuredTriMesh

log = logging.getLogger(__name__)

GEOMETRY_KINDS = (
    "mie_square",
    "slab_periodic",
    "slab_point_defect",
    "slab_line_defect",
    "constant_one",
    "custom_cells",
)

MIN_EPSILON_EXP = 2
MAX_EPSILON_EXP = 6


@dataclass(frozen=True)
class GeometrySpec:
    """Parameters selecting one of the scatterer geometries."""

    kind: str
    epsilon_exp: int = 3
    defect_cell: tuple[int, int] | None = None
    channel_halfwidth: float = 2.0  # in units of eps/4; 2.0 widens the gap to eps
    cells_file: str | Path | None = None

    def __post_init__(self):
        if self.kind not in GEOMETRY_KINDS:
            raise ConfigurationError(
                f"unknown geometry kind '{self.kind}'; expected one of {GEOMETRY_KINDS}"
            )
        if not MIN_EPSILON_EXP <= self.epsilon_exp <= MAX_EPSILON_EXP:
            raise ConfigurationError(
                f"epsilon exponent must be in [{MIN_EPSILON_EXP}, {MAX_EPSILON_EXP}], "
                f"got {self.epsilon_exp}"
            )
        if self.kind == "custom_cells" and self.cells_file is None:
            raise ConfigurationError("custom_cells geometry needs a cells_file")
        if self.channel_halfwidth < 1.0:
            raise ConfigurationError("channel halfwidth multiplier must be >= 1")


class Coefficient:
    """Piecewise-constant field over a uniform (rows x cols) cell grid.

    Cell (r, c) covers [c/cols, (c+1)/cols) x [r/rows, (r+1)/rows), closed
    left / open right, with the top and right domain edges clamped into the
    last cell.
    """

    def __init__(self, epsilon_exp: int, cell_values: np.ndarray):
        self.epsilon_exp = int(epsilon_exp)
        self.cell_values = np.asarray(cell_values, dtype=float)
        if self.cell_values.ndim != 2:
            raise ConfigurationError("cell grid must be two-dimensional")
        eps2 = self.epsilon**2
        valid = np.isin(self.cell_values, [1.0, eps2])
        if not valid.all():
            raise ConfigurationError("cell values must be 1 or eps^2")

    @property
    def epsilon(self) -> float:
        return 2.0 ** (-self.epsilon_exp)

    @property
    def effective_epsilon(self) -> float:
        """sqrt(min A): the resolution condition's contrast scale.

        Equals eps for two-phase fields and 1 for homogeneous ones.
        """
        return float(np.sqrt(self.cell_values.min()))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cell_values.shape

    @property
    def inclusion_mask(self) -> np.ndarray:
        return self.cell_values != 1.0

    def value_at(self, x: float, y: float) -> float:
        rows, cols = self.shape
        c = min(int(x * cols), cols - 1)
        r = min(int(y * rows), rows - 1)
        return self.cell_values[r, c]

    @property
    def boundary_clearance(self) -> float:
        """Distance from the inclusion set to the domain boundary."""
        mask = self.inclusion_mask
        if not mask.any():
            return np.inf
        rows, cols = self.shape
        rr, cc = np.nonzero(mask)
        dx = np.minimum(cc / cols, 1.0 - (cc + 1) / cols)
        dy = np.minimum(rr / rows, 1.0 - (rr + 1) / rows)
        return float(np.minimum(dx, dy).min())

    @property
    def clear_of_boundary(self) -> bool:
        """Whether the inclusions keep at least eps distance from the boundary."""
        return self.boundary_clearance >= self.epsilon


def _inclusion_cell_ranges(E: int, j: int) -> slice:
    # inclusion of eps-cell j spans subcells 4j+1 .. 4j+2 on the eps/4 grid
    return slice(4 * j + 1, 4 * j + 3)


def _periodic_grid(E: int, j1_range: range, j2_range: range) -> np.ndarray:
    size = 2 ** (E + 2)
    eps2 = (2.0 ** (-E)) ** 2
    grid = np.ones((size, size))
    for j2 in j2_range:
        for j1 in j1_range:
            grid[_inclusion_cell_ranges(E, j2), _inclusion_cell_ranges(E, j1)] = eps2
    return grid


def _mie_index_range(E: int) -> range:
    # inclusions of eps(j + (0.25,0.75)^2) lying inside (0.25, 0.75)
    return range(2 ** (E - 2), 3 * 2 ** (E - 2))


def _slab_index_ranges(E: int) -> tuple[range, range]:
    # scatterer box (0.25,0.75) x (0,1)
    return _mie_index_range(E), range(0, 2**E)


def _nearest_center_inclusion(E: int, j1_range: range, j2_range: range) -> tuple[int, int]:
    eps = 2.0 ** (-E)
    best = None
    best_dist = np.inf
    for j2 in j2_range:
        for j1 in j1_range:
            cx = (j1 + 0.5) * eps
            cy = (j2 + 0.5) * eps
            d = (cx - 0.5) ** 2 + (cy - 0.5) ** 2
            if d < best_dist - 1e-15:
                best_dist = d
                best = (j1, j2)
    return best


def build_coefficient(spec: GeometrySpec) -> Coefficient:
    """Realize a geometry spec as a cell grid; flags boundary-touching scatterers."""
    E = spec.epsilon_exp
    if spec.kind == "constant_one":
        coeff = Coefficient(E, np.ones((1, 1)))
    elif spec.kind == "custom_cells":
        coeff = read_cells(spec.cells_file)
    elif spec.kind == "mie_square":
        r = _mie_index_range(E)
        coeff = Coefficient(E, _periodic_grid(E, r, r))
    elif spec.kind in ("slab_periodic", "slab_point_defect", "slab_line_defect"):
        j1r, j2r = _slab_index_ranges(E)
        grid = _periodic_grid(E, j1r, j2r)
        if spec.kind == "slab_point_defect":
            cell = spec.defect_cell or _nearest_center_inclusion(E, j1r, j2r)
            j1, j2 = cell
            if j1 not in j1r or j2 not in j2r:
                raise ConfigurationError(
                    f"point defect cell {cell} lies outside the scatterer "
                    f"(valid ranges {j1r} x {j2r})"
                )
            grid[_inclusion_cell_ranges(E, j2), _inclusion_cell_ranges(E, j1)] = 1.0
        elif spec.kind == "slab_line_defect":
            rows = grid.shape[0]
            halfwidth = spec.channel_halfwidth * 0.25 * 2.0 ** (-E)
            centers = (np.arange(rows) + 0.5) / rows
            grid[np.abs(centers - 0.5) < halfwidth, :] = 1.0
        coeff = Coefficient(E, grid)
    else:  # pragma: no cover - guarded by GeometrySpec
        raise ConfigurationError(f"unhandled geometry kind {spec.kind}")

    if not coeff.clear_of_boundary:
        log.warning(
            "scatterer is within eps of the domain boundary "
            "(clearance %.3g < eps %.3g); boundary trace bounds degrade",
            coeff.boundary_clearance,
            coeff.epsilon,
        )
    return coeff


def element_values(coefficient: Coefficient, mesh: StructuredTriMesh) -> np.ndarray:
    """Per-element A value looked up at barycenters.

    Requires the mesh to resolve the cell grid: every element must lie
    inside a single cell, so no element straddles a discontinuity.
    """
    rows, cols = coefficient.shape
    n = mesh.cells_per_side
    if n % rows != 0 or n % cols != 0:
        needed = int(np.ceil(np.log2(max(rows, cols))))
        raise ConfigurationError(
            f"fine mesh level {mesh.level} does not resolve the {rows}x{cols} "
            f"coefficient grid; need level >= {needed}"
        )
    bc = mesh.barycenters
    c = np.minimum((bc[:, 0] * cols).astype(np.int64), cols - 1)
    r = np.minimum((bc[:, 1] * rows).astype(np.int64), rows - 1)

    # safety: element bounding boxes must fit in the barycenter's cell closure
    pts = mesh.nodes[mesh.elements]
    tol = 1e-12
    ok_x = (pts[:, :, 0].min(axis=1) >= c / cols - tol) & (
        pts[:, :, 0].max(axis=1) <= (c + 1) / cols + tol
    )
    ok_y = (pts[:, :, 1].min(axis=1) >= r / rows - tol) & (
        pts[:, :, 1].max(axis=1) <= (r + 1) / rows + tol
    )
    if not (ok_x & ok_y).all():
        raise ConfigurationError(
            "mesh elements straddle coefficient cells despite matching levels"
        )
    return coefficient.cell_values[r, c]


def write_cells(path: str | Path, coefficient: Coefficient) -> None:
    """Plain-text export: header 'E rows cols', then 0/1 rows bottom-to-top."""
    rows, cols = coefficient.shape
    flags = coefficient.inclusion_mask.astype(int)
    lines = [f"{coefficient.epsilon_exp} {rows} {cols}"]
    lines += [" ".join(str(v) for v in flags[r]) for r in range(rows)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_cells(path: str | Path) -> Coefficient:
    """Inverse of write_cells; bit-exact round-trip."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError(f"empty cells file {path}")
    try:
        E, rows, cols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ConfigurationError(f"bad cells header in {path}: {lines[0]!r}") from exc
    if len(lines) - 1 != rows:
        raise ConfigurationError(
            f"cells file {path} has {len(lines) - 1} rows, header says {rows}"
        )
    flags = np.array(
        [[int(t) for t in ln.split()] for ln in lines[1:]], dtype=np.int64
    )
    if flags.shape != (rows, cols) or not np.isin(flags, [0, 1]).all():
        raise ConfigurationError(f"cells file {path} has malformed flag rows")
    eps2 = (2.0 ** (-E)) ** 2
    values = np.where(flags == 1, eps2, 1.0)
    return Coefficient(E, values)
