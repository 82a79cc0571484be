"""Multiscale finite elements for the high-contrast Helmholtz equation.

The package builds nested triangulations of the unit square, assembles the
complex Robin-boundary Helmholtz form over a two-phase coefficient, and
solves it with a Petrov-Galerkin multiscale method whose basis corrections
come from localized, interpolation-constrained patch problems.
"""

from .analysis import (
    ErrorReport,
    best_approximation,
    convergence_study,
    eoc,
    norm,
    relative_errors,
)
from .assembly import (
    LoadVector,
    OperatorSet,
    assemble_load,
    assemble_operators,
    helmholtz_matrix,
    solve_fine_reference,
)
from .coefficient import (
    Coefficient,
    GeometrySpec,
    build_coefficient,
    element_values,
    read_cells,
    write_cells,
)
from .config import ExperimentConfig, load_config, parse_config
from .correctors import (
    CorrectorEngine,
    CorrectorSet,
    assemble_global_corrector,
    compute_correctors,
    corrector_cache_key,
    corrector_decay_profile,
    dual_corrector,
    element_corrector,
    ideal_corrector,
    localization_errors,
)
from .errors import ConfigurationError, NumericalError
from .interpolation import (
    InterpolationOperator,
    build_interpolation,
    kernel_constraint_rows,
)
from .lod import LodSolution, LodSystem, assemble_lod, solve_lod
from .mesh import (
    Embedding,
    Patch,
    StructuredTriMesh,
    build_embedding,
    build_mesh,
    patch,
    patch_dof_sets,
)

__version__ = "0.1.0"

__all__ = [
    "Coefficient",
    "ConfigurationError",
    "CorrectorEngine",
    "CorrectorSet",
    "Embedding",
    "ErrorReport",
    "ExperimentConfig",
    "GeometrySpec",
    "InterpolationOperator",
    "LoadVector",
    "LodSolution",
    "LodSystem",
    "NumericalError",
    "OperatorSet",
    "Patch",
    "StructuredTriMesh",
    "assemble_global_corrector",
    "assemble_load",
    "assemble_lod",
    "assemble_operators",
    "best_approximation",
    "build_coefficient",
    "build_embedding",
    "build_interpolation",
    "build_mesh",
    "compute_correctors",
    "convergence_study",
    "corrector_cache_key",
    "corrector_decay_profile",
    "dual_corrector",
    "element_corrector",
    "element_values",
    "eoc",
    "helmholtz_matrix",
    "ideal_corrector",
    "kernel_constraint_rows",
    "load_config",
    "localization_errors",
    "norm",
    "parse_config",
    "patch",
    "patch_dof_sets",
    "read_cells",
    "relative_errors",
    "solve_fine_reference",
    "solve_lod",
    "write_cells",
]
