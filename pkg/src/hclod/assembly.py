"""P1 assembly of the Helmholtz sesquilinear form on the fine mesh.

Stiffness and mass integrals are exact (A is constant per element, the
basis is linear); only the load vector needs numerical quadrature, done
with a fixed 6-point degree-4 rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError
from .mesh import StructuredTriMesh

DEFAULT_AMPLITUDE = 10000.0
DEFAULT_RADIUS = 0.05

# Dunavant degree-4 rule on the reference triangle: 6 points, weights sum to 1
_QW = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)
_A1 = 0.445948490915965
_A2 = 0.091576213509771
_QB = np.array(
    [
        [1.0 - 2.0 * _A1, _A1, _A1],
        [_A1, 1.0 - 2.0 * _A1, _A1],
        [_A1, _A1, 1.0 - 2.0 * _A1],
        [1.0 - 2.0 * _A2, _A2, _A2],
        [_A2, 1.0 - 2.0 * _A2, _A2],
        [_A2, _A2, 1.0 - 2.0 * _A2],
    ]
)

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_MASS_REF = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


@dataclass
class OperatorSet:
    """Sparse pieces of the sesquilinear form on one mesh."""

    stiffness_A: sp.csr_matrix
    mass: sp.csr_matrix
    mass_A: sp.csr_matrix
    boundary_mass: sp.csr_matrix
    wave_number: float

    @property
    def n_nodes(self) -> int:
        return self.mass.shape[0]


@dataclass
class LoadVector:
    """Nodal moments of the compactly supported bump source."""

    values: np.ndarray
    center: tuple[float, float]
    amplitude: float = DEFAULT_AMPLITUDE
    radius: float = DEFAULT_RADIUS


def p1_stiffness_local(coords: np.ndarray, weight: float = 1.0) -> np.ndarray:
    """Exact stiffness integrals of one triangle with constant coefficient."""
    coords = np.asarray(coords, dtype=float)
    x = coords[:, 0]
    y = coords[:, 1]
    area = 0.5 * (
        (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    )
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]]) / (2.0 * area)
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]]) / (2.0 * area)
    return weight * area * (np.outer(b, b) + np.outer(c, c))


def p1_mass_local(coords: np.ndarray, weight: float = 1.0) -> np.ndarray:
    """Exact mass integrals of one triangle with constant coefficient."""
    coords = np.asarray(coords, dtype=float)
    x = coords[:, 0]
    y = coords[:, 1]
    area = 0.5 * (
        (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    )
    return weight * area * _MASS_REF


def _element_matrices(mesh: StructuredTriMesh):
    """Vectorized local stiffness/mass blocks for every element."""
    p = mesh.nodes[mesh.elements]
    x = p[:, :, 0]
    y = p[:, :, 1]
    area = mesh.element_areas
    b = np.stack(
        [y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1
    ) / (2.0 * area[:, None])
    c = np.stack(
        [x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1
    ) / (2.0 * area[:, None])
    stiff = (
        b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]
    ) * area[:, None, None]
    mass = _MASS_REF[None, :, :] * area[:, None, None]
    return stiff, mass


def _scatter(mesh: StructuredTriMesh, blocks: np.ndarray) -> sp.csr_matrix:
    n_el = mesh.n_elements
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    M = sp.coo_matrix(
        (blocks.reshape(n_el, 9).ravel(), (rows, cols)),
        shape=(mesh.n_nodes, mesh.n_nodes),
    )
    return M.tocsr()


def boundary_mass_matrix(
    mesh: StructuredTriMesh, edge_indices: np.ndarray | None = None
) -> sp.csr_matrix:
    """1D P1 mass matrix over (a subset of) the boundary edges."""
    edges = mesh.boundary_edges
    if edge_indices is not None:
        edges = edges[np.asarray(edge_indices, dtype=np.int64)]
    lengths = np.linalg.norm(
        mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1
    )
    blocks = _EDGE_MASS_REF[None, :, :] * lengths[:, None, None]
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    B = sp.coo_matrix(
        (blocks.reshape(-1, 4).ravel(), (rows, cols)),
        shape=(mesh.n_nodes, mesh.n_nodes),
    )
    return B.tocsr()


def assemble_operators(
    mesh: StructuredTriMesh, element_A: np.ndarray, k: float
) -> OperatorSet:
    """Stiffness, mass, weighted mass, and boundary mass for coefficient A."""
    if k <= 0:
        raise ConfigurationError(f"wave number must be positive, got {k}")
    element_A = np.asarray(element_A, dtype=float)
    if element_A.shape != (mesh.n_elements,):
        raise ConfigurationError(
            f"element coefficient array has shape {element_A.shape}, "
            f"expected ({mesh.n_elements},)"
        )
    stiff, mass = _element_matrices(mesh)
    return OperatorSet(
        stiffness_A=_scatter(mesh, stiff * element_A[:, None, None]),
        mass=_scatter(mesh, mass),
        mass_A=_scatter(mesh, mass * element_A[:, None, None]),
        boundary_mass=boundary_mass_matrix(mesh),
        wave_number=float(k),
    )


def bump_source(
    points: np.ndarray,
    center: tuple[float, float],
    amplitude: float = DEFAULT_AMPLITUDE,
    radius: float = DEFAULT_RADIUS,
) -> np.ndarray:
    """Smooth compactly supported bump f centered at x0."""
    d = points - np.asarray(center)
    r2 = (d**2).sum(axis=-1) / radius**2
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    out[inside] = amplitude * np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def assemble_load(
    mesh: StructuredTriMesh,
    center: tuple[float, float],
    amplitude: float = DEFAULT_AMPLITUDE,
    radius: float = DEFAULT_RADIUS,
) -> LoadVector:
    """Nodal load F_i = int f phi_i with the fixed 6-point rule per triangle."""
    x0, y0 = center
    if not (0.0 < x0 < 1.0 and 0.0 < y0 < 1.0):
        raise ConfigurationError(f"source center {center} must lie inside (0,1)^2")
    F = np.zeros(mesh.n_nodes)
    weights = _QW[:, None] * _QB
    block = 1 << 18  # bound the quadrature workspace on fine meshes
    for start in range(0, mesh.n_elements, block):
        els = mesh.elements[start : start + block]
        coords = mesh.nodes[els]
        pts = np.einsum("qa,eap->eqp", _QB, coords)
        fvals = bump_source(pts, center, amplitude, radius)
        contrib = mesh.element_areas[start : start + block, None] * (fvals @ weights)
        np.add.at(F, els.ravel(), contrib.ravel())
    return LoadVector(
        values=F.astype(complex), center=(x0, y0), amplitude=amplitude, radius=radius
    )


def helmholtz_matrix(ops: OperatorSet) -> sp.csr_matrix:
    """G = S_A - k^2 M - i k B; complex symmetric, not Hermitian."""
    k = ops.wave_number
    G = (ops.stiffness_A - k**2 * ops.mass).astype(complex) - (
        1j * k
    ) * ops.boundary_mass.astype(complex)
    return G.tocsr()


def solve_fine_reference(
    G: sp.spmatrix, F: np.ndarray, tol: float = 1e-10
) -> np.ndarray:
    """Sparse direct solve of G u = F with a relative-residual contract."""
    F = np.asarray(F, dtype=complex)
    norm_F = np.linalg.norm(F)
    if norm_F == 0.0:
        return np.zeros_like(F)
    try:
        lu = spla.splu(sp.csc_matrix(G, dtype=complex))
        u = lu.solve(F)
    except RuntimeError as exc:
        raise NumericalError(f"sparse factorization failed: {exc}") from exc
    residual = np.linalg.norm(G @ u - F) / norm_F
    if not np.isfinite(residual) or residual > tol:
        raise NumericalError(
            f"fine solve residual {residual:.3e} exceeds {tol:.1e}; "
            "the system is numerically singular or severely ill-conditioned"
        )
    return u
