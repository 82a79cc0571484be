"""Nested uniform triangulations of the unit square.

A level-L mesh splits (0,1)^2 into 2^L x 2^L squares, each cut along the
lower-left to upper-right diagonal.  Node ordering is lexicographic by
(row, column) grid index; elements are row-major with the lower triangle
first, which keeps sparse patterns reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

MAX_LEVEL = 12


class StructuredTriMesh:
    """Uniform triangulation of (0,1)^2 at a dyadic refinement level."""

    def __init__(self, level: int):
        if not 1 <= level <= MAX_LEVEL:
            raise ConfigurationError(
                f"mesh level must be in [1, {MAX_LEVEL}], got {level}"
            )
        self.level = level
        n = 2**level
        self.cells_per_side = n
        self.nodes_per_side = n + 1

        # nodes: id = row * (n+1) + col, coordinates (col/n, row/n)
        cols, rows = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
        self.nodes = np.column_stack(
            [cols.ravel() / n, rows.ravel() / n]
        ).astype(float)

        # elements: cell (col=i, row=j) -> lower (i,j),(i+1,j),(i+1,j+1)
        # and upper (i,j),(i+1,j+1),(i,j+1); index 2*(j*n+i) + {0,1}
        ii, jj = np.meshgrid(np.arange(n), np.arange(n))
        i = ii.ravel()
        j = jj.ravel()
        sw = j * (n + 1) + i
        se = sw + 1
        ne = se + (n + 1)
        nw = sw + (n + 1)
        lower = np.column_stack([sw, se, ne])
        upper = np.column_stack([sw, ne, nw])
        self.elements = np.empty((2 * n * n, 3), dtype=np.int64)
        self.elements[0::2] = lower
        self.elements[1::2] = upper

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def h(self) -> float:
        """Grid spacing (side length of the squares)."""
        return 2.0 ** (-self.level)

    @property
    def mesh_size(self) -> float:
        """H = diam T, the diagonal length of each triangle."""
        return np.sqrt(2.0) * self.h

    @cached_property
    def element_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """(n_edges, 2) node pairs covering the four sides of the square.

        Order: bottom, right, top, left; each side in increasing coordinate.
        """
        n = self.cells_per_side
        r = np.arange(n)
        bottom = np.column_stack([r, r + 1])
        right = np.column_stack([r * (n + 1) + n, (r + 1) * (n + 1) + n])
        top = np.column_stack([n * (n + 1) + r, n * (n + 1) + r + 1])
        left = np.column_stack([r * (n + 1), (r + 1) * (n + 1)])
        return np.vstack([bottom, right, top, left]).astype(np.int64)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def _incidence(self) -> sp.csr_matrix:
        """Element-by-node incidence matrix (0/1 entries).

        Integer dtype on purpose: scipy's boolean sparse matmul works
        modulo 2, which would drop edge neighbors (two shared nodes).
        """
        n_el = self.n_elements
        rows = np.repeat(np.arange(n_el), 3)
        cols = self.elements.ravel()
        data = np.ones(3 * n_el, dtype=np.int8)
        return sp.csr_matrix((data, (rows, cols)), shape=(n_el, self.n_nodes))

    @cached_property
    def element_adjacency(self) -> sp.csr_matrix:
        """Element adjacency through shared nodes (self-inclusive, 0/1)."""
        inc = self._incidence
        adj = (inc @ inc.T) > 0
        return adj.astype(np.int8).tocsr()

    def adjacent_elements(self, element: int) -> np.ndarray:
        """Elements sharing at least one node with `element` (incl. itself)."""
        return self.element_adjacency.indices[
            self.element_adjacency.indptr[element] : self.element_adjacency.indptr[
                element + 1
            ]
        ]

    @cached_property
    def node_star_sizes(self) -> np.ndarray:
        """Number of elements incident to each node."""
        return np.asarray(self._incidence.sum(axis=0)).ravel()

    def locate_element(self, x: float, y: float) -> int:
        """Index of the element containing (x, y); ties go to the lower triangle."""
        n = self.cells_per_side
        ci = min(int(x * n), n - 1)
        cj = min(int(y * n), n - 1)
        lx = x * n - ci
        ly = y * n - cj
        return 2 * (cj * n + ci) + (0 if ly <= lx else 1)


@dataclass(frozen=True, eq=False)
class Patch:
    """m-layer node-adjacency neighborhood of a seed element."""

    seed_element: int
    layers: int
    elements: np.ndarray = field(repr=False)

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def key(self) -> bytes:
        """Hashable identity of the element set (for factorization reuse)."""
        return self.elements.tobytes()


def build_mesh(level: int) -> StructuredTriMesh:
    """Uniform level-L triangulation of the unit square."""
    return StructuredTriMesh(level)


def patch(mesh: StructuredTriMesh, seed: int, m: int) -> Patch:
    """m-fold node-adjacency closure of {seed}."""
    if not 0 <= seed < mesh.n_elements:
        raise IndexError(f"seed element {seed} out of range")
    if m < 0:
        raise ConfigurationError(f"patch layers must be >= 0, got {m}")
    indicator = np.zeros(mesh.n_elements, dtype=np.int8)
    indicator[seed] = 1
    adj = mesh.element_adjacency
    for _ in range(m):
        if indicator.all():
            break
        indicator = (adj @ indicator != 0).astype(np.int8)
    return Patch(seed_element=seed, layers=m, elements=np.flatnonzero(indicator))


def patch_dof_sets(
    mesh: StructuredTriMesh, patch_elements
) -> tuple[np.ndarray, np.ndarray]:
    """Interior node DOFs and Robin edges of an element subset.

    A node is interior when its full element star lies inside the patch;
    nodes on the domain boundary keep their DOF (Robin condition), nodes on
    the patch's interior boundary do not.  Returns (interior_nodes,
    robin_edge_indices) with edge indices into mesh.boundary_edges.
    """
    elements = getattr(patch_elements, "elements", patch_elements)
    elements = np.asarray(elements, dtype=np.int64)
    inc = mesh._incidence
    in_patch_counts = np.asarray(inc[elements].sum(axis=0)).ravel()
    interior = np.flatnonzero(
        (in_patch_counts > 0) & (in_patch_counts == mesh.node_star_sizes)
    )
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    mask[interior] = True
    edges = mesh.boundary_edges
    robin = np.flatnonzero(mask[edges[:, 0]] & mask[edges[:, 1]])
    return interior, robin


class Embedding:
    """Coarse-to-fine nodal prolongation between nested meshes."""

    def __init__(self, coarse: StructuredTriMesh, fine: StructuredTriMesh):
        if fine.level <= coarse.level:
            raise ConfigurationError(
                f"fine level {fine.level} must exceed coarse level {coarse.level}"
            )
        self.coarse = coarse
        self.fine = fine
        self.prolongation = _prolongation_matrix(coarse, fine)

    @cached_property
    def coarse_element_of_fine(self) -> np.ndarray:
        """For each fine element, the coarse element containing it."""
        bc = self.fine.barycenters
        n = self.coarse.cells_per_side
        ci = np.minimum((bc[:, 0] * n).astype(np.int64), n - 1)
        cj = np.minimum((bc[:, 1] * n).astype(np.int64), n - 1)
        lx = bc[:, 0] * n - ci
        ly = bc[:, 1] * n - cj
        return 2 * (cj * n + ci) + (ly > lx)

    @cached_property
    def fine_elements_of_coarse(self) -> list[np.ndarray]:
        """Fine element indices grouped per coarse element."""
        owner = self.coarse_element_of_fine
        order = np.argsort(owner, kind="stable")
        bounds = np.searchsorted(owner[order], np.arange(self.coarse.n_elements + 1))
        return [
            order[bounds[k] : bounds[k + 1]] for k in range(self.coarse.n_elements)
        ]

    @cached_property
    def coarse_element_of_boundary_edge(self) -> np.ndarray:
        """For each fine boundary edge, the coarse element containing it."""
        edges = self.fine.boundary_edges
        mid = 0.5 * (self.fine.nodes[edges[:, 0]] + self.fine.nodes[edges[:, 1]])
        # nudge inward so the lookup lands in the adjacent cell interior
        delta = 0.25 * self.fine.h
        x = np.clip(mid[:, 0], delta, 1.0 - delta)
        y = np.clip(mid[:, 1], delta, 1.0 - delta)
        n = self.coarse.cells_per_side
        ci = np.minimum((x * n).astype(np.int64), n - 1)
        cj = np.minimum((y * n).astype(np.int64), n - 1)
        lx = x * n - ci
        ly = y * n - cj
        return 2 * (cj * n + ci) + (ly > lx)


def _prolongation_matrix(
    coarse: StructuredTriMesh, fine: StructuredTriMesh
) -> sp.csr_matrix:
    """P1 interpolation of coarse hat functions at fine nodes.

    All local coordinates are dyadic, so the barycentric weights are exact
    and nested prolongations compose bit-identically.
    """
    n_c = coarse.cells_per_side
    ratio = 2 ** (fine.level - coarse.level)
    nf = fine.nodes_per_side
    gi, gj = np.meshgrid(np.arange(nf), np.arange(nf), indexing="xy")
    gi = gi.ravel()
    gj = gj.ravel()
    ci = np.minimum(gi // ratio, n_c - 1)
    cj = np.minimum(gj // ratio, n_c - 1)
    lx = (gi - ci * ratio) / ratio
    ly = (gj - cj * ratio) / ratio

    sw = cj * (n_c + 1) + ci
    se = sw + 1
    ne = se + (n_c + 1)
    nw = sw + (n_c + 1)

    in_lower = ly <= lx
    cols = np.where(
        in_lower[:, None],
        np.column_stack([sw, se, ne]),
        np.column_stack([sw, ne, nw]),
    )
    weights = np.where(
        in_lower[:, None],
        np.column_stack([1.0 - lx, lx - ly, ly]),
        np.column_stack([1.0 - ly, lx, ly - lx]),
    )
    rows = np.repeat(np.arange(fine.n_nodes), 3)
    P = sp.csr_matrix(
        (weights.ravel(), (rows, cols.ravel())),
        shape=(fine.n_nodes, coarse.n_nodes),
    )
    P.eliminate_zeros()
    return P


def build_embedding(coarse: StructuredTriMesh, fine: StructuredTriMesh) -> Embedding:
    """Prolongation and element maps between two nested mesh levels."""
    return Embedding(coarse, fine)
