"""Quasi-interpolation from fine to coarse nodal spaces.

Each coarse node's value is a local L^2 projection onto the coarse space
over its element star, weighted either by the coefficient A or by 1.  The
weighted variant is what makes localization robust to high contrast.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError
from .mesh import Embedding, StructuredTriMesh

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class InterpolationOperator:
    """Sparse map from fine nodal vectors to coarse nodal vectors."""

    def __init__(self, kind: str, matrix: sp.csr_matrix, node_patches: list[np.ndarray]):
        self.kind = kind
        self.matrix = matrix
        self.node_patches = node_patches

    @cached_property
    def matrix_csc(self) -> sp.csc_matrix:
        return self.matrix.tocsc()

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def _coarse_element_mass(
    fine: StructuredTriMesh,
    fine_elements: np.ndarray,
    weight: np.ndarray,
) -> sp.csr_matrix:
    """Weighted fine mass matrix assembled over one coarse element only."""
    els = fine.elements[fine_elements]
    areas = fine.element_areas[fine_elements] * weight[fine_elements]
    blocks = _MASS_REF[None, :, :] * areas[:, None, None]
    rows = np.repeat(els, 3, axis=1).ravel()
    cols = np.tile(els, (1, 3)).ravel()
    return sp.coo_matrix(
        (blocks.reshape(-1, 9).ravel(), (rows, cols)),
        shape=(fine.n_nodes, fine.n_nodes),
    ).tocsr()


def build_interpolation(
    kind: str,
    coarse: StructuredTriMesh,
    fine: StructuredTriMesh,
    embedding: Embedding,
    element_A_fine: np.ndarray | None = None,
    include_boundary_nodes: bool = True,
) -> InterpolationOperator:
    """Assemble the weighted or unweighted quasi-interpolation operator.

    Per coarse node z the small Gram system of the local projection is
    solved densely; the resulting linear functional becomes row z of the
    operator.  All nodes get rows by default (the Robin problem carries
    boundary DOFs); `include_boundary_nodes=False` restricts the node sum
    to interior nodes for ablation studies.
    """
    if kind not in ("weighted", "unweighted"):
        raise ValueError(f"interpolation kind must be weighted|unweighted, got {kind}")
    if kind == "weighted":
        if element_A_fine is None:
            raise ValueError("weighted interpolation needs element_A_fine")
        weight = np.asarray(element_A_fine, dtype=float)
    else:
        weight = np.ones(fine.n_elements)

    P = embedding.prolongation.tocsc()
    elem_mass = [
        _coarse_element_mass(fine, fine_els, weight)
        for fine_els in embedding.fine_elements_of_coarse
    ]

    inc_csc = coarse._incidence.tocsc()
    node_patches = [
        inc_csc.indices[inc_csc.indptr[z] : inc_csc.indptr[z + 1]]
        for z in range(coarse.n_nodes)
    ]

    boundary = set(coarse.boundary_nodes.tolist())
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for z in range(coarse.n_nodes):
        if not include_boundary_nodes and z in boundary:
            continue
        omega = node_patches[z]
        Mw = elem_mass[omega[0]]
        for k in omega[1:]:
            Mw = Mw + elem_mass[k]
        local_nodes = np.unique(coarse.elements[omega].ravel())
        P_loc = P[:, local_nodes]
        gram = (P_loc.T @ Mw @ P_loc).toarray()
        rhs = np.zeros(local_nodes.shape[0])
        rhs[np.searchsorted(local_nodes, z)] = 1.0
        try:
            x = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"singular local Gram matrix at coarse node {z}"
            ) from exc
        row = Mw @ (P_loc @ x)
        nz = np.flatnonzero(row)
        rows.append(np.full(nz.shape[0], z, dtype=np.int64))
        cols.append(nz)
        vals.append(row[nz])

    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(coarse.n_nodes, fine.n_nodes),
    )
    return InterpolationOperator(kind=kind, matrix=matrix, node_patches=node_patches)


def kernel_constraint_rows(
    interp: InterpolationOperator, dof_nodes: np.ndarray
) -> sp.csr_matrix:
    """Interpolation rows restricted to patch DOF columns, empty rows dropped.

    An empty result signals that the corrector on this patch is identically
    zero (no kernel constraint can be active there).
    """
    dof_nodes = np.asarray(dof_nodes, dtype=np.int64)
    if dof_nodes.size == 0:
        return sp.csr_matrix((0, 0))
    C = interp.matrix_csc[:, dof_nodes].tocsr()
    keep = np.flatnonzero(np.diff(C.indptr) > 0)
    return C[keep]
