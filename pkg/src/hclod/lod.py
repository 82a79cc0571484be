"""Petrov-Galerkin coarse system with corrected trial/test spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import LoadVector, OperatorSet, helmholtz_matrix
from .correctors import CorrectorSet
from .errors import ConfigurationError, NumericalError
from .mesh import Embedding


@dataclass(eq=False)
class LodSystem:
    """Coarse complex-symmetric system together with its fine-space maps."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    trial_map: sp.csr_matrix  # prolongation plus corrector
    test_map: sp.csr_matrix  # prolongation plus conjugate corrector

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(eq=False)
class LodSolution:
    u_coarse: np.ndarray
    u_fine: np.ndarray
    residual_rel: float
    smallest_singular_value: float | None = None


def assemble_lod(
    correctors: CorrectorSet | None,
    ops: OperatorSet,
    load: LoadVector,
    embedding: Embedding,
) -> LodSystem:
    """K = (P+Q)^T G (P+Q), rhs = (P+Q)^T F.

    The transpose (not conjugate transpose) realizes testing against the
    conjugated correctors; with correctors disabled this degenerates to the
    plain coarse P1 system.
    """
    P = embedding.prolongation
    n_fine, n_coarse = P.shape
    if ops.n_nodes != n_fine:
        raise ConfigurationError(
            f"operator set lives on {ops.n_nodes} nodes, embedding on {n_fine}"
        )
    if load.values.shape[0] != n_fine:
        raise ConfigurationError("load vector does not match the fine mesh")
    if correctors is None:
        trial = P.astype(complex).tocsr()
    else:
        if correctors.shape != (n_fine, n_coarse):
            raise ConfigurationError(
                f"corrector map has shape {correctors.shape}, "
                f"expected {(n_fine, n_coarse)}"
            )
        trial = (P + correctors.matrix).tocsr()
    G = helmholtz_matrix(ops)
    K = (trial.T @ (G @ trial)).tocsr()
    rhs = trial.T @ load.values
    return LodSystem(
        matrix=K, rhs=rhs, trial_map=trial, test_map=trial.conjugate().tocsr()
    )


def solve_lod(
    system: LodSystem, tol: float = 1e-10, probe_inf_sup: bool = False
) -> LodSolution:
    """Direct solve of the coarse system and upscaling to the fine mesh."""
    norm_rhs = np.linalg.norm(system.rhs)
    if norm_rhs == 0.0:
        zero_c = np.zeros(system.dim, dtype=complex)
        zero_f = np.zeros(system.trial_map.shape[0], dtype=complex)
        return LodSolution(zero_c, zero_f, 0.0)
    try:
        lu = spla.splu(system.matrix.tocsc())
        u_coarse = lu.solve(system.rhs)
    except RuntimeError as exc:
        raise NumericalError(
            "coarse system factorization failed (singular K); "
            f"increase the oversampling parameter m or refine H: {exc}"
        ) from exc
    residual = np.linalg.norm(system.matrix @ u_coarse - system.rhs) / norm_rhs
    if not np.isfinite(residual) or residual > tol:
        raise NumericalError(
            f"coarse solve residual {residual:.3e} exceeds {tol:.1e}; "
            "increase the oversampling parameter m or refine H"
        )
    smallest_sv = None
    if probe_inf_sup:
        smallest_sv = float(
            np.linalg.svd(system.matrix.toarray(), compute_uv=False)[-1]
        )
    u_fine = system.trial_map @ u_coarse
    return LodSolution(u_coarse, u_fine, float(residual), smallest_sv)
