"""Norms, best approximations, and convergence studies against a fine reference."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    OperatorSet,
    assemble_load,
    assemble_operators,
    helmholtz_matrix,
    solve_fine_reference,
)
from .coefficient import Coefficient, element_values
from .correctors import compute_correctors
from .errors import ConfigurationError, NumericalError
from .interpolation import build_interpolation
from .lod import assemble_lod, solve_lod
from .mesh import build_embedding, build_mesh

log = logging.getLogger(__name__)

NORMS = ("energy", "semi_A", "l2_A", "l2")
METHODS = ("lod_full", "lod_coarse", "p1fem", "p1_best")


def norm(v: np.ndarray, which: str, ops: OperatorSet) -> float:
    """Weighted (semi) norms realized through the assembled matrices."""
    v = np.asarray(v)
    if which == "energy":
        sq = _form(v, ops.stiffness_A) + ops.wave_number**2 * _form(v, ops.mass)
    elif which == "semi_A":
        sq = _form(v, ops.stiffness_A)
    elif which == "l2_A":
        sq = _form(v, ops.mass_A)
    elif which == "l2":
        sq = _form(v, ops.mass)
    else:
        raise ValueError(f"unknown norm '{which}'; expected one of {NORMS}")
    return float(np.sqrt(sq))


def _form(v: np.ndarray, M: sp.spmatrix) -> float:
    sq = np.vdot(v, M @ v).real
    scale = max(np.vdot(v, v).real, 1.0)
    if sq < -1e-12 * scale:
        raise NumericalError(f"quadratic form returned negative square {sq:.3e}")
    return max(sq, 0.0)


def best_approximation(
    u_h: np.ndarray, which: str, embedding, ops: OperatorSet
) -> np.ndarray:
    """Orthogonal projection of a fine field onto the coarse space.

    `which` selects the inner product: energy, l2_A, or l2.
    """
    if which == "energy":
        X = ops.stiffness_A + ops.wave_number**2 * ops.mass
    elif which == "l2_A":
        X = ops.mass_A
    elif which == "l2":
        X = ops.mass
    else:
        raise ValueError(f"best approximation needs energy|l2_A|l2, got '{which}'")
    P = embedding.prolongation
    gram = (P.T @ X @ P).tocsc()
    rhs = P.T @ (X @ np.asarray(u_h, dtype=complex))
    try:
        lu = spla.splu(gram.astype(complex))
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise NumericalError(f"singular Gram matrix for '{which}'") from exc
    return x


def relative_errors(
    v: np.ndarray, reference: np.ndarray, ops: OperatorSet
) -> dict[str, float]:
    """Relative errors in the energy, weighted L2, and L2 norms."""
    diff = np.asarray(v) - np.asarray(reference)
    return {
        "energy": norm(diff, "energy", ops) / norm(reference, "energy", ops),
        "l2_A": norm(diff, "l2_A", ops) / norm(reference, "l2_A", ops),
        "l2": norm(diff, "l2", ops) / norm(reference, "l2", ops),
    }


def eoc(errors: np.ndarray, Hs: np.ndarray) -> np.ndarray:
    """Empirical orders of convergence between consecutive mesh sizes."""
    errors = np.asarray(errors, dtype=float)
    Hs = np.asarray(Hs, dtype=float)
    return np.log(errors[:-1] / errors[1:]) / np.log(Hs[:-1] / Hs[1:])


@dataclass
class StudyRow:
    method: str
    coarse_level: int
    H: float  # coarse grid spacing 2^-level
    m: int
    err_energy_rel: float
    err_l2A_rel: float
    err_l2_rel: float
    dim_VH: int
    wall_time_s: float


@dataclass
class ErrorReport:
    rows: list[StudyRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def series(self, method: str, m: int) -> list[StudyRow]:
        picked = [r for r in self.rows if r.method == method and r.m == m]
        return sorted(picked, key=lambda r: r.coarse_level)

    def eoc_series(self, method: str, m: int, which: str = "energy") -> np.ndarray:
        rows = self.series(method, m)
        key = {"energy": "err_energy_rel", "l2_A": "err_l2A_rel", "l2": "err_l2_rel"}[
            which
        ]
        errs = np.array([getattr(r, key) for r in rows])
        Hs = np.array([r.H for r in rows])
        return eoc(errs, Hs)

    def methods_and_ms(self) -> list[tuple[str, int]]:
        seen: list[tuple[str, int]] = []
        for r in self.rows:
            if (r.method, r.m) not in seen:
                seen.append((r.method, r.m))
        return seen


def convergence_study(
    coefficient: Coefficient,
    k: float,
    x0: tuple[float, float],
    fine_level: int,
    coarse_levels: list[int],
    m_values: list[int],
    interpolant: str = "weighted",
    workers: int = 1,
    metadata: dict | None = None,
) -> ErrorReport:
    """Run the LOD, coarse FEM, and best-approximation error sweep over H.

    The fine reference is solved once and shared by every study point.
    """
    if not coarse_levels:
        raise ConfigurationError("at least one coarse level is required")
    if not m_values:
        raise ConfigurationError("at least one oversampling parameter m is required")
    if max(coarse_levels) >= fine_level:
        raise ConfigurationError(
            f"fine level {fine_level} must exceed every coarse level {coarse_levels}"
        )

    fine = build_mesh(fine_level)
    element_A = element_values(coefficient, fine)
    ops = assemble_operators(fine, element_A, k)
    load = assemble_load(fine, x0)
    G = helmholtz_matrix(ops)
    log.info("solving fine reference (level %d, %d nodes)", fine_level, fine.n_nodes)
    u_ref = solve_fine_reference(G, load.values)

    report = ErrorReport(
        metadata={
            "k": k,
            "x0": tuple(x0),
            "fine_level": fine_level,
            "epsilon_exp": coefficient.epsilon_exp,
            "interpolant": interpolant,
            **(metadata or {}),
        }
    )

    for level in sorted(coarse_levels):
        coarse = build_mesh(level)
        H = coarse.h
        embedding = build_embedding(coarse, fine)
        interp = build_interpolation(
            interpolant, coarse, fine, embedding, element_A
        )

        t0 = time.perf_counter()
        fem = solve_lod(assemble_lod(None, ops, load, embedding))
        t_fem = time.perf_counter() - t0
        errs = relative_errors(fem.u_fine, u_ref, ops)
        report.rows.append(
            StudyRow(
                "p1fem", level, H, 0, errs["energy"], errs["l2_A"], errs["l2"],
                coarse.n_nodes, t_fem,
            )
        )

        t0 = time.perf_counter()
        best_errs = {}
        for which in ("energy", "l2_A", "l2"):
            xb = best_approximation(u_ref, which, embedding, ops)
            diff = embedding.prolongation @ xb - u_ref
            best_errs[which] = norm(diff, which, ops) / norm(u_ref, which, ops)
        t_best = time.perf_counter() - t0
        report.rows.append(
            StudyRow(
                "p1_best", level, H, 0, best_errs["energy"], best_errs["l2_A"],
                best_errs["l2"], coarse.n_nodes, t_best,
            )
        )

        for m in sorted(m_values):
            log.info("LOD study point: H=2^-%d, m=%d", level, m)
            t0 = time.perf_counter()
            Q = compute_correctors(
                coarse, fine, embedding, ops, interp, element_A, m,
                workers=workers, epsilon=coefficient.effective_epsilon,
            )
            system = assemble_lod(Q, ops, load, embedding)
            sol = solve_lod(system)
            t_lod = time.perf_counter() - t0
            errs = relative_errors(sol.u_fine, u_ref, ops)
            report.rows.append(
                StudyRow(
                    "lod_full", level, H, m, errs["energy"], errs["l2_A"],
                    errs["l2"], coarse.n_nodes, t_lod,
                )
            )
            coarse_part = embedding.prolongation @ sol.u_coarse
            errs = relative_errors(coarse_part, u_ref, ops)
            report.rows.append(
                StudyRow(
                    "lod_coarse", level, H, m, errs["energy"], errs["l2_A"],
                    errs["l2"], coarse.n_nodes, t_lod,
                )
            )
    return report
