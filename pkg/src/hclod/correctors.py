"""Localized element corrector problems and the global corrector map.

Each coarse element T gets a patch problem: find fine-scale functions in
the interpolation kernel, supported on the m-layer patch, that cancel T's
contribution to the sesquilinear form.  The kernel constraint is enforced
with Lagrange multipliers, one sparse direct factorization per patch,
reused for the up-to-three right-hand sides of the element.
"""

from __future__ import annotations

import hashlib
import logging
import multiprocessing
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import OperatorSet, helmholtz_matrix
from .errors import NumericalError
from .interpolation import InterpolationOperator, kernel_constraint_rows
from .mesh import Embedding, StructuredTriMesh, patch, patch_dof_sets

log = logging.getLogger(__name__)

RESOLUTION_LIMIT = 1.0  # advisory bound on k * H / eps


def saturating_layers(mesh) -> int:
    """Layer count guaranteed to saturate any patch on this mesh.

    With every square split along the same diagonal, the element graph
    distance along the anti-diagonal reaches 2*2^L - 1, so 2^L layers are
    not enough from corner seeds.
    """
    return 2 * mesh.cells_per_side


_EDGE_MASS_REF = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


@dataclass(eq=False)
class ElementCorrector:
    """Solution of one element's patch problem, one column per local hat."""

    element: int
    m: int
    coarse_nodes: np.ndarray
    dofs: np.ndarray
    vectors: np.ndarray  # (n_dofs, 3) complex
    n_patch_elements: int
    constraint_inf: float
    residual_rel: float


@dataclass(eq=False)
class CorrectorSet:
    """Sparse map from coarse nodal vectors to fine corrector fields."""

    matrix: sp.csc_matrix
    m: int | None
    diagnostics: list = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(eq=False)
class DecayProfile:
    """Tail energies of an ideal element corrector over growing patches."""

    element: int
    layers: np.ndarray  # m = 0..m_max
    tail_energies: np.ndarray  # (m_max+1, n_local_basis)
    fitted_slope: float
    fitted_beta: float

    @property
    def tails_max(self) -> np.ndarray:
        return self.tail_energies.max(axis=1)


class _SaddleSolver:
    """Direct factorization of [[G, C^T], [C, 0]] reused across right-hand sides."""

    def __init__(self, lu, C: sp.csr_matrix, G_patch: sp.csc_matrix):
        self.lu = lu
        self.C = C
        self.G_patch = G_patch

    def solve(self, r: np.ndarray) -> tuple[np.ndarray, float]:
        n = self.G_patch.shape[0]
        rhs = np.vstack([r, np.zeros((self.C.shape[0], r.shape[1]), dtype=complex)])
        sol = self.lu.solve(rhs)
        w = sol[:n]
        mu = sol[n:]
        norm_r = np.linalg.norm(rhs)
        if norm_r == 0.0:
            return w, 0.0
        res_top = self.G_patch @ w - r
        if self.C.shape[0]:
            res_top = res_top + self.C.T @ mu
        res = np.sqrt(
            np.linalg.norm(res_top) ** 2 + np.linalg.norm(self.C @ w) ** 2
        )
        return w, float(res / norm_r)


class _NullSpaceSolver:
    """Dense kernel-basis solve for small patches with dependent constraints."""

    def __init__(self, C: sp.csr_matrix, G_patch: sp.csc_matrix):
        import scipy.linalg

        self.C = C
        self.G_patch = G_patch
        self.Z = scipy.linalg.null_space(C.toarray())
        if self.Z.shape[1]:
            self._reduced = self.Z.T @ (G_patch.toarray() @ self.Z)

    def solve(self, r: np.ndarray) -> tuple[np.ndarray, float]:
        n = self.G_patch.shape[0]
        if self.Z.shape[1] == 0:
            return np.zeros((n, r.shape[1]), dtype=complex), 0.0
        rz = self.Z.T @ r
        y = np.linalg.solve(self._reduced, rz)
        w = self.Z @ y
        norm_r = np.linalg.norm(rz)
        if norm_r == 0.0:
            return w, 0.0
        res = np.linalg.norm(self.Z.T @ (self.G_patch @ w - r))
        return w, float(res / norm_r)


_PatchSolver = _SaddleSolver | _NullSpaceSolver


class CorrectorEngine:
    """Shared precomputation for all element corrector solves on a mesh pair."""

    def __init__(
        self,
        coarse: StructuredTriMesh,
        fine: StructuredTriMesh,
        embedding: Embedding,
        ops: OperatorSet,
        interp: InterpolationOperator,
        element_A: np.ndarray,
    ):
        self.coarse = coarse
        self.fine = fine
        self.embedding = embedding
        self.ops = ops
        self.interp = interp
        self.k = ops.wave_number
        self.G = helmholtz_matrix(ops)
        self.P = embedding.prolongation.tocsc()
        self._saturated_factorization = None

        # per-fine-element 3x3 blocks of stiffness (A-weighted) and mass
        p = fine.nodes[fine.elements]
        x, y = p[:, :, 0], p[:, :, 1]
        area = fine.element_areas
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], 1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], 1)
        b /= 2.0 * area[:, None]
        c /= 2.0 * area[:, None]
        grad = b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]
        self.element_A = np.asarray(element_A, dtype=float)
        self.blocks_S = grad * (area * self.element_A)[:, None, None]
        mass_ref = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
        self.blocks_M = mass_ref[None, :, :] * area[:, None, None]

        edges = fine.boundary_edges
        lengths = np.linalg.norm(
            fine.nodes[edges[:, 1]] - fine.nodes[edges[:, 0]], axis=1
        )
        self.edge_blocks = _EDGE_MASS_REF[None, :, :] * lengths[:, None, None]
        owner = embedding.coarse_element_of_boundary_edge
        self.boundary_edges_of_coarse = [
            np.flatnonzero(owner == T) for T in range(coarse.n_elements)
        ]

    # -- patch machinery ---------------------------------------------------

    def fine_elements_of_patch(self, patch_elements: np.ndarray) -> np.ndarray:
        parts = [self.embedding.fine_elements_of_coarse[k] for k in patch_elements]
        return np.sort(np.concatenate(parts))

    def element_rhs(self, T: int) -> np.ndarray:
        """Columns -B_T(lambda_z, .) for the coarse nodes z of T, full length."""
        coarse_nodes = self.coarse.elements[T]
        fine_els = self.embedding.fine_elements_of_coarse[T]
        cols = np.asarray(self.P[:, coarse_nodes].todense())
        els = self.fine.elements[fine_els]
        blocks = self.blocks_S[fine_els] - self.k**2 * self.blocks_M[fine_els]
        xe = cols[els]  # (nel, 3, 3): local node values per rhs column
        ye = np.einsum("eij,ejc->eic", blocks, xe)
        out = np.zeros((self.fine.n_nodes, 3), dtype=complex)
        np.add.at(out, els.ravel(), ye.reshape(-1, 3))
        bedges = self.boundary_edges_of_coarse[T]
        if bedges.size:
            enodes = self.fine.boundary_edges[bedges]
            xb = cols[enodes]  # (ne, 2, 3)
            yb = np.einsum("eij,ejc->eic", self.edge_blocks[bedges], xb)
            np.add.at(out, enodes.ravel(), (-1j * self.k) * yb.reshape(-1, 3))
        return -out

    def _factorize(self, dofs: np.ndarray, element: int, m: int) -> "_PatchSolver":
        C = kernel_constraint_rows(self.interp, dofs)
        G_patch = self.G[dofs].tocsc()[:, dofs]
        if C.shape[0] == 0:
            try:
                return _SaddleSolver(spla.splu(G_patch), C, G_patch)
            except RuntimeError as exc:
                raise NumericalError(
                    f"patch factorization failed for element {element} (m={m}): {exc}"
                ) from exc
        saddle = sp.bmat(
            [[G_patch, C.T.astype(complex)], [C.astype(complex), None]], format="csc"
        )
        try:
            return _SaddleSolver(spla.splu(saddle), C, G_patch)
        except RuntimeError as exc:
            # tiny patches can restrict the interpolation rows to a rank-
            # deficient constraint block; fall back to an explicit kernel basis
            if dofs.size > 4096:
                raise NumericalError(
                    f"saddle factorization failed for element {element} "
                    f"(m={m}, {dofs.size} DOFs): {exc}"
                ) from exc
            return _NullSpaceSolver(C, G_patch)

    def solve_element(self, T: int, m: int) -> ElementCorrector:
        patch_ = patch(self.coarse, T, m)
        coarse_nodes = self.coarse.elements[T]
        fine_els = self.fine_elements_of_patch(patch_.elements)
        dofs, _ = patch_dof_sets(self.fine, fine_els)
        if dofs.size == 0:
            return ElementCorrector(
                element=T,
                m=m,
                coarse_nodes=coarse_nodes,
                dofs=dofs,
                vectors=np.zeros((0, 3), dtype=complex),
                n_patch_elements=patch_.n_elements,
                constraint_inf=0.0,
                residual_rel=0.0,
            )
        saturated = patch_.n_elements == self.coarse.n_elements
        if saturated and self._saturated_factorization is not None:
            solver = self._saturated_factorization
        else:
            solver = self._factorize(dofs, T, m)
            if saturated:
                self._saturated_factorization = solver

        r = self.element_rhs(T)[dofs]
        w, residual = solver.solve(r)
        if not np.isfinite(w).all() or residual > 1e-8:
            raise NumericalError(
                f"corrector solve for element {T} (m={m}) failed: "
                f"relative residual {residual:.3e}"
            )
        C, G_patch = solver.C, solver.G_patch
        wmax = np.abs(w).max() if w.size else 0.0
        constraint = float(np.abs(C @ w).max()) if C.shape[0] else 0.0
        ellipticity = float(np.einsum("ic,ic->", np.conj(w), G_patch @ w).real)
        if ellipticity < 0:
            log.warning(
                "patch form lost ellipticity at element %d (m=%d): "
                "Re(w^H G w) = %.3e; resolution condition likely violated",
                T,
                m,
                ellipticity,
            )
        return ElementCorrector(
            element=T,
            m=m,
            coarse_nodes=coarse_nodes,
            dofs=dofs,
            vectors=w,
            n_patch_elements=patch_.n_elements,
            constraint_inf=constraint / max(wmax, 1e-300),
            residual_rel=residual,
        )

    # -- seminorm helpers ----------------------------------------------------

    def element_energies(self, q: np.ndarray) -> np.ndarray:
        """Per-fine-element A-weighted gradient energy of a nodal field."""
        qe = q[self.fine.elements]
        return np.einsum("ei,eij,ej->e", np.conj(qe), self.blocks_S, qe).real

    def expand(self, ec: ElementCorrector) -> np.ndarray:
        """Element corrector columns as full fine-length vectors."""
        out = np.zeros((self.fine.n_nodes, 3), dtype=complex)
        out[ec.dofs] = ec.vectors
        return out


_WORK_ENGINE: CorrectorEngine | None = None
_WORK_M: int | None = None


def _solve_task(T: int) -> ElementCorrector:
    return _WORK_ENGINE.solve_element(T, _WORK_M)


def element_corrector(
    T: int,
    m: int,
    coarse: StructuredTriMesh,
    fine: StructuredTriMesh,
    embedding: Embedding,
    ops: OperatorSet,
    interp: InterpolationOperator,
    element_A: np.ndarray,
) -> ElementCorrector:
    """Solve one element's localized corrector problem."""
    engine = CorrectorEngine(coarse, fine, embedding, ops, interp, element_A)
    return engine.solve_element(T, m)


def assemble_global_corrector(
    element_correctors: list[ElementCorrector],
    n_fine: int,
    n_coarse: int,
    m: int | None,
) -> CorrectorSet:
    """Sum element correctors into the sparse coarse-to-fine corrector map.

    Accumulation runs in element-index order so the result is bit-identical
    regardless of how the solves were scheduled.
    """
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    diagnostics = []
    for ec in sorted(element_correctors, key=lambda e: e.element):
        diagnostics.append(ec)
        if ec.dofs.size == 0:
            continue
        for j, z in enumerate(ec.coarse_nodes):
            rows.append(ec.dofs)
            cols.append(np.full(ec.dofs.shape[0], z, dtype=np.int64))
            vals.append(ec.vectors[:, j])
    if rows:
        matrix = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_fine, n_coarse),
        ).tocsc()
    else:
        matrix = sp.csc_matrix((n_fine, n_coarse), dtype=complex)
    return CorrectorSet(matrix=matrix, m=m, diagnostics=diagnostics)


def compute_correctors(
    coarse: StructuredTriMesh,
    fine: StructuredTriMesh,
    embedding: Embedding,
    ops: OperatorSet,
    interp: InterpolationOperator,
    element_A: np.ndarray,
    m: int,
    workers: int = 1,
    epsilon: float | None = None,
    cache_dir: str | Path | None = None,
    cache_key: str | None = None,
) -> CorrectorSet:
    """All element correctors for oversampling parameter m, merged into one map."""
    if epsilon is not None:
        ratio = ops.wave_number * coarse.mesh_size / epsilon
        if ratio > RESOLUTION_LIMIT:
            warnings.warn(
                f"resolution condition k*H/eps = {ratio:.2f} exceeds "
                f"{RESOLUTION_LIMIT:g}; corrector problems may lose coercivity "
                "(pre-asymptotic regime)",
                stacklevel=2,
            )
    cache_file = None
    if cache_dir is not None and cache_key is not None:
        cache_file = Path(cache_dir) / f"corrector_{cache_key}_m{m}.npz"
        if cache_file.exists():
            return _load_corrector_cache(cache_file, m)

    global _WORK_ENGINE, _WORK_M
    engine = CorrectorEngine(coarse, fine, embedding, ops, interp, element_A)
    n = coarse.n_elements
    if workers > 1 and n > 1:
        _WORK_ENGINE = engine
        _WORK_M = m
        try:
            ctx = multiprocessing.get_context("fork")
            chunk = max(1, n // (workers * 8))
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                results = list(pool.map(_solve_task, range(n), chunksize=chunk))
        finally:
            _WORK_ENGINE = None
            _WORK_M = None
    else:
        results = [engine.solve_element(T, m) for T in range(n)]
    out = assemble_global_corrector(results, fine.n_nodes, coarse.n_nodes, m)
    if cache_file is not None:
        _save_corrector_cache(cache_file, out)
    return out


def corrector_cache_key(
    coefficient, k: float, coarse_level: int, fine_level: int, interpolant: str
) -> str:
    """Exact-match cache key: geometry hash, wave number, levels, interpolant."""
    h = hashlib.sha256()
    h.update(coefficient.cell_values.tobytes())
    h.update(
        f"|E{coefficient.epsilon_exp}|k{k!r}|L{coarse_level}-{fine_level}"
        f"|{interpolant}".encode()
    )
    return h.hexdigest()[:16]


def _save_corrector_cache(path: Path, correctors: CorrectorSet) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    M = correctors.matrix.tocsc()
    np.savez_compressed(
        path,
        data=M.data,
        indices=M.indices,
        indptr=M.indptr,
        shape=np.array(M.shape),
        m=np.array([-1 if correctors.m is None else correctors.m]),
    )


def _load_corrector_cache(path: Path, m: int) -> CorrectorSet:
    with np.load(path) as z:
        matrix = sp.csc_matrix(
            (z["data"], z["indices"], z["indptr"]), shape=tuple(z["shape"])
        )
    log.info("reusing cached correctors from %s", path)
    return CorrectorSet(matrix=matrix, m=m, diagnostics=[])


def dual_corrector(correctors: CorrectorSet) -> CorrectorSet:
    """Entrywise conjugate; exact because the coarse basis is real."""
    return CorrectorSet(
        matrix=correctors.matrix.conjugate(),
        m=correctors.m,
        diagnostics=correctors.diagnostics,
    )


def ideal_corrector(
    coarse: StructuredTriMesh,
    fine: StructuredTriMesh,
    embedding: Embedding,
    ops: OperatorSet,
    interp: InterpolationOperator,
    block: int = 64,
) -> CorrectorSet:
    """Global corrector from one unlocalized constrained solve per coarse node.

    This is an independent computation path from the element-by-element
    localized solver (whole-domain right-hand sides, single factorization)
    and serves as the oracle for saturated-patch equivalence checks.
    """
    G = helmholtz_matrix(ops).tocsc()
    C = kernel_constraint_rows(interp, np.arange(fine.n_nodes))
    saddle = sp.bmat(
        [[G, C.T.astype(complex)], [C.astype(complex), None]], format="csc"
    )
    try:
        lu = spla.splu(saddle)
    except RuntimeError as exc:
        raise NumericalError(f"global corrector factorization failed: {exc}") from exc
    P = embedding.prolongation.tocsc()
    n_fine, n_coarse = P.shape
    cols = []
    for start in range(0, n_coarse, block):
        stop = min(start + block, n_coarse)
        rhs_top = -np.asarray((G @ P[:, start:stop]).todense(), dtype=complex)
        rhs = np.vstack([rhs_top, np.zeros((C.shape[0], stop - start), complex)])
        sol = lu.solve(rhs)
        cols.append(sol[:n_fine])
    matrix = sp.csc_matrix(np.hstack(cols))
    return CorrectorSet(matrix=matrix, m=None, diagnostics=[])


def _fit_decay(layers: np.ndarray, tails: np.ndarray) -> tuple[float, float]:
    valid = tails > 0
    if valid.sum() < 2:
        return float("nan"), float("nan")
    slope = np.polyfit(layers[valid], np.log(tails[valid]), 1)[0]
    return float(slope), float(np.exp(slope))


def corrector_decay_profile(
    T: int,
    m_max: int,
    coarse: StructuredTriMesh,
    fine: StructuredTriMesh,
    embedding: Embedding,
    ops: OperatorSet,
    interp: InterpolationOperator,
    element_A: np.ndarray,
    engine: CorrectorEngine | None = None,
) -> DecayProfile:
    """Tail energies |Q_T v|_{1,A,outside m-layer patch} for m = 0..m_max."""
    engine = engine or CorrectorEngine(coarse, fine, embedding, ops, interp, element_A)
    ideal = engine.solve_element(T, saturating_layers(coarse))
    q = engine.expand(ideal)  # (n_fine, 3)
    energies = np.stack(
        [engine.element_energies(q[:, j]) for j in range(3)], axis=1
    )
    layers = np.arange(m_max + 1)
    tails = np.zeros((m_max + 1, 3))
    for m in layers:
        patch_ = patch(coarse, T, m)
        inside = np.zeros(fine.n_elements, dtype=bool)
        inside[engine.fine_elements_of_patch(patch_.elements)] = True
        tail_sq = energies[~inside].sum(axis=0)
        tails[m] = np.sqrt(np.maximum(tail_sq, 0.0))
    slope, beta = _fit_decay(layers, tails.max(axis=1))
    return DecayProfile(
        element=T,
        layers=layers,
        tail_energies=tails,
        fitted_slope=slope,
        fitted_beta=beta,
    )


def localization_errors(
    T: int,
    ms: list[int],
    coarse: StructuredTriMesh,
    fine: StructuredTriMesh,
    embedding: Embedding,
    ops: OperatorSet,
    interp: InterpolationOperator,
    element_A: np.ndarray,
    engine: CorrectorEngine | None = None,
) -> np.ndarray:
    """|(Q_T - Q_{T,m}) lambda_z|_{1,A} per m (rows) and local hat (columns)."""
    engine = engine or CorrectorEngine(coarse, fine, embedding, ops, interp, element_A)
    q_ideal = engine.expand(engine.solve_element(T, saturating_layers(coarse)))
    out = np.zeros((len(ms), 3))
    for i, m in enumerate(ms):
        diff = q_ideal - engine.expand(engine.solve_element(T, m))
        for j in range(3):
            out[i, j] = np.sqrt(max(engine.element_energies(diff[:, j]).sum(), 0.0))
    return out
