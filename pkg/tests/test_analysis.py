import numpy as np
import pytest

from hclod import (
    ConfigurationError,
    GeometrySpec,
    assemble_operators,
    best_approximation,
    build_coefficient,
    build_embedding,
    build_interpolation,
    build_mesh,
    convergence_study,
    element_values,
    eoc,
    norm,
    relative_errors,
)
from hclod.analysis import ErrorReport, StudyRow
from hclod.errors import NumericalError


@pytest.fixture(scope="module")
def ops_world():
    mesh = build_mesh(5)
    coeff = build_coefficient(GeometrySpec("mie_square", epsilon_exp=3))
    eA = element_values(coeff, mesh)
    return mesh, eA, assemble_operators(mesh, eA, 9.0)


class TestNorms:
    def test_zero_vector(self, ops_world):
        mesh, _, ops = ops_world
        v = np.zeros(mesh.n_nodes)
        for which in ("energy", "semi_A", "l2_A", "l2"):
            assert norm(v, which, ops) == 0.0

    def test_unit_coefficient_identities(self):
        mesh = build_mesh(4)
        ops = assemble_operators(mesh, np.ones(mesh.n_elements), 3.0)
        rng = np.random.default_rng(2)
        v = rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)
        assert norm(v, "l2_A", ops) == pytest.approx(norm(v, "l2", ops), rel=1e-13)
        lhs = norm(v, "energy", ops) ** 2
        rhs = norm(v, "semi_A", ops) ** 2 + 9.0 * norm(v, "l2", ops) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-13)

    def test_constant_vector(self, ops_world):
        mesh, _, ops = ops_world
        c = 2.5 - 1.5j
        v = np.full(mesh.n_nodes, c)
        assert norm(v, "semi_A", ops) <= 1e-10
        # ||1||_{L2} = 1 on the unit square
        assert norm(v, "energy", ops) == pytest.approx(
            ops.wave_number * abs(c), rel=1e-12
        )

    def test_norm_identity_random(self, ops_world):
        mesh, _, ops = ops_world
        rng = np.random.default_rng(5)
        k = ops.wave_number
        for _ in range(10):
            v = rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)
            lhs = norm(v, "energy", ops) ** 2
            rhs = norm(v, "semi_A", ops) ** 2 + k**2 * norm(v, "l2", ops) ** 2
            assert abs(lhs - rhs) <= 1e-12 * lhs

    def test_unknown_norm(self, ops_world):
        _, _, ops = ops_world
        with pytest.raises(ValueError):
            norm(np.zeros(ops.n_nodes), "h2", ops)


class TestBestApproximation:
    @pytest.fixture(scope="class")
    def emb_world(self, ops_world):
        mesh, eA, ops = ops_world
        coarse = build_mesh(3)
        emb = build_embedding(coarse, mesh)
        return coarse, emb

    def test_coarse_input_returned(self, ops_world, emb_world):
        mesh, _, ops = ops_world
        coarse, emb = emb_world
        rng = np.random.default_rng(4)
        x = rng.normal(size=coarse.n_nodes) + 1j * rng.normal(size=coarse.n_nodes)
        for which in ("energy", "l2_A", "l2"):
            got = best_approximation(emb.prolongation @ x, which, emb, ops)
            assert np.abs(got - x).max() <= 1e-10

    def test_residual_orthogonality(self, ops_world, emb_world):
        mesh, _, ops = ops_world
        coarse, emb = emb_world
        rng = np.random.default_rng(9)
        u = rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)
        X = {
            "energy": ops.stiffness_A + ops.wave_number**2 * ops.mass,
            "l2_A": ops.mass_A,
            "l2": ops.mass,
        }
        for which, M in X.items():
            x = best_approximation(u, which, emb, ops)
            gap = emb.prolongation.T @ (M @ (u - emb.prolongation @ x))
            assert np.abs(gap).max() <= 1e-9

    def test_best_beats_interpolation(self, ops_world, emb_world):
        mesh, eA, ops = ops_world
        coarse, emb = emb_world
        interp = build_interpolation("weighted", coarse, mesh, emb, eA)
        rng = np.random.default_rng(12)
        u = rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)
        xb = best_approximation(u, "l2", emb, ops)
        err_best = norm(u - emb.prolongation @ xb, "l2", ops)
        err_interp = norm(u - emb.prolongation @ (interp.matrix @ u), "l2", ops)
        assert err_best <= err_interp + 1e-14

    def test_monotone_under_refinement(self, ops_world):
        mesh, _, ops = ops_world
        rng = np.random.default_rng(21)
        u = rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)
        errs = []
        for level in (2, 3, 4):
            emb = build_embedding(build_mesh(level), mesh)
            x = best_approximation(u, "l2_A", emb, ops)
            errs.append(norm(u - emb.prolongation @ x, "l2_A", ops))
        assert errs[0] >= errs[1] >= errs[2]


class TestEoc:
    def test_recovers_synthetic_order(self):
        Hs = 2.0 ** -np.arange(2, 7)
        for p in (1.0, 2.0, 0.5):
            errors = 3.7 * Hs**p
            assert np.allclose(eoc(errors, Hs), p, atol=1e-13)

    def test_report_series_helpers(self):
        rows = [
            StudyRow("lod_full", lv, 2.0**-lv, 2, 4.0**-lv, 0.0, 0.0, 9, 0.0)
            for lv in (2, 3, 4)
        ]
        report = ErrorReport(rows=rows)
        assert np.allclose(report.eoc_series("lod_full", 2, "energy"), 2.0)
        assert report.methods_and_ms() == [("lod_full", 2)]


class TestConvergenceStudy:
    def test_validation(self):
        coeff = build_coefficient(GeometrySpec("constant_one"))
        with pytest.raises(ConfigurationError):
            convergence_study(coeff, 2.0, (0.5, 0.5), 4, [], [1])
        with pytest.raises(ConfigurationError):
            convergence_study(coeff, 2.0, (0.5, 0.5), 4, [2], [])
        with pytest.raises(ConfigurationError):
            convergence_study(coeff, 2.0, (0.5, 0.5), 3, [3], [1])

    def test_homogeneous_medium_tracks_best_approximation(self):
        # low-frequency sanity: LOD (m=2) energy error within 2x of P1-best
        coeff = build_coefficient(GeometrySpec("constant_one"))
        report = convergence_study(
            coeff, 2.0, (0.5, 0.5), fine_level=5, coarse_levels=[2, 3],
            m_values=[2], interpolant="unweighted",
        )
        for level in (2, 3):
            lod = [
                r for r in report.series("lod_full", 2) if r.coarse_level == level
            ][0]
            best = [r for r in report.series("p1_best", 0) if r.coarse_level == level][0]
            assert lod.err_energy_rel <= 2.0 * best.err_energy_rel

    def test_rows_complete(self):
        coeff = build_coefficient(GeometrySpec("mie_square", epsilon_exp=2))
        report = convergence_study(
            coeff, 4.0, (0.125, 0.5), fine_level=4, coarse_levels=[2],
            m_values=[1, 2], interpolant="weighted",
        )
        methods = {(r.method, r.m) for r in report.rows}
        assert methods == {
            ("p1fem", 0), ("p1_best", 0), ("lod_full", 1), ("lod_coarse", 1),
            ("lod_full", 2), ("lod_coarse", 2),
        }
        for r in report.rows:
            assert r.err_energy_rel >= 0.0
            assert r.dim_VH == 25
        # best approximation is optimal: never beaten by the FEM solution
        fem = report.series("p1fem", 0)[0]
        best = report.series("p1_best", 0)[0]
        assert best.err_energy_rel <= fem.err_energy_rel + 1e-14
        assert best.err_l2A_rel <= fem.err_l2A_rel + 1e-14
        assert best.err_l2_rel <= fem.err_l2_rel + 1e-14


class TestRelativeErrors:
    def test_zero_error(self, ops_world):
        mesh, _, ops = ops_world
        rng = np.random.default_rng(3)
        u = rng.normal(size=mesh.n_nodes) + 1j * rng.normal(size=mesh.n_nodes)
        errs = relative_errors(u, u, ops)
        assert all(v == 0.0 for v in errs.values())

    def test_negative_square_raises(self, ops_world):
        # forged operator with an indefinite "mass" must be rejected
        mesh, eA, ops = ops_world
        import copy
        import scipy.sparse as sp

        bad = copy.copy(ops)
        v = np.ones(mesh.n_nodes)
        bad.mass = -sp.identity(mesh.n_nodes, format="csr")
        with pytest.raises(NumericalError):
            norm(v, "l2", bad)
