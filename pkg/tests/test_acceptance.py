"""Acceptance suite: the release exit criteria at fixed tolerances.

The heavy fixtures (fine level 7) are shared across criteria; worker count
comes from HCLOD_WORKERS (default 2).  Every criterion records one PASS/FAIL
line, printed in the terminal summary section 'acceptance criteria'.
"""

import os
import warnings

import numpy as np
import pytest

from hclod import (
    CorrectorEngine,
    GeometrySpec,
    assemble_load,
    assemble_lod,
    assemble_operators,
    build_coefficient,
    build_embedding,
    build_interpolation,
    build_mesh,
    compute_correctors,
    element_values,
    helmholtz_matrix,
    ideal_corrector,
    localization_errors,
    norm,
    relative_errors,
    solve_fine_reference,
    solve_lod,
)
from hclod.analysis import convergence_study
from hclod.correctors import saturating_layers

from conftest import record_criterion

WORKERS = int(os.environ.get("HCLOD_WORKERS", "2"))

warnings.filterwarnings("ignore", message="resolution condition")


def check(name: str, passed: bool, detail: str = ""):
    record_criterion(name, bool(passed), detail)
    assert passed, f"{name}: {detail}"


@pytest.fixture(scope="module")
def mie_study_fine7():
    """Mie setup k=9, eps=2^-3, x0=(0.125,0.5), fine 7, coarse 2..5, m=3, weighted."""
    coeff = build_coefficient(GeometrySpec("mie_square", epsilon_exp=3))
    return convergence_study(
        coeff, 9.0, (0.125, 0.5), fine_level=7, coarse_levels=[2, 3, 4, 5],
        m_values=[3], interpolant="weighted", workers=WORKERS,
    )


def test_oracle_equivalence_ideal_vs_localized():
    # coarse 3 / fine 5, mie E=3, k=9: saturated-m LOD equals the global
    # ideal method to 1e-9 in the energy norm
    coarse, fine = build_mesh(3), build_mesh(5)
    emb = build_embedding(coarse, fine)
    coeff = build_coefficient(GeometrySpec("mie_square", epsilon_exp=3))
    eA = element_values(coeff, fine)
    ops = assemble_operators(fine, eA, 9.0)
    interp = build_interpolation("weighted", coarse, fine, emb, eA)
    load = assemble_load(fine, (0.125, 0.5))

    Qs = compute_correctors(
        coarse, fine, emb, ops, interp, eA, m=saturating_layers(coarse)
    )
    Qi = ideal_corrector(coarse, fine, emb, ops, interp)
    us = solve_lod(assemble_lod(Qs, ops, load, emb)).u_fine
    ui = solve_lod(assemble_lod(Qi, ops, load, emb)).u_fine
    rel = norm(us - ui, "energy", ops) / norm(ui, "energy", ops)
    check(
        "oracle equivalence (ideal vs saturated localized)",
        rel <= 1e-9,
        f"relative energy difference {rel:.2e} <= 1e-9",
    )


def test_convergence_rates(mie_study_fine7):
    report = mie_study_fine7
    eoc_energy = report.eoc_series("lod_full", 3, "energy")
    eoc_l2A = report.eoc_series("lod_full", 3, "l2_A")
    med_energy = float(np.median(eoc_energy[-2:]))
    med_l2A = float(np.median(eoc_l2A[-2:]))

    coarse_rows = report.series("lod_coarse", 3)
    best_rows = report.series("p1_best", 0)
    um_l2A = coarse_rows[-1].err_l2A_rel
    best_l2A = best_rows[-1].err_l2A_rel
    tracks = um_l2A <= 3.0 * best_l2A

    ok = med_energy >= 0.8 and med_l2A >= 1.7 and tracks
    check(
        "convergence rates (fine 7, m=3, weighted)",
        ok,
        f"median EOC energy {med_energy:.2f} >= 0.8, "
        f"median EOC l2A {med_l2A:.2f} >= 1.7, "
        f"u_Hm l2A {um_l2A:.4f} <= 3 x best {best_l2A:.4f}",
    )


def test_fem_failure_contrast(mie_study_fine7):
    report = mie_study_fine7
    fem = report.series("p1fem", 0)[-1]
    lod = report.series("lod_full", 3)[-1]
    assert fem.coarse_level == lod.coarse_level == 5
    ratio = fem.err_energy_rel / lod.err_energy_rel
    check(
        "FEM failure contrast at H=2^-5",
        ratio >= 5.0,
        f"P1FEM/LOD energy error ratio {ratio:.1f} >= 5",
    )


def test_corrector_decay_fine7():
    # coarse 4 / fine 7, interior element: localization error decreases
    # monotonically over m=1,2,3 and drops by 10x from m=1 to m=3
    coarse, fine = build_mesh(4), build_mesh(7)
    emb = build_embedding(coarse, fine)
    coeff = build_coefficient(GeometrySpec("mie_square", epsilon_exp=3))
    eA = element_values(coeff, fine)
    ops = assemble_operators(fine, eA, 9.0)
    interp = build_interpolation("weighted", coarse, fine, emb, eA)
    engine = CorrectorEngine(coarse, fine, emb, ops, interp, eA)
    T = int(np.argmin(np.linalg.norm(coarse.barycenters - 0.5, axis=1)))
    errs = localization_errors(
        T, [1, 2, 3], coarse, fine, emb, ops, interp, eA, engine=engine
    ).max(axis=1)
    ok = errs[0] > errs[1] > errs[2] and errs[2] <= errs[0] / 10.0
    check(
        "corrector decay (coarse 4, fine 7)",
        ok,
        f"localization errors {errs[0]:.3e} > {errs[1]:.3e} > {errs[2]:.3e}, "
        f"m=3/m=1 ratio {errs[2] / errs[0]:.3f} <= 0.1",
    )


def test_weighted_vs_unweighted_interpolant():
    # eps = 2^-4, k=9, fine 7, m=3, coarse 5: the weighted interpolant's LOD
    # energy error does not exceed the unweighted one's
    coarse, fine = build_mesh(5), build_mesh(7)
    emb = build_embedding(coarse, fine)
    coeff = build_coefficient(GeometrySpec("mie_square", epsilon_exp=4))
    eA = element_values(coeff, fine)
    ops = assemble_operators(fine, eA, 9.0)
    load = assemble_load(fine, (0.125, 0.5))
    u_ref = solve_fine_reference(helmholtz_matrix(ops), load.values)

    errors = {}
    for kind in ("weighted", "unweighted"):
        interp = build_interpolation(kind, coarse, fine, emb, eA)
        Q = compute_correctors(
            coarse, fine, emb, ops, interp, eA, m=3, workers=WORKERS
        )
        sol = solve_lod(assemble_lod(Q, ops, load, emb))
        errors[kind] = relative_errors(sol.u_fine, u_ref, ops)["energy"]
    check(
        "weighted vs unweighted interpolant (eps=2^-4)",
        errors["weighted"] <= errors["unweighted"],
        f"weighted {errors['weighted']:.4f} <= unweighted {errors['unweighted']:.4f}",
    )


@pytest.mark.parametrize("levels", [(3, 5), (4, 6)])
def test_invariant_suite(levels):
    coarse, fine = build_mesh(levels[0]), build_mesh(levels[1])
    emb = build_embedding(coarse, fine)
    coeff = build_coefficient(GeometrySpec("mie_square", epsilon_exp=3))
    eA = element_values(coeff, fine)
    ops = assemble_operators(fine, eA, 9.0)
    interp = build_interpolation("weighted", coarse, fine, emb, eA)
    load = assemble_load(fine, (0.125, 0.5))
    Q = compute_correctors(coarse, fine, emb, ops, interp, eA, m=2, workers=WORKERS)

    rng = np.random.default_rng(levels[0])
    x = rng.normal(size=coarse.n_nodes)
    proj = np.abs(interp.matrix @ (emb.prolongation @ x) - x).max()

    kernel = np.abs((interp.matrix @ Q.matrix).toarray()).max()

    system = assemble_lod(Q, ops, load, emb)
    K = system.matrix
    sym = np.abs((K - K.T).toarray()).max() / np.abs(K.toarray()).max()

    sol = solve_lod(system)
    G = helmholtz_matrix(ops)
    u_ref = solve_fine_reference(G, load.values)
    galerkin = np.abs(system.trial_map.T @ (G @ (u_ref - sol.u_fine))).max()
    galerkin_rel = galerkin / np.linalg.norm(load.values)

    v = rng.normal(size=fine.n_nodes) + 1j * rng.normal(size=fine.n_nodes)
    lhs = norm(v, "energy", ops) ** 2
    rhs = norm(v, "semi_A", ops) ** 2 + ops.wave_number**2 * norm(v, "l2", ops) ** 2
    identity_rel = abs(lhs - rhs) / lhs

    w_unit = build_interpolation(
        "weighted", coarse, fine, emb, np.ones(fine.n_elements)
    )
    u_unit = build_interpolation("unweighted", coarse, fine, emb)
    eq = (w_unit.matrix - u_unit.matrix)
    eq.eliminate_zeros()

    ok = (
        proj <= 1e-12
        and kernel <= 1e-9
        and sym <= 1e-9
        and galerkin_rel <= 1e-8
        and identity_rel <= 1e-12
        and eq.nnz == 0
    )
    check(
        f"invariant suite on levels {levels}",
        ok,
        f"I.P-id {proj:.1e}, I.Q {kernel:.1e}, K symmetry {sym:.1e}, "
        f"Galerkin {galerkin_rel:.1e}, norm identity {identity_rel:.1e}, "
        f"A=1 operator equality {'exact' if eq.nnz == 0 else 'BROKEN'}",
    )
