"""Command-line front end: converge, solve, and decay experiments.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import convergence_study
from .assembly import assemble_load, assemble_operators, helmholtz_matrix, solve_fine_reference
from .coefficient import build_coefficient, element_values, write_cells
from .config import ExperimentConfig, load_config
from .correctors import (
    CorrectorEngine,
    compute_correctors,
    corrector_decay_profile,
    localization_errors,
)
from .errors import ConfigurationError, NumericalError
from .export import (
    read_field_csv,
    write_convergence_csvs,
    write_decay_csv,
    write_field_csv,
    write_vtk,
)
from .interpolation import build_interpolation
from .lod import assemble_lod, solve_lod
from .mesh import build_embedding, build_mesh

log = logging.getLogger(__name__)


def cmd_converge(cfg: ExperimentConfig) -> int:
    coefficient = build_coefficient(cfg.geometry_spec())
    report = convergence_study(
        coefficient,
        cfg.k,
        cfg.x0,
        cfg.fine_level,
        cfg.coarse_levels,
        cfg.m_values,
        interpolant=cfg.interpolant,
        workers=cfg.effective_workers(),
        metadata={"geometry": cfg.geometry},
    )
    for path in write_convergence_csvs(cfg.output_dir, report):
        log.info("wrote %s", path)
    return 0


def _require_single_point(cfg: ExperimentConfig) -> tuple[int, int]:
    if len(cfg.coarse_levels) != 1 or len(cfg.m_values) != 1:
        raise ConfigurationError(
            "this command needs exactly one coarse level and one m value; "
            f"got levels {cfg.coarse_levels}, m {cfg.m_values}"
        )
    return cfg.coarse_levels[0], cfg.m_values[0]


def cmd_solve(cfg: ExperimentConfig, diff_dir: str | None = None) -> int:
    level, m = _require_single_point(cfg)
    coefficient = build_coefficient(cfg.geometry_spec())
    fine = build_mesh(cfg.fine_level)
    element_A = element_values(coefficient, fine)
    ops = assemble_operators(fine, element_A, cfg.k)
    load = assemble_load(fine, cfg.x0)
    u_ref = solve_fine_reference(helmholtz_matrix(ops), load.values)

    coarse = build_mesh(level)
    embedding = build_embedding(coarse, fine)
    interp = build_interpolation(cfg.interpolant, coarse, fine, embedding, element_A)
    Q = compute_correctors(
        coarse, fine, embedding, ops, interp, element_A, m,
        workers=cfg.effective_workers(), epsilon=coefficient.effective_epsilon,
    )
    sol = solve_lod(assemble_lod(Q, ops, load, embedding))
    u_coarse_part = embedding.prolongation @ sol.u_coarse

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    fields = {"u_lod": sol.u_fine, "u_coarse": u_coarse_part, "u_ref": u_ref}
    for name, values in fields.items():
        if not np.isfinite(values).all():
            raise NumericalError(f"field {name} contains non-finite entries")
        write_field_csv(outdir / f"{name}.csv", fine, values)
        write_vtk(outdir / f"{name}.vtk", fine, {name: values})
        log.info("wrote %s.{csv,vtk}", outdir / name)
    write_cells(outdir / "coefficient_cells.txt", coefficient)

    if diff_dir is not None:
        other_path = Path(diff_dir) / "u_lod.csv"
        if not other_path.exists():
            raise ConfigurationError(f"diff target {other_path} does not exist")
        points, other = read_field_csv(other_path)
        if other.shape[0] != fine.n_nodes or not np.allclose(
            points, fine.nodes, atol=1e-12
        ):
            raise ConfigurationError(
                f"diff target {other_path} was computed on a different mesh"
            )
        delta = sol.u_fine - other
        write_field_csv(outdir / "u_lod_diff.csv", fine, delta)
        write_vtk(outdir / "u_lod_diff.vtk", fine, {"u_lod_diff": delta})
        log.info("wrote %s", outdir / "u_lod_diff.csv")
    return 0


def cmd_decay(cfg: ExperimentConfig) -> int:
    level = cfg.coarse_levels[0]
    if len(cfg.coarse_levels) != 1:
        raise ConfigurationError(
            f"decay needs exactly one coarse level, got {cfg.coarse_levels}"
        )
    coefficient = build_coefficient(cfg.geometry_spec())
    fine = build_mesh(cfg.fine_level)
    element_A = element_values(coefficient, fine)
    ops = assemble_operators(fine, element_A, cfg.k)
    coarse = build_mesh(level)
    embedding = build_embedding(coarse, fine)
    interp = build_interpolation(cfg.interpolant, coarse, fine, embedding, element_A)

    if cfg.seed_element == "auto":
        center = np.array([0.5, 0.5])
        seed = int(np.argmin(np.linalg.norm(coarse.barycenters - center, axis=1)))
    else:
        seed = int(cfg.seed_element)
        if not 0 <= seed < coarse.n_elements:
            raise ConfigurationError(
                f"seed_element {seed} out of range for level {level}"
            )

    engine = CorrectorEngine(coarse, fine, embedding, ops, interp, element_A)
    profile = corrector_decay_profile(
        seed, cfg.m_max, coarse, fine, embedding, ops, interp, element_A, engine=engine
    )
    loc = localization_errors(
        seed, list(range(cfg.m_max + 1)), coarse, fine, embedding, ops, interp,
        element_A, engine=engine,
    )
    rows = [
        {
            "element": seed,
            "m": int(m),
            "tail_energy": float(profile.tails_max[i]),
            "localization_error": float(loc[i].max()),
            "fitted_beta": profile.fitted_beta,
        }
        for i, m in enumerate(profile.layers)
    ]
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = write_decay_csv(outdir / "decay.csv", rows)
    log.info("wrote %s", path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hclod",
        description=(
            "Multiscale (LOD) experiments for the high-contrast Helmholtz "
            "equation on the unit square"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_conv = sub.add_parser("converge", help="convergence sweep over (H, m)")
    p_conv.add_argument("config", help="experiment config file")

    p_solve = sub.add_parser("solve", help="single (H, m) solve with field export")
    p_solve.add_argument("config", help="experiment config file")
    p_solve.add_argument(
        "--diff",
        metavar="DIR",
        default=None,
        help="output dir of a previous solve; also export the u_lod difference",
    )

    p_decay = sub.add_parser("decay", help="corrector decay study for one element")
    p_decay.add_argument("config", help="experiment config file")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "converge":
            return cmd_converge(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, diff_dir=args.diff)
        if args.command == "decay":
            return cmd_decay(cfg)
        raise ConfigurationError(f"unknown command {args.command!r}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
