import subprocess
import sys

import numpy as np
import pytest

from hclod_plots import (
    PlotInputError,
    PlotSpec,
    fit_loglog_slope,
    plot_convergence,
    plot_decay,
    plot_field,
)
from hclod_plots.cli import main

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

CONV_HEADER = (
    "H,m,err_energy_rel,err_l2A_rel,err_l2_rel,eoc_energy,eoc_l2A,dim_VH,wall_time_s"
)


def write_convergence_csv(path, Hs, errs, m=2):
    lines = [CONV_HEADER]
    for i, (H, e) in enumerate(zip(Hs, errs)):
        eoc = "nan" if i == 0 else f"{np.log(errs[i-1]/e)/np.log(Hs[i-1]/H):.6e}"
        lines.append(f"{H:.16e},{m},{e:.16e},{e:.16e},{e:.16e},{eoc},{eoc},100,0.1")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_field_csv(path, n=17, value=0.0):
    xs = np.linspace(0.0, 1.0, n)
    lines = ["x,y,re,im"]
    for y in xs:
        for x in xs:
            lines.append(f"{x:.16e},{y:.16e},{value:.16e},0.0")
    path.write_text("\n".join(lines) + "\n")
    return path


class TestConvergenceFigure:
    def test_synthetic_slope_two_recovered(self, tmp_path):
        Hs = 2.0 ** -np.arange(2, 7)
        csv = write_convergence_csv(tmp_path / "lod_full.csv", Hs, 0.8 * Hs**2)
        out = tmp_path / "conv.png"
        slopes = plot_convergence(
            PlotSpec(inputs=[csv], kind="convergence", output=out)
        )
        assert out.read_bytes()[:8] == PNG_MAGIC
        (label, slope), = slopes.items()
        assert label == "lod_full m=2"
        assert abs(slope - 2.0) <= 0.01 * 2.0  # within 1 percent
        direct = fit_loglog_slope(Hs, 0.8 * Hs**2)
        assert direct == pytest.approx(slope, abs=1e-12)

    def test_single_row_no_crash(self, tmp_path):
        csv = write_convergence_csv(tmp_path / "p1fem.csv", [0.25], [0.5], m=0)
        out = tmp_path / "single.png"
        slopes = plot_convergence(
            PlotSpec(inputs=[csv], kind="convergence", output=out)
        )
        assert out.exists()
        assert np.isnan(list(slopes.values())[0])

    def test_multiple_methods_and_ms(self, tmp_path):
        Hs = 2.0 ** -np.arange(2, 6)
        a = write_convergence_csv(tmp_path / "lod_full.csv", Hs, Hs**1.0, m=1)
        extra = "\n".join(
            f"{H:.16e},3,{(H**2):.16e},{(H**2):.16e},{(H**2):.16e},nan,nan,10,0.0"
            for H in Hs
        )
        a.write_text(a.read_text() + extra + "\n")
        b = write_convergence_csv(tmp_path / "p1fem.csv", Hs, 0 * Hs + 0.9, m=0)
        out = tmp_path / "multi.png"
        slopes = plot_convergence(
            PlotSpec(inputs=[a, b], kind="convergence", output=out)
        )
        assert set(slopes) == {"lod_full m=1", "lod_full m=3", "p1fem"}
        assert slopes["lod_full m=1"] == pytest.approx(1.0, abs=1e-9)
        assert slopes["lod_full m=3"] == pytest.approx(2.0, abs=1e-9)

    def test_missing_columns_fail_fast(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("H,m\n0.25,1\n")
        with pytest.raises(PlotInputError, match="missing columns"):
            plot_convergence(
                PlotSpec(inputs=[bad], kind="convergence", output=tmp_path / "x.png")
            )

    def test_cli_exit_codes(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("H,m\n0.25,1\n")
        assert main(["convergence", str(bad), "-o", str(tmp_path / "x.png")]) == 2
        good = write_convergence_csv(
            tmp_path / "lod_full.csv", [0.25, 0.125], [0.1, 0.05]
        )
        assert main(["convergence", str(good), "-o", str(tmp_path / "ok.png")]) == 0


class TestDecayFigure:
    def test_decay_plot(self, tmp_path):
        csv = tmp_path / "decay.csv"
        rows = ["element,m,tail_energy,localization_error,fitted_beta"]
        tails = [0.3, 0.03, 0.003, 0.0]
        locs = [0.3, 0.06, 0.006, 1e-12]
        for m, (t, l) in enumerate(zip(tails, locs)):
            rows.append(f"77,{m},{t:.16e},{l:.16e},1.0e-01")
        csv.write_text("\n".join(rows) + "\n")
        out = tmp_path / "decay.png"
        assert plot_decay(PlotSpec(inputs=[csv], kind="decay", output=out)) == out
        assert out.read_bytes()[:8] == PNG_MAGIC


class TestFieldFigure:
    def test_all_zero_field(self, tmp_path):
        csv = write_field_csv(tmp_path / "u.csv", value=0.0)
        out = tmp_path / "zero.png"
        plot_field(PlotSpec(inputs=[csv], kind="field", output=out))
        assert out.read_bytes()[:8] == PNG_MAGIC

    def test_coefficient_cells_image(self, tmp_path):
        cells = tmp_path / "coefficient_cells.txt"
        cells.write_text("2 4 4\n0 0 0 0\n0 1 1 0\n0 1 1 0\n0 0 0 0\n")
        out = tmp_path / "coef.png"
        plot_field(PlotSpec(inputs=[cells], kind="field", output=out))
        assert out.read_bytes()[:8] == PNG_MAGIC

    def test_non_grid_rejected(self, tmp_path):
        csv = tmp_path / "u.csv"
        csv.write_text("x,y,re,im\n0.0,0.0,1.0,0.0\n0.5,0.25,1.0,0.0\n1.0,1.0,1.0,0.0\n")
        with pytest.raises(PlotInputError, match="tensor grid"):
            plot_field(PlotSpec(inputs=[csv], kind="field", output=tmp_path / "x.png"))


SOLVER_CONFIG = """\
geometry = mie_square
epsilon_exp = 3
k = 9.0
x0 = 0.125, 0.5
fine_level = 5
coarse_levels = {levels}
m = {m}
m_max = 8
interpolant = weighted
output_dir = {out}
"""


@pytest.fixture(scope="module")
def solver_outputs(tmp_path_factory):
    """CSVs produced through the solver CLI at the resonant-scatterer setup."""
    root = tmp_path_factory.mktemp("solver_runs")
    runs = {}
    for cmd, levels, m in (("converge", "2, 3", "1, 2"), ("solve", "3", "2"), ("decay", "2", "2")):
        outdir = root / cmd
        cfg = root / f"{cmd}.txt"
        cfg.write_text(SOLVER_CONFIG.format(levels=levels, m=m, out=outdir))
        proc = subprocess.run(
            [sys.executable, "-m", "hclod.cli", cmd, str(cfg)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        runs[cmd] = outdir
    return runs


class TestAgainstSolverInterface:
    def test_convergence_from_solver_csvs(self, solver_outputs, tmp_path):
        outdir = solver_outputs["converge"]
        inputs = [outdir / f"{n}.csv" for n in ("lod_full", "p1fem", "p1_best")]
        out = tmp_path / "history.png"
        slopes = plot_convergence(
            PlotSpec(inputs=inputs, kind="convergence", output=out)
        )
        assert out.read_bytes()[:8] == PNG_MAGIC
        assert "lod_full m=1" in slopes and "lod_full m=2" in slopes

    def test_field_from_solver_csvs(self, solver_outputs, tmp_path):
        outdir = solver_outputs["solve"]
        for name in ("u_lod.csv", "u_ref.csv", "coefficient_cells.txt"):
            out = tmp_path / f"{name}.png"
            plot_field(PlotSpec(inputs=[outdir / name], kind="field", output=out))
            assert out.read_bytes()[:8] == PNG_MAGIC

    def test_decay_from_solver_csv(self, solver_outputs, tmp_path):
        outdir = solver_outputs["decay"]
        out = tmp_path / "decay.png"
        plot_decay(PlotSpec(inputs=[outdir / "decay.csv"], kind="decay", output=out))
        assert out.read_bytes()[:8] == PNG_MAGIC
