"""Offline figure scripts for hclod CSV outputs."""

from .figures import (
    PlotInputError,
    PlotSpec,
    fit_loglog_slope,
    plot_convergence,
    plot_decay,
    plot_field,
    read_cells_grid,
    read_csv_columns,
)

__version__ = "0.1.0"

__all__ = [
    "PlotInputError",
    "PlotSpec",
    "fit_loglog_slope",
    "plot_convergence",
    "plot_decay",
    "plot_field",
    "read_cells_grid",
    "read_csv_columns",
]
