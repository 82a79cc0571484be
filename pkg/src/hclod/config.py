"""Flat key = value experiment configuration files."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .coefficient import GeometrySpec
from .errors import ConfigurationError

WORKERS_ENV = "HCLOD_WORKERS"

_KNOWN_KEYS = {
    "geometry",
    "epsilon_exp",
    "k",
    "x0",
    "fine_level",
    "coarse_levels",
    "m",
    "interpolant",
    "output_dir",
    "workers",
    "point_defect_cell",
    "line_defect_halfwidth",
    "cells_file",
    "seed_element",
    "m_max",
}


@dataclass
class ExperimentConfig:
    geometry: str = "mie_square"
    epsilon_exp: int = 3
    k: float = 9.0
    x0: tuple[float, float] = (0.125, 0.5)
    fine_level: int = 7
    coarse_levels: list[int] = field(default_factory=lambda: [2, 3, 4, 5])
    m_values: list[int] = field(default_factory=lambda: [1, 2, 3])
    interpolant: str = "weighted"
    output_dir: str = "out"
    workers: int = 1
    point_defect_cell: tuple[int, int] | None = None
    line_defect_halfwidth: float = 2.0
    cells_file: str | None = None
    seed_element: int | str = "auto"
    m_max: int = 3

    def geometry_spec(self) -> GeometrySpec:
        return GeometrySpec(
            kind=self.geometry,
            epsilon_exp=self.epsilon_exp,
            defect_cell=self.point_defect_cell,
            channel_halfwidth=self.line_defect_halfwidth,
            cells_file=self.cells_file,
        )

    def effective_workers(self) -> int:
        env = os.environ.get(WORKERS_ENV)
        if env is not None:
            try:
                return max(1, int(env))
            except ValueError as exc:
                raise ConfigurationError(
                    f"{WORKERS_ENV} must be an integer, got {env!r}"
                ) from exc
        return max(1, self.workers)

    def validate(self) -> None:
        if not (0.0 < self.x0[0] < 1.0 and 0.0 < self.x0[1] < 1.0):
            raise ConfigurationError(f"x0 {self.x0} must lie inside the unit square")
        if self.k <= 0:
            raise ConfigurationError(f"wave number must be positive, got {self.k}")
        if not self.coarse_levels:
            raise ConfigurationError("coarse_levels must not be empty")
        if not self.m_values:
            raise ConfigurationError("m list must not be empty")
        if any(m < 0 for m in self.m_values):
            raise ConfigurationError(f"m values must be >= 0, got {self.m_values}")
        if any(lv < 1 for lv in self.coarse_levels):
            raise ConfigurationError(
                f"coarse levels must be >= 1, got {self.coarse_levels}"
            )
        if self.fine_level <= max(self.coarse_levels):
            raise ConfigurationError(
                f"fine_level {self.fine_level} must exceed all coarse levels "
                f"{self.coarse_levels}"
            )
        if self.interpolant not in ("weighted", "unweighted"):
            raise ConfigurationError(
                f"interpolant must be weighted|unweighted, got {self.interpolant!r}"
            )
        if self.m_max < 0:
            raise ConfigurationError(f"m_max must be >= 0, got {self.m_max}")
        if isinstance(self.seed_element, str) and self.seed_element != "auto":
            raise ConfigurationError(
                f"seed_element must be an integer or 'auto', got {self.seed_element!r}"
            )
        self.geometry_spec()  # validates geometry parameters


def _parse_int_list(value: str, key: str) -> list[int]:
    try:
        return [int(tok) for tok in value.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigurationError(f"{key} must be a list of integers: {value!r}") from exc


def _parse_pair(value: str, key: str, cast) -> tuple:
    toks = value.replace(",", " ").split()
    if len(toks) != 2:
        raise ConfigurationError(f"{key} needs two values, got {value!r}")
    try:
        return (cast(toks[0]), cast(toks[1]))
    except ValueError as exc:
        raise ConfigurationError(f"bad {key} value {value!r}") from exc


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key = value format; '#' starts a comment."""
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        try:
            if key == "geometry":
                cfg.geometry = value
            elif key == "epsilon_exp":
                cfg.epsilon_exp = int(value)
            elif key == "k":
                cfg.k = float(value)
            elif key == "x0":
                cfg.x0 = _parse_pair(value, key, float)
            elif key == "fine_level":
                cfg.fine_level = int(value)
            elif key == "coarse_levels":
                cfg.coarse_levels = _parse_int_list(value, key)
            elif key == "m":
                cfg.m_values = _parse_int_list(value, key)
            elif key == "interpolant":
                cfg.interpolant = value
            elif key == "output_dir":
                cfg.output_dir = value
            elif key == "workers":
                cfg.workers = int(value)
            elif key == "point_defect_cell":
                cfg.point_defect_cell = _parse_pair(value, key, int)
            elif key == "line_defect_halfwidth":
                cfg.line_defect_halfwidth = float(value)
            elif key == "cells_file":
                cfg.cells_file = value
            elif key == "seed_element":
                cfg.seed_element = value if value == "auto" else int(value)
            elif key == "m_max":
                cfg.m_max = int(value)
        except ValueError as exc:
            raise ConfigurationError(
                f"line {lineno}: bad value for {key}: {value!r}"
            ) from exc
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    return parse_config(path.read_text(encoding="utf-8"))
