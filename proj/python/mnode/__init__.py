"""Python access to the manifold-constrained neural ODE core."""

import json as _json
from os import PathLike
from typing import Any, Iterable, Union

from ._mnode import (
    ChartError,
    ConfigError,
    DimensionError,
    Error,
    FormatError,
    IndexError,
    NeighborGraph,
    NumericError,
    SolverError,
    TrainingAbort,
    build_graph,
    chart_to_ambient,
    data_dir,
    integrate_linear,
    least_squares_slope,
    load_idx,
    load_series,
)
from . import _mnode

Path = Union[str, PathLike]


def resolve_config(config: dict) -> dict:
    """Fill in every default; raises ConfigError on unknown keys."""
    return _json.loads(_mnode._resolve_config(_json.dumps(config)))


def train(config: dict, out_dir: Path) -> dict:
    """Run the train command and return per-epoch metrics and test accuracy."""
    return _json.loads(_mnode._train(_json.dumps(config), out_dir))


def evaluate(run_dir: Path, split: str = "test") -> dict:
    return _json.loads(_mnode._eval(run_dir, split))


def nfe_report(run_dirs: Iterable[Path], out_dir: Path) -> Any:
    return _json.loads(_mnode._nfe_report(list(run_dirs), out_dir))


__all__ = [
    "ChartError", "ConfigError", "DimensionError", "Error", "FormatError", "IndexError",
    "NeighborGraph", "NumericError", "SolverError", "TrainingAbort", "build_graph",
    "chart_to_ambient", "data_dir", "evaluate", "integrate_linear", "least_squares_slope",
    "load_idx", "load_series", "nfe_report", "resolve_config", "train",
]
