"""Regularity checks, closest-point projection, Hausdorff bounds and shifted-boundary solves for implicit boundaries."""

from simready.errors import (
    ClassificationError,
    ConfigError,
    EmptyContourError,
    EmptyTubeError,
    SimreadyError,
    SingularPointError,
    SolverError,
    TrainingDivergedError,
    WeightFileError,
)
from simready.field import (
    Banded,
    CircleSdf,
    Constant,
    ImplicitField,
    Jet2,
    Neural,
    Offset,
    Quadratic,
    Scaled,
    Translated,
    eval_jet,
    make_banded,
    parse_field,
)

__version__ = "0.1.0"

__all__ = [
    "Banded",
    "CircleSdf",
    "ClassificationError",
    "ConfigError",
    "Constant",
    "EmptyContourError",
    "EmptyTubeError",
    "ImplicitField",
    "Jet2",
    "Neural",
    "Offset",
    "Quadratic",
    "Scaled",
    "SimreadyError",
    "SingularPointError",
    "SolverError",
    "TrainingDivergedError",
    "Translated",
    "WeightFileError",
    "eval_jet",
    "make_banded",
    "parse_field",
]
