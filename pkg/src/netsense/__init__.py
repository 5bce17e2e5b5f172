"""Networked radar sensing simulator and clutter-covariance estimation toolkit."""
from . import _backend
from .errors import (DegenerateGeometryError, DomainError, NumericError,
                     TrainingFailure, UnsensableTargetError)

__version__ = "0.1.0"
BACKEND = _backend.NAME

__all__ = ["BACKEND", "DomainError", "DegenerateGeometryError", "UnsensableTargetError",
           "NumericError", "TrainingFailure", "__version__"]
