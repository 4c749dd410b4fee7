"""Superradiant burst dynamics of atoms coupled to a chiral waveguide mode,
and photon-correlation analysis of time-tagged detections."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ConfigError,
    CorrelationGrid,
    EnsembleParams,
    RngSpec,
    SuperburstError,
    TimeGrid,
    threshold_atom_number,
    validate,
)

__all__ = [
    "ConfigError",
    "CorrelationGrid",
    "EnsembleParams",
    "RngSpec",
    "SuperburstError",
    "TimeGrid",
    "threshold_atom_number",
    "validate",
    "__version__",
]
