"""Simulation and detection engine for smartphone-based earthquake early warning."""

from eewsim.errors import (
    ConfigurationError,
    ContractError,
    EstimationError,
    InputError,
    InsufficientDataError,
    ParseError,
)
from eewsim.geo import GeoPoint, WaveSpeeds

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ContractError",
    "EstimationError",
    "GeoPoint",
    "InputError",
    "InsufficientDataError",
    "ParseError",
    "WaveSpeeds",
]
