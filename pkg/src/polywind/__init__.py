"""Winding statistics of a noise-driven directed polymer on a cylinder."""

from .grid import GridSpec
from .noise import NoiseGrid, increment_factors, new_noise
from .solver import NumericalInstability, backend_name

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "NoiseGrid",
    "NumericalInstability",
    "backend_name",
    "increment_factors",
    "new_noise",
    "__version__",
]
