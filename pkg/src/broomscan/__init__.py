"""Broomrape detection from multispectral plot imagery across growth stages."""

__version__ = "0.1.0"

from .errors import BroomscanError, DataError, EmptyCanopyError, InvariantError
from .kernels import BACKEND

__all__ = [
    "__version__",
    "BACKEND",
    "BroomscanError",
    "DataError",
    "EmptyCanopyError",
    "InvariantError",
]
