"""Numerical laboratory for random Schroedinger operators decomposed over quasi-momentum fibers."""

__version__ = "0.1.0"

from .errors import NumericalFailure, PreconditionError  # noqa: E402

__all__ = ["__version__", "NumericalFailure", "PreconditionError"]
