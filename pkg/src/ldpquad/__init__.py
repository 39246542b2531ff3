"""Locally private estimation of the quadratic functional of a density on [0, 1]."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
