"""Desk-scale numerical laboratory for polynomial-partitioning restriction theory."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
