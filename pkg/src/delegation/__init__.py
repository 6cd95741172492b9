"""Delegated contracting: mechanism checks, delegation games and four applications."""

from .report import DEFAULT_TOL, FeasibilityReport

__all__ = ["DEFAULT_TOL", "FeasibilityReport"]
__version__ = "0.1.0"
