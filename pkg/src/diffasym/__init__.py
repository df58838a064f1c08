"""Asymptotic expansions of solutions to diffusion equations with general
self-similar kernels: kernels, semigroup, moments, Duhamel solver,
expansion profiles and decay-rate checks."""

from .grid import Field, Grid
from .kernel import KernelSpec
from .semigroup import SemigroupOperator

__all__ = ["Field", "Grid", "KernelSpec", "SemigroupOperator"]
__version__ = "0.1.0"
