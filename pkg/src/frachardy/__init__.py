"""Radial numerics for the fractional p-Laplacian with a Hardy potential.

Modules: :mod:`quad` (singular quadrature), :mod:`kernel` (angular kernel and
sharp constants), :mod:`radial` (graded grids and seminorms), :mod:`evolution`
(time stepping), :mod:`inequalities` (elementary inequality checks),
:mod:`experiments` (reproducible scenarios) and :mod:`cli` (batch interface).
"""

from .kernel import Params, hardy_constant, theta, theta_roots, selfsim_build
from .radial import RadialFunction, RadialGrid, build_grid
from .evolution import EvolutionConfig, PotentialSpec, evolve

__version__ = "0.1.0"

__all__ = ["Params", "hardy_constant", "theta", "theta_roots", "selfsim_build",
           "RadialFunction", "RadialGrid", "build_grid", "EvolutionConfig", "PotentialSpec",
           "evolve"]
