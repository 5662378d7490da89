"""Optimal transport on lattices with Fisher information regularization.

Solves the discrete Schrodinger bridge problem (Benamou-Brenier kinetic
energy plus beta^2 times the discrete Fisher information) with a damped
equality-constrained Newton method.
"""

from .energy import ProblemSpec, TimeGrid, objective
from .lattice import GridSpec, Lattice, build_lattice
from .newton import SolveResult, SolverConfig, newton_solve

__all__ = [
    "GridSpec",
    "Lattice",
    "ProblemSpec",
    "SolveResult",
    "SolverConfig",
    "TimeGrid",
    "build_lattice",
    "newton_solve",
    "objective",
]

__version__ = "0.1.0"
