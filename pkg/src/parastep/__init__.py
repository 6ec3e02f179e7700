"""Parareal solver lab: two-step coarse propagators, convergence-factor
analysis, barrier-method propagator optimization, and a 1D FEM parabolic
backend."""

from . import analysis, fem, optimizer, parareal, problems, propagators, rational

__all__ = [
    "analysis",
    "fem",
    "optimizer",
    "parareal",
    "problems",
    "propagators",
    "rational",
]

__version__ = "0.1.0"
