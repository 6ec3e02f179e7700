"""Model problems for the experiment drivers.

Linear diffusion on (0,1) with three data cases, and the semilinear
reaction model with a manufactured source.  The linear source below is
kept exactly as printed in the experiment definition (including the
squared sine factor); a separate manufactured variant with exact solution
sin(pi x) cos(pi t) is provided for solver verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem import FemSystem, Mesh1D, Nonlinearity, assemble

__all__ = [
    "LinearProblem",
    "linear_source_printed",
    "linear_source_manufactured",
    "linear_problem",
    "semilinear_problem",
    "manufactured_exact",
]

_PI = math.pi


def linear_source_printed(x, t):
    return np.sin(_PI * x) * (-_PI * math.sin(_PI * t) + _PI**2 * np.sin(_PI * x) * math.cos(_PI * t))


def linear_source_manufactured(x, t):
    return np.sin(_PI * x) * (-_PI * math.sin(_PI * t) + _PI**2 * math.cos(_PI * t))


def manufactured_exact(x, t):
    return np.sin(_PI * x) * math.cos(_PI * t)


def _u0_indicator(x):
    return (x < 0.5).astype(float)


def _u0_sine(x):
    return np.sin(_PI * x)


@dataclass(frozen=True)
class LinearProblem:
    case: str
    T: float
    system: FemSystem
    u0: np.ndarray


def linear_problem(case: str, n_cells: int, source=linear_source_printed) -> LinearProblem:
    """Cases: (i) T=10 indicator data, (ii) T=10 sine data, (iii) T=1 sine data."""
    mesh = Mesh1D(n_cells)
    sys = assemble(mesh, source=source)
    x = mesh.interior_nodes
    if case == "i":
        return LinearProblem("i", 10.0, sys, _u0_indicator(x))
    if case == "ii":
        return LinearProblem("ii", 10.0, sys, _u0_sine(x))
    if case == "iii":
        return LinearProblem("iii", 1.0, sys, _u0_sine(x))
    raise ValueError(f"unknown linear case {case!r}")


def semilinear_problem(c_L: float, n_cells: int) -> LinearProblem:
    """u' - u_xx = c_L u (1 - u^2) + g on (0,1) x (0,10].

    g is chosen so the exact solution is sin(pi x) cos(pi t).
    """

    def g(x, t):
        u = np.sin(_PI * x) * math.cos(_PI * t)
        du_dt = -_PI * np.sin(_PI * x) * math.sin(_PI * t)
        u_xx = -(_PI**2) * u
        return du_dt - u_xx - c_L * u * (1.0 - u * u)

    nonlin = Nonlinearity(
        value=lambda u: c_L * u * (1.0 - u * u),
        derivative=lambda u: c_L * (1.0 - 3.0 * u * u),
    )
    mesh = Mesh1D(n_cells)
    sys = assemble(mesh, source=g, nonlinearity=nonlin)
    return LinearProblem("semilinear", 10.0, sys, _u0_sine(mesh.interior_nodes))
