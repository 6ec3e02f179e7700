"""Polynomial and rational-function kernel.

Every stability function in the catalog is carried as a ratio of two real
polynomials, and the characteristic roots of a two-step recursion are the
roots of a monic quadratic built from two such ratios.  This module keeps
those three primitives (polynomial evaluation, normalized rational
functions, ordered quadratic roots) in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PoleError",
    "Polynomial",
    "RationalFunction",
    "quadratic_roots",
]


class PoleError(ArithmeticError):
    """Rational function evaluated too close to a zero of its denominator."""


def _trim(coeffs) -> tuple[float, ...]:
    c = [float(x) for x in coeffs]
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial with coefficients in ascending degree.

    ``coeffs[i]`` multiplies ``s**i``.  Trailing zeros are stripped so the
    stored degree is exact (the zero polynomial keeps a single 0.0).
    """

    coeffs: tuple[float, ...]

    def __init__(self, coeffs):
        object.__setattr__(self, "coeffs", _trim(coeffs))

    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return self.coeffs == (0.0,)

    def __call__(self, s):
        """Horner evaluation; accepts real, complex, or ndarray argument."""
        acc = 0.0 * s + self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = acc * s + c
        return acc

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        out = [0.0] * n
        for i, c in enumerate(self.coeffs):
            out[i] += c
        for i, c in enumerate(other.coeffs):
            out[i] += c
        return Polynomial(out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + other.scale(-1.0)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    def scale(self, a: float) -> "Polynomial":
        return Polynomial([a * c for c in self.coeffs])

    def shift_down(self) -> "Polynomial":
        """Divide by s, requiring a zero constant term."""
        if self.coeffs[0] != 0.0:
            raise ValueError("constant term nonzero, not divisible by s")
        if len(self.coeffs) == 1:
            return Polynomial([0.0])
        return Polynomial(self.coeffs[1:])


@dataclass(frozen=True)
class RationalFunction:
    """Ratio num/den of two real polynomials, normalized so den(0) = 1."""

    num: Polynomial
    den: Polynomial = field(default_factory=lambda: Polynomial([1.0]))

    def __init__(self, num, den=(1.0,)):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero():
            raise ValueError("denominator is identically zero")
        d0 = den.coeffs[0]
        if d0 == 0.0:
            raise ValueError("denominator vanishes at s = 0; cancel first")
        if d0 != 1.0:
            num = num.scale(1.0 / d0)
            den = den.scale(1.0 / d0)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __call__(self, s):
        return eval_complex(self, s) if np.iscomplexobj(s) else eval_real(self, s)


def _checked_ratio(rf: RationalFunction, s):
    n = rf.num(s)
    d = rf.den(s)
    if abs(d) <= 1e-14 * max(1.0, abs(n)):
        raise PoleError(f"denominator ~ 0 at s = {s!r}")
    return n / d


def eval_real(rf: RationalFunction, s: float) -> float:
    """Evaluate num(s)/den(s) at a real point.

    Raises PoleError when |den(s)| <= 1e-14 * max(1, |num(s)|).
    """
    return float(_checked_ratio(rf, float(s)))


def eval_complex(rf: RationalFunction, z: complex) -> complex:
    """Evaluate num(z)/den(z) at a complex point, same pole guard as eval_real."""
    return complex(_checked_ratio(rf, complex(z)))


def quadratic_roots(b, c) -> tuple[complex, complex]:
    """Both roots of z**2 - b*z - c = 0, largest modulus first.

    Ties on modulus break toward larger real part, then larger imaginary
    part, so repeated calls order a conjugate pair identically.  A double
    root is returned twice.  The larger root is computed from the stable
    branch of the quadratic formula and the smaller one from the product
    -c, which avoids cancellation when the roots are far apart in size.
    """
    b = complex(b)
    c = complex(c)
    disc = np.sqrt(b * b + 4.0 * c)
    # pick the sign that avoids cancellation in b +/- disc
    if (b.conjugate() * disc).real >= 0.0:
        big = (b + disc) / 2.0
    else:
        big = (b - disc) / 2.0
    if big == 0.0:
        # the larger branch vanished, so both roots are at the origin
        return (0.0 + 0.0j, 0.0 + 0.0j)
    small = -c / big
    return _order_pair(big, small)


def _order_pair(z1: complex, z2: complex) -> tuple[complex, complex]:
    k1 = (abs(z1), z1.real, z1.imag)
    k2 = (abs(z2), z2.real, z2.imag)
    return (z1, z2) if k1 >= k2 else (z2, z1)
