"""Catalog of single-step and two-step time integrators.

Stability functions follow the decay convention: a step of size dt applied
to u' + lambda*u = 0 multiplies the solution by r(lambda*dt), so A-stable
schemes have |r(s)| <= 1 for Re(s) >= 0.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .rational import Polynomial, RationalFunction

__all__ = [
    "UnknownScheme",
    "NotConsistent",
    "ButcherTableau",
    "SingleStepScheme",
    "TwoStepScheme",
    "ThetaParams",
    "TABLEAU",
    "STIFF_CONSISTENT",
    "catalog",
    "catalog_names",
    "stability_from_tableau",
    "two_step_from_theta",
    "consistency_order",
    "exact_phi",
    "load_scheme",
    "save_scheme",
]


class UnknownScheme(KeyError):
    """Requested scheme name is not in the catalog."""


class NotConsistent(ValueError):
    """Two-step coefficients violate sum(alpha) = 0."""


TABLEAU = "TABLEAU"
STIFF_CONSISTENT = "STIFF_CONSISTENT"


@dataclass(frozen=True)
class ButcherTableau:
    """Implicit Runge-Kutta tableau (A, b, c) with classical order q."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if A.shape != (len(b), len(b)) or len(c) != len(b):
            raise ValueError("tableau dimensions inconsistent")
        if abs(b.sum() - 1.0) > 1e-12:
            raise ValueError("weights do not sum to 1")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def stages(self) -> int:
        return len(self.b)


@dataclass(frozen=True)
class SingleStepScheme:
    name: str
    stability: RationalFunction
    tableau: ButcherTableau | None
    source_rule: str
    order: int

    def __post_init__(self):
        if abs(self.stability(0.0) - 1.0) > 1e-12:
            raise ValueError(f"{self.name}: stability function not consistent at 0")


@dataclass(frozen=True)
class TwoStepScheme:
    """Linear two-step scheme, normalized to alpha2 = 1.

    R1(s) = (-alpha0 - beta0*s) / (alpha2 + beta2*s)
    R2(s) = (-alpha1 - beta1*s) / (alpha2 + beta2*s)
    """

    name: str
    alpha: tuple[float, float, float]
    beta: tuple[float, float, float]
    R1: RationalFunction
    R2: RationalFunction

    @classmethod
    def from_coefficients(cls, name, alpha, beta) -> "TwoStepScheme":
        a = [float(x) for x in alpha]
        b = [float(x) for x in beta]
        if a[2] == 0.0:
            raise ValueError("alpha2 must be nonzero")
        a = [x / alpha[2] for x in a]
        b = [x / alpha[2] for x in b]
        if abs(a[0] + a[1] + a[2]) > 1e-10:
            raise NotConsistent(f"{name}: sum(alpha) = {a[0] + a[1] + a[2]!r}")
        den = Polynomial([a[2], b[2]])
        R1 = RationalFunction(Polynomial([-a[0], -b[0]]), den)
        R2 = RationalFunction(Polynomial([-a[1], -b[1]]), den)
        return cls(name, tuple(a), tuple(b), R1, R2)


@dataclass(frozen=True)
class ThetaParams:
    """Parameters (a1, a2, b1, c2) of the parametric two-step family."""

    a1: float
    a2: float
    b1: float
    c2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.b1, self.c2], dtype=float)

    @classmethod
    def from_array(cls, v) -> "ThetaParams":
        a1, a2, b1, c2 = (float(x) for x in v)
        return cls(a1, a2, b1, c2)


def _poly_det(entries: list[list[np.ndarray]]) -> Polynomial:
    # Leibniz expansion over polynomial entries; tableaus are tiny (<= 3x3)
    n = len(entries)
    total = np.zeros(1)
    for perm in itertools.permutations(range(n)):
        inversions = sum(
            1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j]
        )
        prod = np.ones(1)
        for i in range(n):
            prod = np.convolve(prod, entries[i][perm[i]])
        if len(prod) > len(total):
            total = np.pad(total, (0, len(prod) - len(total)))
        total[: len(prod)] += (-1.0) ** inversions * prod
    return Polynomial(total)


def stability_from_tableau(t: ButcherTableau) -> RationalFunction:
    """r(s) = det(I + s*A - s*1b^T) / det(I + s*A), expanded exactly in s."""
    n = t.stages
    eye = np.eye(n)
    num = [
        [np.array([eye[i, j], t.A[i, j] - t.b[j]]) for j in range(n)] for i in range(n)
    ]
    den = [[np.array([eye[i, j], t.A[i, j]]) for j in range(n)] for i in range(n)]
    return RationalFunction(_poly_det(num), _poly_det(den))


def two_step_from_theta(theta: ThetaParams, name: str = "theta") -> TwoStepScheme:
    """Build the parametric scheme R1 = (a1 + a2 s)/(1 + e^b1 s), R2 = ((1-a1) + c2 s)/(1 + e^b1 s)."""
    alpha = (-theta.a1, theta.a1 - 1.0, 1.0)
    beta = (-theta.a2, -theta.c2, math.exp(theta.b1))
    return TwoStepScheme.from_coefficients(name, alpha, beta)


def theta_from_scheme(ts: TwoStepScheme) -> ThetaParams:
    """Read the parametric coordinates back off a normalized scheme."""
    if ts.beta[2] <= 0.0:
        raise ValueError("beta2 must be positive to invert b1 = log(beta2)")
    return ThetaParams(-ts.alpha[0], -ts.beta[0], math.log(ts.beta[2]), -ts.beta[1])


def consistency_order(scheme: TwoStepScheme, p_max: int) -> int:
    """Largest q <= p_max satisfying the multistep order conditions to 1e-8.

    Conditions: sum(alpha_i) = 0 and sum(alpha_i i^p) = p sum(beta_i i^(p-1))
    for p = 1..q.  Returns 0 when only the zeroth condition holds.
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    a, b = scheme.alpha, scheme.beta
    if abs(sum(a)) > 1e-10:
        raise NotConsistent(f"sum(alpha) = {sum(a)!r}")
    q = 0
    for p in range(1, p_max + 1):
        lhs = sum(a[i] * i**p for i in range(3))
        rhs = p * sum(b[i] * i ** (p - 1) for i in range(3))
        if abs(lhs - rhs) > 1e-8:
            break
        q = p
    return q


def exact_phi(lam: float, tau: float, v: float, f=None) -> float:
    """Exact scalar propagator for y' + lam*y = f(t) over one step of size tau.

    Returns e^(-lam*tau) v + integral_0^tau e^(-lam*(tau-s)) f(s) ds with the
    integral done by adaptive quadrature to 1e-12 relative.
    """
    if lam < 0 or tau <= 0:
        raise ValueError("need lam >= 0 and tau > 0")
    out = math.exp(-lam * tau) * v
    if f is not None:
        val, _ = quad(
            lambda s: math.exp(-lam * (tau - s)) * f(s),
            0.0,
            tau,
            epsabs=1e-14,
            epsrel=1e-12,
            limit=200,
        )
        out += val
    return out


# --- catalog -----------------------------------------------------------

_SQRT6 = math.sqrt(6.0)
_GAMMA_SDIRK = (2.0 - math.sqrt(2.0)) / 2.0

_TABLEAUS = {
    "backward_euler": ButcherTableau(np.array([[1.0]]), np.array([1.0]), np.array([1.0]), 1),
    "sdirk2": ButcherTableau(
        np.array([[_GAMMA_SDIRK, 0.0], [1.0 - _GAMMA_SDIRK, _GAMMA_SDIRK]]),
        np.array([1.0 - _GAMMA_SDIRK, _GAMMA_SDIRK]),
        np.array([_GAMMA_SDIRK, 1.0]),
        2,
    ),
    "radau_iia_2": ButcherTableau(
        np.array([[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]]),
        np.array([3.0 / 4.0, 1.0 / 4.0]),
        np.array([1.0 / 3.0, 1.0]),
        3,
    ),
    "radau_iia_3": ButcherTableau(
        np.array(
            [
                [(88 - 7 * _SQRT6) / 360, (296 - 169 * _SQRT6) / 1800, (-2 + 3 * _SQRT6) / 225],
                [(296 + 169 * _SQRT6) / 1800, (88 + 7 * _SQRT6) / 360, (-2 - 3 * _SQRT6) / 225],
                [(16 - _SQRT6) / 36, (16 + _SQRT6) / 36, 1.0 / 9.0],
            ]
        ),
        np.array([(16 - _SQRT6) / 36, (16 + _SQRT6) / 36, 1.0 / 9.0]),
        np.array([(4 - _SQRT6) / 10, (4 + _SQRT6) / 10, 1.0]),
        5,
    ),
    "lobatto_iiic_3": ButcherTableau(
        np.array(
            [
                [1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 5.0 / 12.0, -1.0 / 12.0],
                [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            ]
        ),
        np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]),
        np.array([0.0, 0.5, 1.0]),
        4,
    ),
}

# printed optimized single-step coarse propagator; no stage form is
# published, so the source is applied through P(s) = (1 - R(s))/s
_OCP_STABILITY = RationalFunction(
    Polynomial([1.0, -0.21014, 0.00486]), Polynomial([1.0, 0.78986, 0.38283])
)

_O2CP_THETA = ThetaParams(0.02178, -0.00047, math.log(0.56380), -0.46300)


def _single_from_tableau(name: str, order: int | None = None) -> SingleStepScheme:
    t = _TABLEAUS[name]
    return SingleStepScheme(
        name=name,
        stability=stability_from_tableau(t),
        tableau=t,
        source_rule=TABLEAU,
        order=order if order is not None else t.order,
    )


def _build_catalog() -> dict:
    cat = {
        name: _single_from_tableau(name)
        for name in ("backward_euler", "sdirk2", "radau_iia_2", "radau_iia_3", "lobatto_iiic_3")
    }
    cat["ocp"] = SingleStepScheme(
        name="ocp",
        stability=_OCP_STABILITY,
        tableau=None,
        source_rule=STIFF_CONSISTENT,
        order=1,
    )
    cat["bdf2"] = TwoStepScheme.from_coefficients(
        "bdf2", (0.5, -2.0, 1.5), (0.0, 0.0, 1.0)
    )
    cat["o2cp"] = two_step_from_theta(_O2CP_THETA, name="o2cp")
    return cat


_CATALOG = _build_catalog()


def catalog_names() -> tuple[str, ...]:
    return tuple(sorted(_CATALOG))


def catalog(name: str):
    """Look up a scheme by its stable string identifier."""
    try:
        return _CATALOG[name]
    except KeyError:
        raise UnknownScheme(
            f"unknown scheme {name!r}; available: {', '.join(catalog_names())}"
        ) from None


# --- scheme files ------------------------------------------------------


def save_scheme(ts: TwoStepScheme, path) -> None:
    """Write a two-step scheme definition as JSON."""
    payload = {
        "type": "two_step",
        "name": ts.name,
        "alpha": list(ts.alpha),
        "beta": list(ts.beta),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_scheme(path) -> TwoStepScheme:
    """Read a two-step scheme definition written by save_scheme."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("type") != "two_step":
        raise ValueError(f"{path}: not a two-step scheme file")
    return TwoStepScheme.from_coefficients(
        payload.get("name", "file"), payload["alpha"], payload["beta"]
    )
