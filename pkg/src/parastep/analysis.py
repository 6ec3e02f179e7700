"""Convergence-factor analysis for two-step parareal iterations.

Implements the per-mode contraction factors of the error recursion
(gamma_c and its exact-propagator limit gamma_e), the sharper root-power
sums (kappa_c, kappa_e), their suprema over a spectral sample grid, the
coarsening-order study, and A-stability via the root locus.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .propagators import TwoStepScheme
from .rational import PoleError, RationalFunction, quadratic_roots

__all__ = [
    "UnstableScheme",
    "AllPointsFailed",
    "SpectralGrid",
    "FactorCurve",
    "default_grid",
    "rho_pair",
    "gamma_c",
    "gamma_e",
    "kappa_c",
    "kappa_e",
    "single_step_gamma",
    "sup_over_grid",
    "j_order_study",
    "boundary_locus",
    "a_stability_check",
    "contour_map",
]

_STAB_TOL = 1e-12  # |rho| >= 1 - _STAB_TOL counts as unstable


class UnstableScheme(ArithmeticError):
    """A characteristic root modulus reached 1 at the requested point."""


class AllPointsFailed(RuntimeError):
    """No grid sample could be evaluated."""


@dataclass(frozen=True)
class SpectralGrid:
    """Strictly increasing positive sample points approximating sup over s > 0."""

    samples: np.ndarray
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or len(s) == 0:
            raise ValueError("samples must be a nonempty 1-d array")
        if s[0] <= 0.0 or np.any(np.diff(s) <= 0.0):
            raise ValueError("samples must be strictly increasing and positive")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)


def default_grid() -> SpectralGrid:
    """2000 uniform samples on (0, 20] plus 200 log samples up to 1e4.

    s = 0 is excluded: consistency pins |rho1(0)| = 1 and the factor is a
    0/0 limit there.  The uniform part resolves the low-s structure where
    the suprema live; the log tail guards the large-s plateau.
    """
    uniform = np.linspace(0.01, 20.0, 2000)
    tail = np.logspace(math.log10(20.0), 4.0, 200)[1:]
    return SpectralGrid(
        np.concatenate([uniform, tail]),
        {"s_min": 0.01, "s_max": 1e4, "count": 2199, "spacing": "composite"},
    )


@dataclass(frozen=True)
class FactorCurve:
    grid: SpectralGrid
    values: np.ndarray
    sup: float
    argmax: float
    failed: tuple[float, ...] = ()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "value"])
            for s, v in zip(self.grid.samples, self.values):
                w.writerow([repr(float(s)), repr(float(v))])


# --- characteristic roots ----------------------------------------------


def _rf_vals(rf: RationalFunction, s):
    return rf.num(s) / rf.den(s)


def rho_pair(ts: TwoStepScheme, s: float) -> tuple[complex, complex]:
    """Roots of z^2 - R2(s) z - R1(s) = 0, larger modulus first."""
    return quadratic_roots(ts.R2(s), ts.R1(s))


def _rho_mods_vec(R1, R2):
    """Moduli (|rho1|, |rho2|) with |rho1| >= |rho2|, vectorized."""
    b = np.asarray(R2, dtype=complex)
    c = np.asarray(R1, dtype=complex)
    disc = np.sqrt(b * b + 4.0 * c)
    plus = (np.conj(b) * disc).real >= 0.0
    big = np.where(plus, b + disc, b - disc) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big != 0.0, -c / np.where(big != 0.0, big, 1.0), 0.0)
    a_big = np.abs(big)
    a_small = np.abs(small)
    return np.maximum(a_big, a_small), np.minimum(a_big, a_small)


def _check_stable(hi: float, lo: float, s) -> None:
    if hi >= 1.0 - _STAB_TOL or lo >= 1.0 - _STAB_TOL:
        raise UnstableScheme(f"|rho| = {hi} at s = {s!r}")


# --- contraction factors -----------------------------------------------


def gamma_c(r: RationalFunction, ts: TwoStepScheme, J: int, s: float) -> float:
    """Finite-J contraction factor of the two-step error recursion.

    |r(2s/J)^J - R2(s) r(2s/J)^(J/2) - R1(s)| / ((1-|rho1|)(1-|rho2|))
    """
    _require_even(J)
    rho1, rho2 = rho_pair(ts, s)
    hi, lo = abs(rho1), abs(rho2)
    _check_stable(hi, lo, s)
    rj = r(2.0 * s / J)
    num = abs(rj**J - ts.R2(s) * rj ** (J // 2) - ts.R1(s))
    return num / ((1.0 - hi) * (1.0 - lo))


def gamma_e(ts: TwoStepScheme, s: float) -> float:
    """Exact-propagator limit of gamma_c (r-powers replaced by e^-s)."""
    rho1, rho2 = rho_pair(ts, s)
    hi, lo = abs(rho1), abs(rho2)
    _check_stable(hi, lo, s)
    num = abs(math.exp(-2.0 * s) - ts.R2(s) * math.exp(-s) - ts.R1(s))
    return num / ((1.0 - hi) * (1.0 - lo))


def _root_power_sum(rho1: complex, rho2: complex, N_c: int) -> float:
    """sum_{m=1}^{2Nc+1} |rho2^m - rho1^m| / |rho2 - rho1| with confluent limit."""
    m = np.arange(1, 2 * N_c + 2)
    if abs(rho1 - rho2) < 1e-10:
        # (rho2^m - rho1^m)/(rho2 - rho1) -> m rho^(m-1) as rho2 -> rho1
        return float(np.sum(m * np.abs(rho1) ** (m - 1)))
    p1 = rho1 ** m.astype(float)
    p2 = rho2 ** m.astype(float)
    return float(np.sum(np.abs(p2 - p1)) / abs(rho2 - rho1))


def kappa_c(
    r: RationalFunction, ts: TwoStepScheme, J: int, s: float, N_c: int
) -> float:
    """Sharper N_c-dependent factor: gamma_c numerator times the root-power sum."""
    _require_even(J)
    if N_c < 1:
        raise ValueError("N_c must be >= 1")
    rho1, rho2 = rho_pair(ts, s)
    _check_stable(abs(rho1), abs(rho2), s)
    rj = r(2.0 * s / J)
    num = abs(rj**J - ts.R2(s) * rj ** (J // 2) - ts.R1(s))
    return num * _root_power_sum(rho1, rho2, N_c)


def kappa_e(ts: TwoStepScheme, s: float, N_c: int) -> float:
    """Exact-propagator limit of kappa_c."""
    if N_c < 1:
        raise ValueError("N_c must be >= 1")
    rho1, rho2 = rho_pair(ts, s)
    _check_stable(abs(rho1), abs(rho2), s)
    num = abs(math.exp(-2.0 * s) - ts.R2(s) * math.exp(-s) - ts.R1(s))
    return num * _root_power_sum(rho1, rho2, N_c)


def single_step_gamma(R: RationalFunction, s: float) -> float:
    """Classical single-step parareal factor |e^-s - R(s)| / (1 - |R(s)|)."""
    v = R(s)
    if abs(v) >= 1.0 - _STAB_TOL:
        raise UnstableScheme(f"|R(s)| = {abs(v)} at s = {s!r}")
    return abs(math.exp(-s) - v) / (1.0 - abs(v))


def sup_over_grid(fn, grid: SpectralGrid) -> FactorCurve:
    """Evaluate fn on every grid sample and report the discrete supremum.

    Isolated PoleError samples are skipped and recorded; values are
    materialized before the max so the result does not depend on any
    evaluation order.
    """
    values = np.full(len(grid), np.nan)
    failed = []
    for i, s in enumerate(grid.samples):
        try:
            values[i] = fn(float(s))
        except PoleError:
            failed.append(float(s))
    ok = np.isfinite(values)
    if not ok.any():
        raise AllPointsFailed("no grid sample evaluated")
    idx = int(np.nanargmax(np.where(ok, values, -np.inf)))
    return FactorCurve(
        grid=grid,
        values=values,
        sup=float(values[idx]),
        argmax=float(grid.samples[idx]),
        failed=tuple(failed),
    )


# --- vectorized curves (same formulas as the scalar ops) ----------------


def gamma_e_values(ts: TwoStepScheme, s: np.ndarray) -> np.ndarray:
    R1 = _rf_vals(ts.R1, s)
    R2 = _rf_vals(ts.R2, s)
    hi, lo = _rho_mods_vec(R1, R2)
    num = np.abs(np.exp(-2.0 * s) - R2 * np.exp(-s) - R1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / ((1.0 - hi) * (1.0 - lo))
    out[(hi >= 1.0 - _STAB_TOL) | (lo >= 1.0 - _STAB_TOL)] = np.inf
    return out


def gamma_c_values(
    r: RationalFunction, ts: TwoStepScheme, J: int, s: np.ndarray
) -> np.ndarray:
    _require_even(J)
    R1 = _rf_vals(ts.R1, s)
    R2 = _rf_vals(ts.R2, s)
    hi, lo = _rho_mods_vec(R1, R2)
    rj = _rf_vals(r, 2.0 * s / J)
    num = np.abs(rj**J - R2 * rj ** (J // 2) - R1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / ((1.0 - hi) * (1.0 - lo))
    out[(hi >= 1.0 - _STAB_TOL) | (lo >= 1.0 - _STAB_TOL)] = np.inf
    return out


# --- J-order study ------------------------------------------------------

_MP_DPS = 40


def _mp_rf(rf: RationalFunction):
    num = [mp.mpf(c) for c in rf.num.coeffs]
    den = [mp.mpf(c) for c in rf.den.coeffs]

    def ev(s):
        n = num[-1]
        for c in reversed(num[:-1]):
            n = n * s + c
        d = den[-1]
        for c in reversed(den[:-1]):
            d = d * s + c
        return n / d

    return ev


def _mp_factor(ts: TwoStepScheme, s, r_ev=None, J=None):
    """gamma_c (or gamma_e when r_ev is None) at one sample in mp arithmetic."""
    R1 = _mp_rf(ts.R1)(s)
    R2 = _mp_rf(ts.R2)(s)
    disc = mp.sqrt(mp.mpc(R2 * R2 + 4 * R1))
    z1 = (R2 + disc) / 2
    z2 = (R2 - disc) / 2
    hi, lo = (abs(z1), abs(z2)) if abs(z1) >= abs(z2) else (abs(z2), abs(z1))
    if r_ev is None:
        num = abs(mp.e ** (-2 * s) - R2 * mp.e ** (-s) - R1)
    else:
        rj = r_ev(2 * s / J)
        num = abs(rj**J - R2 * rj ** (J // 2) - R1)
    return num / ((1 - hi) * (1 - lo))


def _refined_sup(ts, grid, values, r=None, J=None) -> mp.mpf:
    # re-evaluate near-maximal samples in high precision; the double pass
    # is only trusted to locate candidates, not to resolve sups to 1e-15
    vmax = np.max(values[np.isfinite(values)])
    cand = np.nonzero(values >= vmax - 1e-6)[0]
    r_ev = _mp_rf(r) if r is not None else None
    with mp.workdps(_MP_DPS):
        return max(
            _mp_factor(ts, mp.mpf(float(grid.samples[i])), r_ev, J) for i in cand
        )


def j_order_study(
    r: RationalFunction,
    ts: TwoStepScheme,
    J_list,
    grid: SpectralGrid | None = None,
):
    """Gaps |gamma*(J) - gamma_e*| for each J plus the fitted log-log slope.

    The two suprema agree to O(J^-q), far below double rounding for large
    J, so candidate maxima are re-evaluated with mpmath before differencing.
    Returns (list of (J, gap), slope).
    """
    J_list = list(J_list)
    if len(J_list) < 3:
        raise ValueError("need at least 3 values of J")
    grid = grid or default_grid()
    s = grid.samples
    ge_sup = _refined_sup(ts, grid, gamma_e_values(ts, s))
    gaps = []
    for J in J_list:
        gc_sup = _refined_sup(ts, grid, gamma_c_values(r, ts, J, s), r=r, J=J)
        gaps.append((int(J), float(abs(gc_sup - ge_sup))))
    slope = float(
        np.polyfit(np.log([j for j, _ in gaps]), np.log([g for _, g in gaps]), 1)[0]
    )
    return gaps, slope


# --- stability region ----------------------------------------------------


@dataclass(frozen=True)
class BoundaryLocus:
    thetas: np.ndarray
    mu: np.ndarray  # complex locus values, NaN at skipped poles
    skipped: tuple[float, ...]


def boundary_locus(ts: TwoStepScheme, theta_count: int) -> BoundaryLocus:
    """Root locus mu(theta) = (-z^2 - a1 z - a0)/(b2 z^2 + b1 z + b0), z = e^(i theta)."""
    if theta_count < 8:
        raise ValueError("theta_count must be >= 8")
    a0, a1, _ = ts.alpha
    b0, b1, b2 = ts.beta
    thetas = 2.0 * np.pi * np.arange(theta_count) / theta_count
    z = np.exp(1j * thetas)
    var_rho = -(z * z + a1 * z + a0)
    var_sig = b2 * z * z + b1 * z + b0
    bad = np.abs(var_sig) <= 1e-13 * np.maximum(1.0, np.abs(var_rho))
    mu = np.where(bad, np.nan + 1j * np.nan, var_rho / np.where(bad, 1.0, var_sig))
    return BoundaryLocus(thetas, mu, tuple(float(t) for t in thetas[bad]))


@dataclass(frozen=True)
class AStabilityReport:
    a_stable: bool
    worst_f: float
    worst_theta: float
    real_axis_stable: bool


def a_stability_check(ts: TwoStepScheme, theta_count: int) -> AStabilityReport:
    """A-stability through the root locus sign test.

    f(theta) = Re(rho_poly(z) conj(sigma_poly(z))) expanded in cos(theta);
    f <= 0 everywhere keeps the locus out of the open right half-plane.
    That alone does not decide which side is stable, so the decaying real
    axis is probed as well (the proposition's conformality argument).
    """
    if theta_count < 64:
        raise ValueError("theta_count must be >= 64")
    a0, a1, _ = ts.alpha
    b0, b1, b2 = ts.beta
    ct = np.cos(2.0 * np.pi * np.arange(theta_count) / theta_count)
    f = (
        (-2.0 * a0 * b2 - 2.0 * b0) * ct * ct
        - (a0 * b1 + a1 * b0 + a1 * b2 + b1) * ct
        + (a0 * b2 + b0 - a0 * b0 - a1 * b1 - b2)
    )
    i = int(np.argmax(f))
    worst_f = float(f[i])
    worst_theta = float(2.0 * np.pi * i / theta_count)
    probes = np.logspace(-3, 6, 37)
    hi, lo = _rho_mods_vec(_rf_vals(ts.R1, probes), _rf_vals(ts.R2, probes))
    on_axis = bool(np.all(hi < 1.0) and np.all(lo < 1.0))
    return AStabilityReport(
        a_stable=bool(worst_f <= 1e-10 and on_axis),
        worst_f=worst_f,
        worst_theta=worst_theta,
        real_axis_stable=on_axis,
    )


# --- contour maps --------------------------------------------------------


def contour_map(
    kind: str,
    ts: TwoStepScheme,
    re_range: tuple[float, float],
    im_range: tuple[float, float],
    resolution: tuple[int, int],
    N_c: int | None = None,
):
    """Factor values over complex s; +inf marks poles and |rho| >= 1.

    Returns (re_axis, im_axis, matrix) with matrix[i, j] the value at
    s = re_axis[j] + 1i * im_axis[i].
    """
    if kind not in ("gamma_e", "kappa_e"):
        raise ValueError("kind must be gamma_e or kappa_e")
    if kind == "kappa_e" and not N_c:
        raise ValueError("kappa_e map needs N_c")
    nx, ny = resolution
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be >= 2 per axis")
    xs = np.linspace(re_range[0], re_range[1], nx)
    ys = np.linspace(im_range[0], im_range[1], ny)
    out = np.empty((ny, nx))
    a2, b2 = ts.alpha[2], ts.beta[2]
    for i, y in enumerate(ys):
        s = xs + 1j * y
        den = a2 + b2 * s
        pole = np.abs(den) <= 1e-13
        safe = np.where(pole, 1.0, den)
        R1 = ts.R1.num(s) / safe
        R2 = ts.R2.num(s) / safe
        hi, lo = _rho_mods_vec(R1, R2)
        num = np.abs(np.exp(-2.0 * s) - R2 * np.exp(-s) - R1)
        unstable = (hi >= 1.0 - _STAB_TOL) | (lo >= 1.0 - _STAB_TOL)
        if kind == "gamma_e":
            with np.errstate(divide="ignore", invalid="ignore"):
                row = num / ((1.0 - hi) * (1.0 - lo))
        else:
            row = np.empty(nx)
            disc = np.sqrt((R2 * R2 + 4.0 * R1).astype(complex))
            plus = (np.conj(R2) * disc).real >= 0.0
            big = np.where(plus, R2 + disc, R2 - disc) / 2.0
            with np.errstate(divide="ignore", invalid="ignore"):
                small = np.where(big != 0.0, -R1 / np.where(big != 0.0, big, 1.0), 0.0)
            for j in range(nx):
                if pole[j] or unstable[j]:
                    row[j] = np.inf
                else:
                    row[j] = num[j] * _root_power_sum(
                        complex(big[j]), complex(small[j]), N_c
                    )
        row = np.where(pole | unstable | ~np.isfinite(row), np.inf, row)
        out[i] = row
    return xs, ys, out


def write_contour_csv(path, xs, ys, matrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "value"])
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                v = matrix[i, j]
                w.writerow([repr(float(x)), repr(float(y)), "inf" if np.isinf(v) else repr(float(v))])


def _require_even(J: int) -> None:
    if J < 2 or J % 2 != 0:
        raise ValueError(f"coarsening factor J must be a positive even integer, got {J}")
