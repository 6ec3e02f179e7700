"""1D linear-element discretization of u' - u_xx = f with banded solvers.

Semi-discrete convention used throughout: M u' + K u = F(t) + N(u), with
homogeneous Dirichlet conditions eliminated (interior unknowns only), F
the load of the u-independent source and N the optional semilinear term.
Operators stay tridiagonal; implicit Runge-Kutta stage systems are
block-banded and solved directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .propagators import (
    STIFF_CONSISTENT,
    ButcherTableau,
    SingleStepScheme,
    TwoStepScheme,
)
from .rational import Polynomial

__all__ = [
    "DimensionMismatch",
    "SingularSystem",
    "NewtonDivergence",
    "Mesh1D",
    "Nonlinearity",
    "FemSystem",
    "assemble",
    "l2_norm",
    "solve_shifted",
    "irk_step",
    "two_step_apply",
    "o2cp_extrapolated_step",
    "single_step_apply",
]

_NEWTON_TOL = 1e-12
_NEWTON_MAXIT = 50
# rounding floor acceptance: eps times the stiffest-mode scale can exceed
# the absolute target, so a small residual that stops shrinking is converged
_NEWTON_FLOOR_CEIL = 1e-8
_NEWTON_STALL_RATIO = 0.25


def _newton_done(residuals: list[float]) -> bool:
    r = residuals[-1]
    if r <= _NEWTON_TOL:
        return True
    return (
        len(residuals) > 1
        and r <= _NEWTON_FLOOR_CEIL
        and r > _NEWTON_STALL_RATIO * residuals[-2]
    )

# 3-point Gauss rule on [0, 1]
_GPTS = np.array([0.5 - math.sqrt(3.0 / 5.0) / 2.0, 0.5, 0.5 + math.sqrt(3.0 / 5.0) / 2.0])
_GWTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
# hat-function weight tables over the gauss axis, used by the batch assembler
_W_VAL = np.stack([(1.0 - _GPTS)[None, :, None], _GPTS[None, :, None]])
_W_VAL2 = np.column_stack([1.0 - _GPTS, _GPTS])  # (gauss, {left,right})
_W_JAC = np.column_stack([(1.0 - _GPTS) ** 2, _GPTS**2, (1.0 - _GPTS) * _GPTS])


class DimensionMismatch(ValueError):
    pass


def _tri_matvec(diag, off, v):
    """Symmetric tridiagonal product; v may be (n,) or (n, k) stage-stacked."""
    if v.ndim == 1:
        out = diag * v
        out[:-1] += off * v[1:]
        out[1:] += off * v[:-1]
        return out
    out = diag[:, None] * v
    out[:-1] += off[:, None] * v[1:]
    out[1:] += off[:, None] * v[:-1]
    return out


class SingularSystem(np.linalg.LinAlgError):
    pass


class NewtonDivergence(RuntimeError):
    def __init__(self, message, residuals):
        super().__init__(f"{message}; residual history {residuals}")
        self.residuals = list(residuals)


# diagnostic only: residual history of the most recent Newton solve
_last_newton_residuals: list[float] = []


def last_newton_residuals() -> list[float]:
    return list(_last_newton_residuals)


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of (0, 1) with n_cells elements."""

    n_cells: int

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("need at least 2 cells")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.arange(1, self.n_cells) * self.h


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise reaction term n(u) with derivative, entering the RHS weakly."""

    value: callable
    derivative: callable


class FemSystem:
    """Assembled mass/stiffness pair plus load and optional reaction term."""

    def __init__(self, mesh: Mesh1D, source=None, nonlinearity: Nonlinearity | None = None):
        self.mesh = mesh
        n = mesh.n_cells
        h = mesh.h
        self.n_dof = n - 1
        self.mass_diag = np.full(self.n_dof, 4.0 * h / 6.0)
        self.mass_off = np.full(self.n_dof - 1, h / 6.0)
        self.stiff_diag = np.full(self.n_dof, 2.0 / h)
        self.stiff_off = np.full(self.n_dof - 1, -1.0 / h)
        self.source = source
        self.nonlinearity = nonlinearity
        # Gauss points of every cell, used by the load and reaction assemblers
        cells = np.arange(n) * h
        self.quad_x = (cells[:, None] + h * _GPTS[None, :]).ravel()
        self.quad_w = np.tile(h * _GWTS, n)
        self.phi_left = np.tile(1.0 - _GPTS, n)
        self.phi_right = np.tile(_GPTS, n)
        # mass Cholesky, reused by M^{-1} applications
        ab = np.zeros((2, self.n_dof))
        ab[0, 1:] = self.mass_off
        ab[1, :] = self.mass_diag
        self._mass_chol = cholesky_banded(ab, lower=False)
        self._cache: dict = {}

    # -- banded operator helpers --

    def mass_matvec(self, v: np.ndarray) -> np.ndarray:
        return _tri_matvec(self.mass_diag, self.mass_off, v)

    def stiff_matvec(self, v: np.ndarray) -> np.ndarray:
        return _tri_matvec(self.stiff_diag, self.stiff_off, v)

    def mass_solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self._mass_chol, False), rhs, check_finite=False)

    def shifted_ab(self, a, b) -> np.ndarray:
        """Banded form of a*M + b*K for solve_banded((1,1), ...)."""
        dtype = complex if (np.iscomplexobj(a) or np.iscomplexobj(b)
                            or isinstance(a, complex) or isinstance(b, complex)) else float
        ab = np.zeros((3, self.n_dof), dtype=dtype)
        ab[0, 1:] = a * self.mass_off + b * self.stiff_off
        ab[1, :] = a * self.mass_diag + b * self.stiff_diag
        ab[2, :-1] = a * self.mass_off + b * self.stiff_off
        return ab

    # -- weak-form assembly --

    def _scatter(self, point_values: np.ndarray) -> np.ndarray:
        """Integrate point values against interior hat functions."""
        wv = self.quad_w * point_values
        per_cell = wv.reshape(-1, 3)
        cl = (per_cell * (1.0 - _GPTS)).sum(axis=1)
        cr = (per_cell * _GPTS).sum(axis=1)
        return cr[:-1] + cl[1:]

    def load(self, t: float) -> np.ndarray:
        """Weak form of the u-independent source at time t (zeros if absent)."""
        if self.source is None:
            return np.zeros(self.n_dof)
        return self._scatter(self.source(self.quad_x, t))

    def interp_at_quad(self, u: np.ndarray) -> np.ndarray:
        """Values of the P1 interpolant of u at every Gauss point."""
        full = np.zeros(self.n_dof + 2)
        full[1:-1] = u
        vals = full[:-1, None] * (1.0 - _GPTS) + full[1:, None] * _GPTS
        return vals.ravel()

    def reaction(self, u: np.ndarray) -> np.ndarray:
        """Weak form of n(u) for the P1 interpolant of u."""
        if self.nonlinearity is None:
            return np.zeros(self.n_dof)
        return self._scatter(self.nonlinearity.value(self.interp_at_quad(u)))

    def reaction_jacobian(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tridiagonal (diag, off) of d(reaction)/du."""
        nprime = self.nonlinearity.derivative(self.interp_at_quad(u))
        w = (self.quad_w * nprime).reshape(-1, 3)
        dll = (w * (1.0 - _GPTS) ** 2).sum(axis=1)
        drr = (w * _GPTS**2).sum(axis=1)
        dlr = (w * (1.0 - _GPTS) * _GPTS).sum(axis=1)
        diag = drr[:-1] + dll[1:]
        off = dlr[1:-1]
        return diag, off

    def reaction_batch(self, U: np.ndarray):
        """Weak reaction values and Jacobian diagonals for stacked states.

        U has shape (n_dof, s); returns (values (n_dof, s),
        jac_diag (n_dof, s), jac_off (n_dof - 1, s)) in one pass so the
        stage Newton assembles every stage without per-stage call overhead.
        """
        n = self.mesh.n_cells
        full = np.zeros((n + 1, U.shape[1]))
        full[1:-1] = U
        # quad values per (cell, gauss point, stage)
        vals = full[:-1, None, :] * _W_VAL[0] + full[1:, None, :] * _W_VAL[1]
        w = self.mesh.h * _GWTS
        # contract the gauss axis against hat-function weights in one BLAS call
        nval = self.nonlinearity.value(vals)
        clr = np.tensordot(nval, w[:, None] * _W_VAL2, axes=([1], [0]))  # (n, s, 2)
        values = clr[:-1, :, 1] + clr[1:, :, 0]
        nprime = self.nonlinearity.derivative(vals)
        d = np.tensordot(nprime, w[:, None] * _W_JAC, axes=([1], [0]))  # (n, s, 3)
        return values, d[:-1, :, 1] + d[1:, :, 0], d[1:-1, :, 2]


def assemble(mesh: Mesh1D, source=None, nonlinearity: Nonlinearity | None = None) -> FemSystem:
    """Assemble mass/stiffness operators and the load machinery for a mesh."""
    return FemSystem(mesh, source=source, nonlinearity=nonlinearity)


def l2_norm(v: np.ndarray, sys: FemSystem) -> float:
    """Discrete L2(0,1) norm sqrt(v^T M v)."""
    if len(v) != sys.n_dof:
        raise DimensionMismatch(f"len(v) = {len(v)}, expected {sys.n_dof}")
    return math.sqrt(abs(float(np.real(np.vdot(v, sys.mass_matvec(v))))))


def solve_shifted(a, b, sys: FemSystem, rhs: np.ndarray):
    """Direct banded solve of (a*M + b*K) x = rhs; a, b may be complex."""
    if len(rhs) != sys.n_dof:
        raise DimensionMismatch(f"len(rhs) = {len(rhs)}, expected {sys.n_dof}")
    ab = sys.shifted_ab(a, b)
    try:
        return solve_banded((1, 1), ab, rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


# --- implicit Runge-Kutta steps -----------------------------------------


def _stage_matrix(sys: FemSystem, tableau: ButcherTableau, dt: float) -> np.ndarray:
    """Banded matrix of the coupled linear stage system (I x M + dt A x K).

    Unknown ordering is node-major (index = node * s + stage), giving
    bandwidth 2s - 1.  In banded storage ab[bw + r - c, c] the (i, j)
    stage pair lands on three constant rows with stride-s column slices.
    """
    key = ("irk", tableau.A.tobytes(), dt)
    ab = sys._cache.get(key)
    if ab is not None:
        return ab
    s = tableau.stages
    N = sys.n_dof
    bw = 2 * s - 1
    ab = np.zeros((2 * bw + 1, s * N))
    md, mo = sys.mass_diag, sys.mass_off
    kd, ko = sys.stiff_diag, sys.stiff_off

    for i in range(s):
        for j in range(s):
            a_ij = tableau.A[i, j]
            diag_block = dt * a_ij * kd + (md if i == j else 0.0)
            ab[bw + i - j, j::s] += diag_block
            if a_ij != 0.0:
                ab[bw + i - j - s, j + s :: s] += dt * a_ij * ko
                ab[bw + i - j + s, j : (N - 1) * s : s] += dt * a_ij * ko
        ab[bw - s, i + s :: s] += mo
        ab[bw + s, i : (N - 1) * s : s] += mo
    sys._cache[key] = ab
    return ab


def _stage_rhs_linear(sys, tableau, dt, t, u):
    s = tableau.stages
    ku = sys.stiff_matvec(u)
    rhs = np.empty((sys.n_dof, s))
    for i in range(s):
        rhs[:, i] = sys.load(t + tableau.c[i] * dt) - ku
    return rhs.reshape(-1)


def irk_step(
    tableau: ButcherTableau,
    dt: float,
    t: float,
    u: np.ndarray,
    sys: FemSystem,
    warm=None,
    return_stages: bool = False,
):
    """One implicit RK step of M u' + K u = F(t) + N(u) from time t.

    Linear problems solve the coupled stage system in one banded solve;
    with a reaction term the stage system is solved by a full Newton
    iteration (tolerance 1e-12 on the M-norm of the residual).  `warm`
    optionally seeds the Newton iteration with the stage slopes of the
    previous step; `return_stages` also returns those slopes so a sweep
    can thread them through.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    s = tableau.stages
    N = sys.n_dof
    ab = _stage_matrix(sys, tableau, dt)
    bw = 2 * s - 1

    if sys.nonlinearity is None:
        rhs = _stage_rhs_linear(sys, tableau, dt, t, u)
        try:
            k = solve_banded((bw, bw), ab, rhs, check_finite=False).reshape(N, s)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        out = u + dt * (k @ tableau.b)
        return (out, k) if return_stages else out

    global _last_newton_residuals
    loads = np.stack([sys.load(t + tableau.c[i] * dt) for i in range(s)], axis=1)
    k = np.zeros((N, s)) if warm is None else warm.copy()
    residuals = []
    _last_newton_residuals = residuals
    for _ in range(_NEWTON_MAXIT):
        stages = u[:, None] + dt * (k @ tableau.A.T)
        nval, jdiag, joff = sys.reaction_batch(stages)
        res = sys.mass_matvec(k) + sys.stiff_matvec(stages) - nval - loads
        rnorm = math.sqrt(float(np.sum(res * sys.mass_solve(res))))
        residuals.append(rnorm)
        if _newton_done(residuals):
            out = u + dt * (k @ tableau.b)
            return (out, k) if return_stages else out
        jab = ab.copy()
        for i in range(s):
            for j in range(s):
                a_ij = dt * tableau.A[i, j]
                if a_ij == 0.0:
                    continue
                jab[bw + i - j, j::s] -= a_ij * jdiag[:, i]
                jab[bw + i - j - s, j + s :: s] -= a_ij * joff[:, i]
                jab[bw + i - j + s, j : (N - 1) * s : s] -= a_ij * joff[:, i]
        try:
            dk = solve_banded((bw, bw), jab, res.reshape(-1), check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        k = k - dk.reshape(N, s)
    raise NewtonDivergence("stage Newton did not reach tolerance", residuals)


# --- two-step steps -------------------------------------------------------


def _history_rhs(ts: TwoStepScheme, tau: float, sys: FemSystem, v1, v2):
    a0, a1, _ = ts.alpha
    b0, b1, _ = ts.beta
    out = -(a0 * sys.mass_matvec(v1) + b0 * tau * sys.stiff_matvec(v1))
    out -= a1 * sys.mass_matvec(v2) + b1 * tau * sys.stiff_matvec(v2)
    return out


def two_step_apply(ts: TwoStepScheme, tau: float, t: float, v1: np.ndarray, v2: np.ndarray, sys: FemSystem) -> np.ndarray:
    """Advance the two-step scheme one step: v1 at t-tau, v2 at t, result at t+tau.

    Solves (alpha2 M + beta2 tau K) v3 = history + tau * sum_i beta_i
    (F + N)(v_(i+1), t+(i-1)tau).  The implicit reaction term (beta2 != 0)
    is resolved by Newton iteration started from v2.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    a2 = ts.alpha[2]
    b0, b1, b2 = ts.beta
    rhs = _history_rhs(ts, tau, sys, v1, v2)
    rhs += tau * (b0 * sys.load(t - tau) + b1 * sys.load(t) + b2 * sys.load(t + tau))
    if sys.nonlinearity is not None:
        rhs += tau * (b0 * sys.reaction(v1) + b1 * sys.reaction(v2))

    if sys.nonlinearity is None or b2 == 0.0:
        if sys.nonlinearity is not None and b2 == 0.0:
            pass  # explicit in the reaction, nothing implicit to add
        return solve_shifted(a2, b2 * tau, sys, rhs)

    # Newton for (a2 M + b2 tau K) v3 - tau b2 N(v3) = rhs
    global _last_newton_residuals
    v3 = v2.copy()
    ab0 = sys.shifted_ab(a2, b2 * tau)
    residuals = []
    _last_newton_residuals = residuals
    for _ in range(_NEWTON_MAXIT):
        res = (
            a2 * sys.mass_matvec(v3)
            + b2 * tau * sys.stiff_matvec(v3)
            - tau * b2 * sys.reaction(v3)
            - rhs
        )
        rnorm = math.sqrt(float(res @ sys.mass_solve(res)))
        residuals.append(rnorm)
        if _newton_done(residuals):
            return v3
        jd, jo = sys.reaction_jacobian(v3)
        jab = ab0.copy()
        jab[1, :] -= tau * b2 * jd
        jab[0, 1:] -= tau * b2 * jo
        jab[2, :-1] -= tau * b2 * jo
        try:
            dv = solve_banded((1, 1), jab, res, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        v3 = v3 - dv
    raise NewtonDivergence("two-step Newton did not reach tolerance", residuals)


def o2cp_extrapolated_step(ts: TwoStepScheme, tau: float, t: float, v1: np.ndarray, v2: np.ndarray, sys: FemSystem) -> np.ndarray:
    """Semi-explicit two-step variant: the t+tau source value is extrapolated.

    Replaces (F+N)(v3, t+tau) by 2 (F+N)(v2, t) - (F+N)(v1, t-tau), which
    collapses the step to a single banded solve.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    a2 = ts.alpha[2]
    b0, b1, b2 = ts.beta
    w2 = b1 + 2.0 * b2
    w1 = b0 - b2
    rhs = _history_rhs(ts, tau, sys, v1, v2)
    rhs += tau * (w2 * sys.load(t) + w1 * sys.load(t - tau))
    if sys.nonlinearity is not None:
        rhs += tau * (w2 * sys.reaction(v2) + w1 * sys.reaction(v1))
    return solve_shifted(a2, b2 * tau, sys, rhs)


# --- single-step application ---------------------------------------------


def _partial_fractions(poly_num: Polynomial, poly_den: Polynomial):
    """Split num/den (simple poles) into r_inf + sum c_k / (s - z_k)."""
    num = np.array(poly_num.coeffs)
    den = np.array(poly_den.coeffs)
    if len(num) > len(den):
        raise ValueError("rational part must be proper or bounded at infinity")
    r_inf = num[-1] / den[-1] if len(num) == len(den) else 0.0
    adj = num - r_inf * den[: len(num)] if len(num) == len(den) else num
    roots = np.roots(den[::-1])
    dden = np.polyder(den[::-1])
    coef = [np.polyval(adj[::-1], z) / np.polyval(dden, z) for z in roots]
    return float(r_inf), list(zip(roots, coef))


def _stiff_consistent_terms(scheme: SingleStepScheme, sys: FemSystem):
    key = ("ocp_pf", scheme.name)
    hit = sys._cache.get(key)
    if hit is not None:
        return hit
    R = scheme.stability
    r_inf, pf_R = _partial_fractions(R.num, R.den)
    # P(s) = (1 - R(s))/s = ((den - num)/s) / den, exact since R(0) = 1
    pnum = (R.den - R.num).shift_down()
    _, pf_P = _partial_fractions(pnum, R.den)
    out = (r_inf, pf_R, pf_P)
    sys._cache[key] = out
    return out


def _apply_rational_terms(pf_terms, dt: float, sys: FemSystem, vec_mass: np.ndarray) -> np.ndarray:
    """Sum of c_k (dt*A - z_k)^{-1} applied through (dt K - z M) x = vec_mass."""
    out = np.zeros(sys.n_dof)
    done = set()
    for idx, (z, c) in enumerate(pf_terms):
        if idx in done:
            continue
        if abs(z.imag) < 1e-13:
            x = solve_shifted(-z.real, dt, sys, vec_mass)
            out += (c.real if np.iscomplexobj(c) else c) * x
        else:
            # conjugate partner contributes the complex conjugate term
            x = solve_shifted(-z, dt, sys, vec_mass.astype(complex))
            out += 2.0 * np.real(c * x)
            for jdx in range(idx + 1, len(pf_terms)):
                if jdx not in done and abs(pf_terms[jdx][0] - np.conj(z)) < 1e-10:
                    done.add(jdx)
                    break
        done.add(idx)
    return out


def single_step_apply(scheme: SingleStepScheme, dt: float, t: float, u: np.ndarray, sys: FemSystem) -> np.ndarray:
    """Advance a single-step coarse propagator from t to t + dt.

    Tableau-backed schemes take an implicit RK step.  Schemes known only
    through their stability function R apply U+ = R(dt A) U + dt P(dt A)
    f(t + dt) with P(s) = (1 - R(s))/s, realized by banded solves on the
    factored denominator (complex-conjugate pole pairs fold into one
    complex solve each).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if scheme.source_rule != STIFF_CONSISTENT:
        return irk_step(scheme.tableau, dt, t, u, sys)
    r_inf, pf_R, pf_P = _stiff_consistent_terms(scheme, sys)
    out = r_inf * u + _apply_rational_terms(pf_R, dt, sys, sys.mass_matvec(u))
    load = sys.load(t + dt)
    if np.any(load):
        out += dt * _apply_rational_terms(pf_P, dt, sys, load)
    return out
