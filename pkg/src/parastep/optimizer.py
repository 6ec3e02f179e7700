"""Barrier-method search for two-step coarse propagators.

Minimizes the sampled reduced contraction factor over the four-parameter
family (a1, a2, b1, c2) subject to strict root-modulus stability, by an
adaptive (diagonally scaled) subgradient descent on the barrier loss
L_mu = L_s - mu * L_b with a geometrically decreasing weight mu.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import SpectralGrid, default_grid
from .propagators import ThetaParams

__all__ = [
    "Infeasible",
    "NoFeasibleInit",
    "OptimizerConfig",
    "OptimizerTrace",
    "loss_s",
    "loss_b",
    "total_loss",
    "subgradient",
    "optimize",
    "RANDOM_INIT",
]

_FEAS_TOL = 1e-12  # strict feasibility: max |rho| < 1 - _FEAS_TOL

RANDOM_INIT = "random"


class Infeasible(ValueError):
    """A root modulus reached 1 on the sample grid."""

    def __init__(self, theta, s):
        self.theta = theta
        self.s = s
        super().__init__(f"|rho(s)| >= 1 - 1e-12 at s = {s} for theta = {theta}")


class NoFeasibleInit(RuntimeError):
    """Random initialization failed to find a feasible point."""


@dataclass(frozen=True)
class OptimizerConfig:
    grid: SpectralGrid = field(default_factory=default_grid)
    mu0: float = 1e-2
    sigma: float = 0.5
    outer_iters: int = 10
    inner_iters: int = 1000
    step_size: float = 0.05
    grad_tolerance: float = 1e-6
    seed: int = 0
    init: ThetaParams | str = field(
        default_factory=lambda: ThetaParams(0.0, 0.0, 0.0, 0.0)
    )

    def __post_init__(self):
        if not (0.0 < self.sigma < 1.0):
            raise ValueError("sigma must lie in (0, 1)")
        if self.mu0 <= 0.0:
            raise ValueError("mu0 must be positive")


@dataclass
class TraceRow:
    outer: int
    inner: int
    theta: tuple[float, float, float, float]
    loss_s: float
    loss_b: float
    loss_mu: float
    feasible: bool


@dataclass
class OptimizerTrace:
    rows: list[TraceRow] = field(default_factory=list)
    stopped_early: bool = False
    resamples: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["outer", "inner", "a1", "a2", "b1", "c2", "loss_s", "loss_b", "loss_mu", "feasible"])
            for r in self.rows:
                w.writerow(
                    [r.outer, r.inner]
                    + [repr(x) for x in r.theta]
                    + [repr(r.loss_s), repr(r.loss_b), repr(r.loss_mu), int(r.feasible)]
                )


# --- losses --------------------------------------------------------------


def _curves(theta: np.ndarray, s: np.ndarray):
    a1, a2, b1, c2 = theta
    den = 1.0 + math.exp(b1) * s
    R1 = (a1 + a2 * s) / den
    R2 = ((1.0 - a1) + c2 * s) / den
    disc = np.sqrt((R2 * R2 + 4.0 * R1).astype(complex))
    plus = (np.conj(R2) * disc).real >= 0.0
    big = np.where(plus, R2 + disc, R2 - disc) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big != 0.0, -R1 / np.where(big != 0.0, big, 1.0), 0.0)
    hi = np.maximum(np.abs(big), np.abs(small))
    lo = np.minimum(np.abs(big), np.abs(small))
    return R1, R2, hi, lo


def _first_violation(grid: SpectralGrid, hi: np.ndarray):
    bad = np.nonzero(hi >= 1.0 - _FEAS_TOL)[0]
    return float(grid.samples[bad[0]]) if len(bad) else None


def is_feasible(theta: ThetaParams, grid: SpectralGrid) -> bool:
    _, _, hi, _ = _curves(theta.as_array(), grid.samples)
    return _first_violation(grid, hi) is None


def loss_s(theta: ThetaParams, grid: SpectralGrid) -> float:
    """Sampled sup of the reduced contraction factor gamma_e(., theta)."""
    t = theta.as_array()
    s = grid.samples
    R1, R2, hi, lo = _curves(t, s)
    bad = _first_violation(grid, hi)
    if bad is not None:
        raise Infeasible(theta, bad)
    num = np.abs(np.exp(-2.0 * s) - R2 * np.exp(-s) - R1)
    return float(np.max(num / ((1.0 - hi) * (1.0 - lo))))


def loss_b(theta: ThetaParams, grid: SpectralGrid) -> float:
    """Mean log-barrier of the squared root moduli; finite and <= 0 when feasible."""
    t = theta.as_array()
    _, _, hi, lo = _curves(t, grid.samples)
    bad = _first_violation(grid, hi)
    if bad is not None:
        raise Infeasible(theta, bad)
    return float(np.mean(np.log(1.0 - hi * hi) + np.log(1.0 - lo * lo)))


def total_loss(theta: ThetaParams, grid: SpectralGrid, mu: float) -> float:
    """L_mu = L_s - mu * L_b."""
    return loss_s(theta, grid) - mu * loss_b(theta, grid)


def subgradient(theta: ThetaParams, grid: SpectralGrid, mu: float) -> np.ndarray:
    """Central finite-difference subgradient of the total loss.

    Per-coordinate step 1e-6 * (1 + |theta_i|); an infeasible probe point
    shrinks the step tenfold up to 3 times before giving up.
    """
    t = theta.as_array()
    g = np.zeros(4)
    for i in range(4):
        h = 1e-6 * (1.0 + abs(t[i]))
        for attempt in range(4):
            tp = t.copy()
            tm = t.copy()
            tp[i] += h
            tm[i] -= h
            try:
                fp = total_loss(ThetaParams.from_array(tp), grid, mu)
                fm = total_loss(ThetaParams.from_array(tm), grid, mu)
            except Infeasible:
                if attempt == 3:
                    raise
                h /= 10.0
                continue
            g[i] = (fp - fm) / (2.0 * h)
            break
    return g


# --- driver ---------------------------------------------------------------


def _random_theta(rng: np.random.Generator) -> ThetaParams:
    return ThetaParams(
        rng.uniform(0.0, 0.5),
        rng.uniform(-0.1, 0.1),
        rng.uniform(-1.0, 0.0),
        rng.uniform(-1.0, 0.0),
    )


def _initial_theta(config: OptimizerConfig) -> tuple[ThetaParams, int]:
    if isinstance(config.init, ThetaParams):
        if not is_feasible(config.init, config.grid):
            raise Infeasible(config.init, None)
        return config.init, 0
    rng = np.random.default_rng(config.seed)
    for attempt in range(100):
        theta = _random_theta(rng)
        if is_feasible(theta, config.grid):
            return theta, attempt
    raise NoFeasibleInit("100 random draws, none strictly feasible")


def optimize(config: OptimizerConfig) -> tuple[ThetaParams, OptimizerTrace]:
    """Run the barrier loop and return the best feasible point seen.

    Outer iterations shrink mu geometrically and restart the inner descent
    from the incumbent; inner iterations take diagonally rescaled
    subgradient steps (squared-gradient accumulation), halving any step
    that would leave the feasible region.  Tracking the incumbent makes
    the result never worse than the initial point.
    """
    grid = config.grid
    theta0, resamples = _initial_theta(config)
    trace = OptimizerTrace(resamples=resamples)

    best_theta = theta0.as_array()
    best_ls = loss_s(theta0, grid)
    accum = np.zeros(4)
    stopped = False

    for outer in range(config.outer_iters):
        mu = config.mu0 * config.sigma**outer
        t = best_theta.copy()
        for inner in range(config.inner_iters):
            try:
                g = subgradient(ThetaParams.from_array(t), grid, mu)
            except Infeasible:
                break
            gnorm = float(np.linalg.norm(g))
            if gnorm < config.grad_tolerance:
                stopped = True
                break
            accum += g * g
            step = config.step_size * g / np.sqrt(accum + 1e-12)
            cand = t - step
            for _ in range(60):
                if is_feasible(ThetaParams.from_array(cand), grid):
                    break
                step *= 0.5
                cand = t - step
            else:
                break
            t = cand
            ls = loss_s(ThetaParams.from_array(t), grid)
            lb = loss_b(ThetaParams.from_array(t), grid)
            trace.rows.append(
                TraceRow(
                    outer=outer,
                    inner=inner,
                    theta=tuple(float(x) for x in t),
                    loss_s=ls,
                    loss_b=lb,
                    loss_mu=ls - mu * lb,
                    feasible=True,
                )
            )
            if ls < best_ls:
                best_ls = ls
                best_theta = t.copy()
        if stopped:
            break

    trace.stopped_early = stopped
    return ThetaParams.from_array(best_theta), trace
