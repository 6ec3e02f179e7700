"""Drivers for the single-step and two-step parareal iterations.

The two-step driver works on a half-index lattice: slot m holds the value
at time m * tau with tau half the coarse step.  Fine sweeps over the
overlapping coarse windows are independent and may run on a thread pool;
results are keyed by window index so traces do not depend on the degree
of parallelism.  Corrections are sequential by construction.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .propagators import SingleStepScheme, TwoStepScheme, catalog

__all__ = [
    "InsufficientTrace",
    "PararealConfig",
    "IterationTrace",
    "SolutionLattice",
    "random_init",
    "fine_reference",
    "run_single_step",
    "run_two_step",
    "empirical_factor",
    "speedup",
]


class InsufficientTrace(ValueError):
    """Too few pre-stagnation iterations to estimate a contraction factor."""


@dataclass(frozen=True)
class PararealConfig:
    T: float
    J: int
    dt: float
    cp: str
    fp: str
    K_max: int = 30
    tol: float = 1e-9
    seed: int = 0
    init_mode: str = "random"  # or "coarse"
    threads: int = 1
    cp_extrapolated: bool = False

    def __post_init__(self):
        if self.J < 2 or self.J % 2 != 0:
            raise ValueError("J must be a positive even integer")
        n_c = self.T / (self.J * self.dt)
        if abs(n_c - round(n_c)) > 1e-8 or round(n_c) < 1:
            raise ValueError("T / (J dt) must be a positive integer")
        # 'fine' seeds the iterate with the fine reference itself, which is
        # useful for fixed-point verification
        if self.init_mode not in ("random", "coarse", "fine"):
            raise ValueError("init_mode must be 'random', 'coarse', or 'fine'")

    @property
    def N_c(self) -> int:
        return int(round(self.T / (self.J * self.dt)))

    @property
    def delta_T(self) -> float:
        return self.J * self.dt

    @property
    def tau(self) -> float:
        return self.delta_T / 2.0


@dataclass
class SolutionLattice:
    """Values on the half-index lattice: row m is the state at time m*tau."""

    values: np.ndarray  # (2*N_c + 1, n_dof)
    tau: float

    @property
    def slots(self) -> int:
        return self.values.shape[0]


@dataclass
class IterationTrace:
    errors: list[float] = field(default_factory=list)  # e_k, k = 0 is the initial guess
    cp_costs: list[float] = field(default_factory=list)
    fp_max_costs: list[float] = field(default_factory=list)
    fp_mean_costs: list[float] = field(default_factory=list)
    finite_convergence: list[float] = field(default_factory=list)  # two-step only
    fine_steps_total: int = 0
    fine_reference_cost: float = 0.0
    tol: float = 1e-9
    iterations_to_tol: int | None = None
    lattice_history: list[np.ndarray] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "error", "cp_cost", "fp_cost"])
            for k, e in enumerate(self.errors):
                cp = self.cp_costs[k - 1] if 1 <= k <= len(self.cp_costs) else ""
                fp = self.fp_max_costs[k - 1] if 1 <= k <= len(self.fp_max_costs) else ""
                w.writerow([k, repr(float(e)), cp, fp])

    def summary(self) -> dict:
        out = {
            "iterations": self.iterations_to_tol,
            "tol": self.tol,
            "errors": [float(e) for e in self.errors],
        }
        try:
            out["empirical_factor"] = empirical_factor(self)
        except InsufficientTrace:
            out["empirical_factor"] = None
        if self.fine_reference_cost > 0 and self.iterations_to_tol:
            out["speedup"] = speedup(self, self.fine_reference_cost)
        return out

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def random_init(seed: int, shape: tuple[int, int], u0: np.ndarray) -> np.ndarray:
    """Uniform [0, 1] nodal values on every lattice slot except slot 0 = u0."""
    rng = np.random.default_rng(seed)
    lattice = rng.uniform(0.0, 1.0, size=shape)
    lattice[0] = u0
    return lattice


def _fine_window(fp_tab, dt: float, J: int, t0: float, u: np.ndarray, sys):
    """J fine steps from time t0; returns (midpoint, endpoint, wall_time).

    Stage slopes are threaded step to step as the Newton warm start.
    """
    tic = time.perf_counter()
    v = u
    warm = None
    half = J // 2
    for j in range(half):
        v, warm = fem.irk_step(fp_tab, dt, t0 + j * dt, v, sys, warm=warm, return_stages=True)
    mid = v
    for j in range(half, J):
        v, warm = fem.irk_step(fp_tab, dt, t0 + j * dt, v, sys, warm=warm, return_stages=True)
    return mid, v, time.perf_counter() - tic


def _fp_tableau(config):
    fp = catalog(config.fp)
    if not isinstance(fp, SingleStepScheme) or fp.tableau is None:
        raise TypeError(f"fine propagator {config.fp!r} must have a tableau")
    return fp.tableau


def fine_reference(config: PararealConfig, sys: fem.FemSystem, u0: np.ndarray) -> tuple[SolutionLattice, float, int]:
    """Sequential fine sweep recording every half-coarse index.

    Returns (lattice, wall_time, total fine steps = N_c * J).
    """
    fp_tab = _fp_tableau(config)
    half = config.J // 2
    slots = 2 * config.N_c + 1
    lattice = np.empty((slots, sys.n_dof))
    lattice[0] = u0
    tic = time.perf_counter()
    v = u0
    warm = None
    for m in range(slots - 1):
        t0 = m * config.tau
        for j in range(half):
            v, warm = fem.irk_step(
                fp_tab, config.dt, t0 + j * config.dt, v, sys, warm=warm, return_stages=True
            )
        lattice[m + 1] = v
    cost = time.perf_counter() - tic
    return SolutionLattice(lattice, config.tau), cost, config.N_c * config.J


def _error_on_integer_slots(lattice: np.ndarray, ref: np.ndarray, sys) -> float:
    # max over n = 1..N_c of the L2 norm at integer indices (even slots)
    return max(
        fem.l2_norm(lattice[m] - ref[m], sys) for m in range(2, lattice.shape[0], 2)
    )


def _run_windows(fp_tab, config, sys, lattice, count, stride: float):
    """Fine sweeps from slots 0..count-1 (slot m starts at m * stride).

    With threads > 1 the windows run on a thread pool; results are placed
    by window index, so the trace is identical to a sequential run.
    """
    results = [None] * count
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            futs = {
                pool.submit(
                    _fine_window, fp_tab, config.dt, config.J, m * stride, lattice[m], sys
                ): m
                for m in range(count)
            }
            for fut, m in futs.items():
                results[m] = fut.result()
    else:
        for m in range(count):
            results[m] = _fine_window(
                fp_tab, config.dt, config.J, m * stride, lattice[m], sys
            )
    return results


def run_single_step(config: PararealConfig, sys: fem.FemSystem, u0: np.ndarray) -> IterationTrace:
    """Classical parareal iteration with a single-step coarse propagator."""
    cp = catalog(config.cp)
    if not isinstance(cp, SingleStepScheme):
        raise TypeError(f"{config.cp!r} is not a single-step scheme")
    fp_tab = _fp_tableau(config)
    n_c = config.N_c
    dT = config.delta_T

    ref_lat, ref_cost, ref_steps = fine_reference(config, sys, u0)
    ref = ref_lat.values[::2]  # integer slots

    if config.init_mode == "random":
        U = random_init(config.seed, (n_c + 1, sys.n_dof), u0)
    elif config.init_mode == "fine":
        U = ref.copy()
    else:
        U = np.empty((n_c + 1, sys.n_dof))
        U[0] = u0
        for n in range(n_c):
            U[n + 1] = fem.single_step_apply(cp, dT, n * dT, U[n], sys)

    trace = IterationTrace(tol=config.tol, fine_reference_cost=ref_cost)
    trace.fine_steps_total = ref_steps
    trace.lattice_history.append(U.copy())
    err0 = max(fem.l2_norm(U[n] - ref[n], sys) for n in range(1, n_c + 1))
    trace.errors.append(err0)

    for k in range(1, config.K_max + 1):
        windows = _run_windows(fp_tab, config, sys, U, n_c, stride=dT)
        tilde = np.stack([w[1] for w in windows])  # endpoint of each window
        times = [w[2] for w in windows]
        trace.fine_steps_total += n_c * config.J
        trace.fp_max_costs.append(max(times))
        trace.fp_mean_costs.append(sum(times) / len(times))

        tic = time.perf_counter()
        Unew = np.empty_like(U)
        Unew[0] = u0
        for n in range(n_c):
            t_n = n * dT
            Unew[n + 1] = (
                fem.single_step_apply(cp, dT, t_n, Unew[n], sys)
                + tilde[n]
                - fem.single_step_apply(cp, dT, t_n, U[n], sys)
            )
        trace.cp_costs.append(time.perf_counter() - tic)

        U = Unew
        trace.lattice_history.append(U.copy())
        err = max(fem.l2_norm(U[n] - ref[n], sys) for n in range(1, n_c + 1))
        trace.errors.append(err)
        if err < config.tol:
            trace.iterations_to_tol = k
            break
    return trace


def run_two_step(config: PararealConfig, sys: fem.FemSystem, u0: np.ndarray) -> IterationTrace:
    """Two-step parareal iteration on the half-index lattice.

    Iteration k sweeps the fine propagator over the 2*N_c - 1 overlapping
    windows, overrides the first two slots with their fine values at k = 0,
    then runs the sequential two-step corrections.  The error is reported
    on integer indices only.
    """
    cp = catalog(config.cp)
    if not isinstance(cp, TwoStepScheme):
        raise TypeError(f"{config.cp!r} is not a two-step scheme")
    fp_tab = _fp_tableau(config)
    n_c = config.N_c
    tau = config.tau
    slots = 2 * n_c + 1
    step = fem.o2cp_extrapolated_step if config.cp_extrapolated else fem.two_step_apply

    ref_lat, ref_cost, ref_steps = fine_reference(config, sys, u0)
    ref = ref_lat.values

    if config.init_mode == "random":
        U = random_init(config.seed, (slots, sys.n_dof), u0)
    elif config.init_mode == "fine":
        U = ref.copy()
    else:
        U = np.empty((slots, sys.n_dof))
        U[0] = u0
        U[1] = fem.single_step_apply(catalog("backward_euler"), tau, 0.0, u0, sys)
        for m in range(slots - 2):
            U[m + 2] = step(cp, tau, (m + 1) * tau, U[m], U[m + 1], sys)

    trace = IterationTrace(tol=config.tol, fine_reference_cost=ref_cost)
    trace.fine_steps_total = ref_steps
    trace.lattice_history.append(U.copy())
    trace.errors.append(_error_on_integer_slots(U, ref, sys))

    for k in range(config.K_max):
        windows = _run_windows(fp_tab, config, sys, U, slots - 2, stride=tau)
        times = [w[2] for w in windows]
        trace.fine_steps_total += (slots - 2) * config.J
        trace.fp_max_costs.append(max(times))
        trace.fp_mean_costs.append(sum(times) / len(times))
        mids = np.stack([w[0] for w in windows])
        ends = np.stack([w[1] for w in windows])

        if k == 0:
            # first window runs from u0, so its fine values are exact
            U[1] = mids[0]
            U[2] = ends[0]
            trace.lattice_history[0] = U.copy()

        tic = time.perf_counter()
        Unew = np.empty_like(U)
        Unew[0] = u0
        Unew[1] = U[1]  # pinned for every k
        for m in range(slots - 2):
            t_v2 = (m + 1) * tau
            Unew[m + 2] = (
                step(cp, tau, t_v2, Unew[m], Unew[m + 1], sys)
                + ends[m]
                - step(cp, tau, t_v2, U[m], mids[m], sys)
            )
        trace.cp_costs.append(time.perf_counter() - tic)

        U = Unew
        trace.lattice_history.append(U.copy())
        upto = min(2 * (k + 1), slots - 1)
        trace.finite_convergence.append(
            max(fem.l2_norm(U[m] - ref[m], sys) for m in range(upto + 1))
        )
        err = _error_on_integer_slots(U, ref, sys)
        trace.errors.append(err)
        if err < config.tol:
            trace.iterations_to_tol = k + 1
            break
    return trace


def empirical_factor(trace: IterationTrace) -> float:
    """Geometric mean of successive error ratios before stagnation.

    Ratios e_(k+1)/e_k are taken for k = 1, 2, ... while e_k stays at
    least 100x above the stagnation floor (the final error when the
    tolerance was reached, 1e-11 otherwise).
    """
    e = trace.errors
    floor = e[-1] if trace.iterations_to_tol is not None else 1e-11
    cutoff = 100.0 * floor
    ratios = []
    for k in range(1, len(e) - 1):
        if e[k] < cutoff or e[k + 1] < cutoff or e[k] <= 0.0:
            break
        ratios.append(e[k + 1] / e[k])
    if len(ratios) < 2:
        raise InsufficientTrace(f"only {len(ratios)} usable ratios")
    return float(np.exp(np.mean(np.log(ratios))))


def speedup(trace: IterationTrace, fine_cost: float) -> float:
    """cost_seq / (Iter * (cost_CP + cost_FP)), communication ignored."""
    iters = trace.iterations_to_tol
    if iters is None or not trace.cp_costs:
        raise InsufficientTrace("run did not reach tolerance")
    cost_cp = float(np.mean(trace.cp_costs))
    cost_fp = float(np.mean(trace.fp_mean_costs))
    return fine_cost / (iters * (cost_cp + cost_fp))
