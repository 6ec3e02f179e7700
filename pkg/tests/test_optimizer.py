import math

import numpy as np
import pytest

from parastep.analysis import SpectralGrid, default_grid, single_step_gamma
from parastep.optimizer import (
    Infeasible,
    OptimizerConfig,
    RANDOM_INIT,
    is_feasible,
    loss_b,
    loss_s,
    optimize,
    subgradient,
    total_loss,
)
from parastep.propagators import ThetaParams, catalog

GRID = default_grid()
PUBLISHED = ThetaParams(0.02178, -0.00047, math.log(0.56380), -0.46300)
ZERO = ThetaParams(0.0, 0.0, 0.0, 0.0)
INFEASIBLE = ThetaParams(2.0, 0.0, 0.0, 0.0)  # R1(0) = 2 pushes a root outside

SMALL_GRID = SpectralGrid(np.linspace(0.05, 20.0, 120))


def small_config(**kw):
    base = dict(
        grid=SMALL_GRID,
        outer_iters=2,
        inner_iters=30,
        init=PUBLISHED,
        seed=0,
    )
    base.update(kw)
    return OptimizerConfig(**base)


class TestLossS:
    def test_published_theta_matches_gamma_e_star(self):
        assert loss_s(PUBLISHED, GRID) == pytest.approx(0.0064, abs=5e-4)

    def test_zero_theta_reduces_to_damped_single_step_factor(self):
        # R1 = 0, R2 = 1/(1+s): the factor collapses to
        # e^-s * |e^-s - R2| / (1 - R2), the half-step backward Euler factor
        R_be = catalog("backward_euler").stability
        composed = max(
            math.exp(-float(s)) * single_step_gamma(R_be, float(s))
            for s in GRID.samples
        )
        assert loss_s(ZERO, GRID) == pytest.approx(composed, rel=1e-12)
        assert composed == pytest.approx(0.1115, abs=2e-3)

    def test_nonnegative(self):
        for theta in (PUBLISHED, ZERO, ThetaParams(0.1, 0.05, -0.5, -0.3)):
            assert loss_s(theta, SMALL_GRID) >= 0.0

    def test_infeasible_raises_with_sample(self):
        with pytest.raises(Infeasible) as err:
            loss_s(INFEASIBLE, GRID)
        assert err.value.s is not None


class TestLossB:
    def test_always_nonpositive_when_feasible(self):
        for theta in (PUBLISHED, ZERO):
            assert loss_b(theta, GRID) <= 0.0

    def test_independent_summation_order(self):
        # recompute with a reversed, fsum-accumulated pass
        theta = PUBLISHED
        got = loss_b(theta, GRID)
        a1, a2, b1, c2 = theta.as_array()
        terms = []
        for s in GRID.samples[::-1]:
            den = 1.0 + math.exp(b1) * s
            R1 = (a1 + a2 * s) / den
            R2 = ((1.0 - a1) + c2 * s) / den
            disc = complex(R2 * R2 + 4.0 * R1) ** 0.5
            z1, z2 = (R2 + disc) / 2.0, (R2 - disc) / 2.0
            terms.append(math.log(1 - abs(z1) ** 2) + math.log(1 - abs(z2) ** 2))
        assert got == pytest.approx(math.fsum(terms) / len(terms), rel=1e-12)

    def test_infeasible_raises_before_log_blowup(self):
        with pytest.raises(Infeasible):
            loss_b(INFEASIBLE, GRID)


class TestTotalLoss:
    def test_mu_zero_is_loss_s(self):
        assert total_loss(PUBLISHED, GRID, 0.0) == loss_s(PUBLISHED, GRID)

    def test_composition_arithmetic(self):
        ls = loss_s(PUBLISHED, GRID)
        lb = loss_b(PUBLISHED, GRID)
        assert total_loss(PUBLISHED, GRID, 1.0) == pytest.approx(ls - lb, rel=1e-14)

    def test_nondecreasing_in_mu(self):
        assert total_loss(PUBLISHED, GRID, 0.2) >= total_loss(PUBLISHED, GRID, 0.1)


class TestSubgradient:
    def test_barrier_part_matches_decomposed_difference(self):
        theta = ThetaParams(0.1, 0.0, -0.4, -0.3)
        mu = 0.05
        g_total = subgradient(theta, SMALL_GRID, mu)
        g_s = subgradient(theta, SMALL_GRID, 0.0)
        fd_b = np.zeros(4)
        t = theta.as_array()
        for i in range(4):
            h = 1e-6 * (1.0 + abs(t[i]))
            tp, tm = t.copy(), t.copy()
            tp[i] += h
            tm[i] -= h
            fd_b[i] = (
                loss_b(ThetaParams.from_array(tp), SMALL_GRID)
                - loss_b(ThetaParams.from_array(tm), SMALL_GRID)
            ) / (2 * h)
        assert g_total - g_s == pytest.approx(-mu * fd_b, rel=1e-4, abs=1e-9)

    def test_descent_direction(self):
        theta = ZERO
        mu = 1e-2
        g = subgradient(theta, GRID, mu)
        f0 = total_loss(theta, GRID, mu)
        drops = []
        for eta in (1e-4, 1e-5):
            cand = ThetaParams.from_array(theta.as_array() - eta * g)
            drops.append(total_loss(cand, GRID, mu) < f0)
        assert any(drops)


class TestOptimize:
    def test_never_worse_than_init(self):
        start = ThetaParams(0.1, 0.02, -0.3, -0.2)
        theta, _ = optimize(small_config(init=start))
        assert loss_s(theta, SMALL_GRID) <= loss_s(start, SMALL_GRID)

    def test_published_init_not_worsened(self):
        theta, _ = optimize(small_config())
        assert loss_s(theta, GRID) <= loss_s(PUBLISHED, GRID) + 1e-4

    def test_deterministic_trace(self):
        t1, tr1 = optimize(small_config(init=ZERO))
        t2, tr2 = optimize(small_config(init=ZERO))
        assert np.array_equal(t1.as_array(), t2.as_array())
        assert len(tr1.rows) == len(tr2.rows)
        for a, b in zip(tr1.rows, tr2.rows):
            assert a.theta == b.theta
            assert a.loss_s == b.loss_s
            assert a.loss_mu == b.loss_mu

    def test_trace_length_bookkeeping(self):
        cfg = small_config(init=ZERO, outer_iters=2, inner_iters=8)
        _, trace = optimize(cfg)
        if not trace.stopped_early:
            assert len(trace.rows) == 2 * 8

    def test_trace_feasibility_flags_verified_independently(self):
        _, trace = optimize(small_config(init=ZERO, outer_iters=1, inner_iters=20))
        for row in trace.rows:
            if row.feasible:
                assert is_feasible(ThetaParams(*row.theta), SMALL_GRID)

    def test_random_init_feasible_and_tracked(self):
        cfg = small_config(init=RANDOM_INIT, seed=3, outer_iters=1, inner_iters=10)
        theta, trace = optimize(cfg)
        assert is_feasible(theta, SMALL_GRID)
        assert trace.resamples >= 0

    def test_published_theta_feasible_on_default_grid(self):
        assert is_feasible(PUBLISHED, GRID)
        # consistency root approaches 1 from below as s -> 0
        from parastep.analysis import rho_pair

        r1, _ = rho_pair(catalog("o2cp"), 0.01)
        assert abs(r1) < 1.0
        assert abs(r1) > 1.0 - 1e-2


class TestConfigValidation:
    def test_sigma_range(self):
        with pytest.raises(ValueError):
            OptimizerConfig(sigma=1.5)

    def test_mu0_positive(self):
        with pytest.raises(ValueError):
            OptimizerConfig(mu0=0.0)
