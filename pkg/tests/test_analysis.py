import math

import numpy as np
import pytest

from parastep.analysis import (
    AllPointsFailed,
    SpectralGrid,
    UnstableScheme,
    a_stability_check,
    boundary_locus,
    contour_map,
    default_grid,
    gamma_c,
    gamma_e,
    j_order_study,
    kappa_c,
    kappa_e,
    rho_pair,
    single_step_gamma,
    sup_over_grid,
)
from parastep.propagators import TwoStepScheme, catalog

BDF2 = catalog("bdf2")
O2CP = catalog("o2cp")
R_RIIA3 = catalog("radau_iia_3").stability
GRID = default_grid()

# explicit-leaning two-step scheme, consistent but unstable on the real axis
SYNTHETIC_UNSTABLE = TwoStepScheme.from_coefficients(
    "synthetic", (-1.0, 0.0, 1.0), (-1.0, 0.0, 0.0)
)


class TestGrid:
    def test_default_grid_shape(self):
        assert GRID.samples[0] == pytest.approx(0.01)
        assert GRID.samples[-1] == pytest.approx(1e4)
        assert np.all(np.diff(GRID.samples) > 0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            SpectralGrid(np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            SpectralGrid(np.array([2.0, 1.0]))


class TestRhoPair:
    def test_bdf2_at_small_s_limit(self):
        r1, r2 = rho_pair(BDF2, 1e-12)
        assert r1 == pytest.approx(1.0, abs=1e-9)
        assert r2 == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_o2cp_at_small_s_limit(self):
        r1, r2 = rho_pair(O2CP, 1e-12)
        assert r1 == pytest.approx(1.0, abs=1e-9)
        assert r2 == pytest.approx(-0.02178, abs=1e-9)

    def test_o2cp_large_s_against_numpy_roots(self):
        s = 1e9
        b = O2CP.R2(s)
        c = O2CP.R1(s)
        expected = sorted(abs(z) for z in np.roots([1.0, -b, -c]))
        r1, r2 = rho_pair(O2CP, s)
        assert abs(r1) == pytest.approx(expected[1], rel=1e-12)
        assert abs(r2) == pytest.approx(expected[0], rel=1e-12)
        # stays bounded well inside the unit disk at stiff limit
        assert abs(r1) == pytest.approx(0.8202, abs=2e-3)
        assert abs(r2) == pytest.approx(0.0010, abs=2e-4)

    def test_moduli_continuous_on_grid(self):
        for ts in (BDF2, O2CP):
            mods = np.array([[abs(z) for z in rho_pair(ts, float(s))] for s in GRID.samples])
            jumps = np.abs(np.diff(mods, axis=0))
            assert jumps.max() < 0.2


class TestGammaFactors:
    def test_gamma_c_recompute_oracle(self):
        s, J = 1.0, 40
        got = gamma_c(R_RIIA3, BDF2, J, s)
        rj = R_RIIA3(2.0 * s / J)
        num = abs(rj**J - BDF2.R2(s) * rj ** (J // 2) - BDF2.R1(s))
        r1, r2 = rho_pair(BDF2, s)
        expected = num / ((1 - abs(r1)) * (1 - abs(r2)))
        assert got == pytest.approx(expected, rel=1e-14)
        assert got > 0

    def test_gamma_c_zero_numerator(self):
        # scheme built so the numerator cancels at one sample s*
        s, J = 0.8, 10
        rj = R_RIIA3(2.0 * s / J)
        target = rj**J - 0.5 * rj ** (J // 2)  # want R1(s*) = target, R2(s*) = 0.5
        a0, a1 = 0.2, -1.2
        b0 = (-a0 - target) / s
        b1 = (-a1 - 0.5) / s
        ts = TwoStepScheme.from_coefficients("cancel", (a0, a1, 1.0), (b0, b1, 0.0))
        assert ts.R1(s) == pytest.approx(target, rel=1e-12)
        assert ts.R2(s) == pytest.approx(0.5, rel=1e-12)
        assert gamma_c(R_RIIA3, ts, J, s) == pytest.approx(0.0, abs=1e-13)

    def test_gamma_c_o2cp_peak_near_published(self):
        curve = sup_over_grid(lambda s: gamma_c(R_RIIA3, O2CP, 40, s), GRID)
        assert curve.sup == pytest.approx(0.0064, rel=0.10)

    def test_gamma_e_sups(self):
        sup_o2cp = sup_over_grid(lambda s: gamma_e(O2CP, s), GRID).sup
        assert sup_o2cp == pytest.approx(0.0064, abs=5e-4)
        sup_bdf2 = sup_over_grid(lambda s: gamma_e(BDF2, s), GRID).sup
        assert sup_bdf2 == pytest.approx(0.22, abs=0.02)

    def test_unstable_scheme_raises(self):
        with pytest.raises(UnstableScheme):
            gamma_e(SYNTHETIC_UNSTABLE, 1.0)


class TestKappaFactors:
    def test_kappa_c_explicit_small_sum(self):
        s, J, n_c = 1.3, 20, 1
        got = kappa_c(R_RIIA3, BDF2, J, s, n_c)
        rj = R_RIIA3(2.0 * s / J)
        num = abs(rj**J - BDF2.R2(s) * rj ** (J // 2) - BDF2.R1(s))
        r1, r2 = rho_pair(BDF2, s)
        total = sum(abs(r2**m - r1**m) for m in (1, 2, 3)) / abs(r1 - r2)
        assert got == pytest.approx(num * total, rel=1e-12)

    def test_kappa_confluent_limit(self):
        # exact double root rho1 = rho2 = 0.375 at s = 1: R2 = 0.75 and
        # R1 = -0.140625, every coefficient exactly representable so the
        # discriminant vanishes in floating point too
        ts = TwoStepScheme.from_coefficients(
            "confluent", (0.25, -1.25, 1.0), (-0.109375, 0.5, 0.0)
        )
        assert ts.R2(1.0) == 0.75
        assert ts.R1(1.0) == -0.140625
        r1, r2 = rho_pair(ts, 1.0)
        assert r1 == r2 == pytest.approx(0.375)
        v = kappa_e(ts, 1.0, 5)
        m = np.arange(1, 12)
        oracle = abs(math.exp(-2.0) - 0.75 * math.exp(-1.0) + 0.140625) * np.sum(
            m * 0.375 ** (m - 1)
        )
        assert v == pytest.approx(oracle, rel=1e-12)

    def test_kappa_e_sups_table_row(self):
        sup_bdf2 = sup_over_grid(lambda s: kappa_e(BDF2, s, 1000), GRID).sup
        assert sup_bdf2 == pytest.approx(0.15, abs=0.02)
        sup_o2cp = sup_over_grid(lambda s: kappa_e(O2CP, s, 1000), GRID).sup
        assert sup_o2cp == pytest.approx(0.0062, abs=5e-4)

    def test_kappa_sharper_than_gamma_for_o2cp(self):
        ge = sup_over_grid(lambda s: gamma_e(O2CP, s), GRID).sup
        ke = sup_over_grid(lambda s: kappa_e(O2CP, s, 1000), GRID).sup
        assert ke <= ge + 1e-4


class TestSingleStepGamma:
    @pytest.mark.parametrize(
        "name,expected,tol",
        [
            ("backward_euler", 0.298, 0.005),
            ("ocp", 0.014, 0.002),
            ("sdirk2", 0.26, 0.02),
        ],
    )
    def test_classical_factors(self, name, expected, tol):
        R = catalog(name).stability
        sup = sup_over_grid(lambda s: single_step_gamma(R, s), GRID).sup
        assert sup == pytest.approx(expected, abs=tol)


class TestSupOverGrid:
    def test_constant_function(self):
        curve = sup_over_grid(lambda s: 0.5, GRID)
        assert curve.sup == 0.5

    def test_all_points_failed(self):
        from parastep.rational import PoleError

        def boom(s):
            raise PoleError("nope")

        with pytest.raises(AllPointsFailed):
            sup_over_grid(boom, SpectralGrid(np.array([1.0, 2.0])))

    def test_pole_points_skipped_and_recorded(self):
        from parastep.rational import PoleError

        def partial(s):
            if s < 1.5:
                raise PoleError("skip")
            return s

        curve = sup_over_grid(partial, SpectralGrid(np.array([1.0, 2.0, 3.0])))
        assert curve.sup == 3.0
        assert curve.failed == (1.0,)

    def test_gamma_c_large_j_close_to_gamma_e(self):
        sup_c = sup_over_grid(lambda s: gamma_c(R_RIIA3, BDF2, 80, s), GRID).sup
        sup_e = sup_over_grid(lambda s: gamma_e(BDF2, s), GRID).sup
        assert abs(sup_c - sup_e) < 0.01


class TestJOrderStudy:
    def test_riia2_slope(self):
        gaps, slope = j_order_study(catalog("radau_iia_2").stability, O2CP, [10, 20, 40, 80])
        assert slope == pytest.approx(-3.0, abs=0.5)
        assert all(g > 0 for _, g in gaps)

    def test_gap_ratio_grows_with_order(self):
        # successive J-doubling should shrink the sup gap by >= 2^(q-0.5)
        for name, q in (("radau_iia_2", 3), ("radau_iia_3", 5)):
            gaps, _ = j_order_study(catalog(name).stability, O2CP, [20, 40, 80])
            for (_, g1), (_, g2) in zip(gaps, gaps[1:]):
                assert g1 / g2 >= 2 ** (q - 0.5)

    def test_needs_three_js(self):
        with pytest.raises(ValueError):
            j_order_study(R_RIIA3, O2CP, [10, 20])


class TestStabilityRegion:
    def test_locus_consistency_point_at_origin(self):
        locus = boundary_locus(O2CP, 64)
        assert abs(locus.mu[0]) <= 1e-12

    def test_bdf2_locus_stays_left(self):
        locus = boundary_locus(BDF2, 512)
        assert np.nanmax(locus.mu.real) <= 1e-10

    def test_o2cp_locus_stays_left(self):
        locus = boundary_locus(O2CP, 512)
        assert np.nanmax(locus.mu.real) <= 1e-10

    def test_a_stability_catalog(self):
        for ts in (O2CP, BDF2):
            report = a_stability_check(ts, 256)
            assert report.a_stable
            assert report.worst_f <= 1e-10

    def test_synthetic_scheme_not_a_stable(self):
        report = a_stability_check(SYNTHETIC_UNSTABLE, 256)
        assert not report.a_stable

    def test_locus_and_f_agree(self):
        # Re(mu) <= 0 everywhere iff f(theta) <= 0 everywhere
        for ts in (O2CP, BDF2):
            locus = boundary_locus(ts, 720)
            report = a_stability_check(ts, 720)
            assert (np.nanmax(locus.mu.real) <= 1e-10) == (report.worst_f <= 1e-10)


class TestScaleInvariance:
    def test_common_scaling_leaves_factors_unchanged(self):
        scaled = TwoStepScheme.from_coefficients(
            "scaled",
            tuple(3.7 * a for a in O2CP.alpha),
            tuple(3.7 * b for b in O2CP.beta),
        )
        for s in (0.1, 1.0, 17.0):
            assert gamma_e(scaled, s) == pytest.approx(gamma_e(O2CP, s), rel=1e-12)
            assert kappa_e(scaled, s, 50) == pytest.approx(kappa_e(O2CP, s, 50), rel=1e-12)
            for a, b in zip(rho_pair(scaled, s), rho_pair(O2CP, s)):
                assert a == pytest.approx(b, rel=1e-12)


class TestContourMap:
    def test_real_axis_slice_matches_curve(self):
        xs, ys, mat = contour_map("gamma_e", O2CP, (0.5, 4.0), (-1.0, 1.0), (8, 3))
        mid = np.argmin(np.abs(ys))
        assert ys[mid] == pytest.approx(0.0)
        for j, x in enumerate(xs):
            assert mat[mid, j] == pytest.approx(gamma_e(O2CP, float(x)), rel=1e-12)

    def test_imaginary_axis_exceeds_one(self):
        for ts in (BDF2, O2CP):
            xs, ys, mat = contour_map("gamma_e", ts, (-1.0, 1.0), (-6.0, 6.0), (21, 41))
            col = np.argmin(np.abs(xs))
            assert xs[col] == pytest.approx(0.0)
            column = mat[:, col]
            assert np.any(np.isinf(column) | (column > 1.0))

    def test_kappa_map_sharper_majority(self):
        box = ((0.2, 6.0), (-2.0, 2.0), (12, 9))
        _, _, g = contour_map("gamma_e", O2CP, *box)
        _, _, k = contour_map("kappa_e", O2CP, *box, N_c=1000)
        both = np.isfinite(g) & np.isfinite(k)
        assert (k[both] <= g[both] + 1e-12).mean() > 0.5
