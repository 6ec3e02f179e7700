import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parastep.propagators import catalog
from parastep.rational import (
    PoleError,
    Polynomial,
    RationalFunction,
    eval_complex,
    eval_real,
    quadratic_roots,
)


class TestPolynomial:
    def test_degree_trims_trailing_zeros(self):
        p = Polynomial([1.0, 2.0, 0.0, 0.0])
        assert p.degree() == 1
        assert p.coeffs == (1.0, 2.0)

    def test_zero_polynomial(self):
        assert Polynomial([0.0, 0.0]).is_zero()

    def test_horner_matches_numpy(self):
        p = Polynomial([3.0, -1.0, 0.5, 2.0])
        for s in (-2.0, 0.0, 0.7, 10.0):
            assert p(s) == pytest.approx(np.polyval([2.0, 0.5, -1.0, 3.0], s), rel=1e-14)

    def test_arithmetic(self):
        a = Polynomial([1.0, 1.0])
        b = Polynomial([0.0, 2.0, 3.0])
        assert (a + b).coeffs == (1.0, 3.0, 3.0)
        assert (a * b).coeffs == (0.0, 2.0, 5.0, 3.0)
        assert b.shift_down().coeffs == (2.0, 3.0)

    def test_shift_down_requires_zero_constant(self):
        with pytest.raises(ValueError):
            Polynomial([1.0, 2.0]).shift_down()


class TestRationalFunction:
    def test_normalizes_den_at_zero(self):
        rf = RationalFunction([2.0, 1.0], [2.0, 4.0])
        assert rf.den.coeffs[0] == 1.0
        assert eval_real(rf, 0.0) == pytest.approx(1.0)

    def test_rejects_zero_denominator(self):
        with pytest.raises(ValueError):
            RationalFunction([1.0], [0.0])
        with pytest.raises(ValueError):
            RationalFunction([1.0], [0.0, 1.0])

    def test_eval_real_bdf2_r2_at_zero(self):
        # R2 of BDF2 is (4/3)/(1 + 2s/3)
        bdf2 = catalog("bdf2")
        assert eval_real(bdf2.R2, 0.0) == pytest.approx(4.0 / 3.0, rel=1e-14)

    def test_eval_real_radau3_consistency_and_value(self):
        r = catalog("radau_iia_3").stability
        assert eval_real(r, 0.0) == pytest.approx(1.0, rel=1e-14)
        # direct evaluation oracle: (1 - 0.4 + 0.05) / (1 + 0.6 + 0.15 + 1/60)
        expected = (1 - 0.4 + 0.05) / (1 + 0.6 + 0.15 + 1.0 / 60.0)
        assert eval_real(r, 1.0) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.3679245, abs=1e-7)

    def test_pole_raises(self):
        rf = RationalFunction([1.0], [1.0, 1.0])  # 1/(1+s)
        with pytest.raises(PoleError):
            eval_real(rf, -1.0)

    def test_eval_complex_agrees_with_real_axis(self):
        bdf2 = catalog("bdf2")
        for s in np.linspace(0.1, 30.0, 17):
            zr = eval_complex(bdf2.R2, complex(s, 0.0))
            assert zr.imag == 0.0
            assert zr.real == pytest.approx(eval_real(bdf2.R2, s), rel=1e-14)

    def test_eval_complex_identity(self):
        one = RationalFunction([1.0], [1.0])
        assert eval_complex(one, 1j) == 1.0 + 0.0j

    def test_eval_complex_o2cp_r1_inside_unit_disk(self):
        o2cp = catalog("o2cp")
        assert abs(eval_complex(o2cp.R1, 2j)) < 1.0


class TestQuadraticRoots:
    def test_bdf2_at_zero(self):
        r1, r2 = quadratic_roots(4.0 / 3.0, -1.0 / 3.0)
        assert r1 == pytest.approx(1.0, abs=1e-14)
        assert r2 == pytest.approx(1.0 / 3.0, abs=1e-14)

    def test_o2cp_at_zero(self):
        r1, r2 = quadratic_roots(0.97822, 0.02178)
        assert r1 == pytest.approx(1.0, abs=1e-12)
        assert r2 == pytest.approx(-0.02178, abs=1e-12)

    def test_double_root_origin(self):
        assert quadratic_roots(0.0, 0.0) == (0.0, 0.0)

    def test_ordering_is_deterministic(self):
        pair1 = quadratic_roots(0.3, -0.8)
        pair2 = quadratic_roots(0.3, -0.8)
        assert pair1 == pair2
        assert abs(pair1[0]) >= abs(pair1[1])

    def test_conjugate_pair_tiebreak_prefers_positive_imag(self):
        # z^2 + 1 = 0 -> +/- i, equal modulus and real part
        r1, r2 = quadratic_roots(0.0, -1.0)
        assert r1 == pytest.approx(1j)
        assert r2 == pytest.approx(-1j)

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(-50, 50, allow_nan=False),
        st.floats(-50, 50, allow_nan=False),
    )
    def test_roots_satisfy_equation(self, b, c):
        for z in quadratic_roots(b, c):
            assert abs(z * z - b * z - c) <= 1e-10 * (1.0 + abs(b) + abs(c))

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(-10, 10, allow_nan=False),
        st.floats(-10, 10, allow_nan=False),
        st.floats(-10, 10, allow_nan=False),
        st.floats(-10, 10, allow_nan=False),
    )
    def test_complex_coefficients(self, br, bi, cr, ci):
        b = complex(br, bi)
        c = complex(cr, ci)
        z1, z2 = quadratic_roots(b, c)
        for z in (z1, z2):
            assert abs(z * z - b * z - c) <= 1e-10 * (1.0 + abs(b) + abs(c))
        assert abs(z1) >= abs(z2)

    def test_consistent_scheme_has_root_one_at_origin(self):
        for name in ("bdf2", "o2cp"):
            ts = catalog(name)
            r1, r2 = quadratic_roots(ts.R2(0.0), ts.R1(0.0))
            assert min(abs(r1 - 1.0), abs(r2 - 1.0)) <= 1e-12
