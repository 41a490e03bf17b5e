from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lagsync.errors import InvalidExponents, NonPositiveExponent
from lagsync.numerics import (
    OddRational, as_odd_rational, norms, oracle_lemma1, oracle_lemma2, oracle_lemma3, sigpow,
)

odd = st.integers(0, 20).map(lambda k: 2 * k + 1)
odd_ratio = st.tuples(odd, odd).map(lambda t: OddRational(*t))


class TestOddRational:
    def test_parse_and_str(self):
        p = OddRational.parse("7/9")
        assert (p.num, p.den) == (7, 9)
        assert str(p) == "7/9"
        assert str(OddRational.parse("3")) == "3"

    def test_reduces(self):
        assert OddRational(21, 27) == OddRational(7, 9)

    @pytest.mark.parametrize("text", ["2/4", "1/2", "4", "x/3", "1/0", "3/-5"])
    def test_rejects_non_odd(self, text):
        with pytest.raises(InvalidExponents):
            OddRational.parse(text)

    def test_float_rejected(self):
        with pytest.raises(InvalidExponents):
            as_odd_rational(0.7777)

    def test_coercions(self):
        assert as_odd_rational(Fraction(3, 5)) == OddRational(3, 5)
        assert as_odd_rational(3) == OddRational(3, 1)
        assert float(OddRational(3, 5)) == 0.6


class TestSigpow:
    def test_cube_root(self):
        assert sigpow([-8.0], OddRational(1, 3))[0] == pytest.approx(-2.0, abs=1e-14)

    def test_three_fifths(self):
        assert sigpow([32.0], OddRational(3, 5))[0] == pytest.approx(8.0, rel=1e-14)

    @given(odd_ratio)
    def test_fixed_points(self, p):
        np.testing.assert_array_equal(sigpow([0.0, 1.0, -1.0], p), [0.0, 1.0, -1.0])

    @pytest.mark.parametrize("p", [0, -1, -0.5])
    def test_nonpositive(self, p):
        with pytest.raises(NonPositiveExponent):
            sigpow([1.0], p)

    @given(st.floats(-1e3, 1e3), odd_ratio)
    def test_odd(self, x, p):
        assert sigpow(-x, p) == -sigpow(x, p)

    @given(st.floats(-1e3, 1e3))
    def test_identity(self, x):
        assert sigpow(x, 1) == x

    @given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), odd_ratio)
    def test_monotone(self, x, y, p):
        if x < y:
            assert sigpow(x, p) <= sigpow(y, p)

    @given(st.floats(1e-3, 1e3), st.booleans(), odd_ratio)
    def test_round_trip(self, mag, neg, p):
        x = -mag if neg else mag
        inv = OddRational(p.den, p.num)
        assert float(sigpow(sigpow(x, p), inv)) == pytest.approx(x, rel=1e-10)

    def test_agrees_with_real_odd_root(self):
        x = np.linspace(-5, 5, 101)
        np.testing.assert_allclose(sigpow(x, OddRational(1, 3)), np.cbrt(x), rtol=1e-13, atol=1e-15)


class TestNorms:
    def test_values(self):
        n = norms([3.0, -4.0])
        assert (n.l1, n.l2) == (7.0, 5.0)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
    def test_order(self, xs):
        n = norms(xs)
        assert n.l1 >= n.l2 * (1 - 1e-12) >= 0


class TestOracles:
    def test_power_sum_single(self):
        for p in (0.3, 1.0, 2.5):
            assert oracle_lemma1([1.0], p) == pytest.approx((0.0, 0.0), abs=1e-15)

    def test_power_sum_hand(self):
        lo, hi = oracle_lemma1([1.0, 1.0], 0.5)
        assert lo == pytest.approx(2 - np.sqrt(2), abs=1e-14)
        assert hi == pytest.approx(0.0, abs=1e-14)

    def test_odd_power_equal(self):
        assert oracle_lemma2(1.0, 1.0, OddRational(1, 3)) == 0.0

    def test_odd_power_hand(self):
        assert oracle_lemma2(1.0, -1.0, OddRational(1, 3)) == pytest.approx(0.0, abs=1e-14)

    def test_odd_power_range(self):
        with pytest.raises(NonPositiveExponent):
            oracle_lemma2(1.0, 2.0, OddRational(3, 1))

    def test_young_trivial(self):
        assert oracle_lemma3(0.0, 0.0, 1.0, 2.0, 3.0) == 0.0
        assert oracle_lemma3(1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=300)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12), st.floats(0.05, 4.0))
    def test_power_sum_property(self, xs, p):
        lo, hi = oracle_lemma1(xs, p)
        scale = max(1.0, np.sum(np.abs(xs)) ** p * len(xs) ** abs(1 - p))
        assert lo >= -1e-12 * scale and hi >= -1e-12 * scale

    @settings(max_examples=300)
    @given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), odd_ratio)
    def test_odd_power_property(self, xi, xj, p):
        if float(p) > 1:
            p = OddRational(p.den, p.num)
        scale = max(1.0, abs(xi - xj) ** float(p))
        assert oracle_lemma2(xi, xj, p) >= -1e-12 * scale
