from fractions import Fraction

import mpmath
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from gridbesov.errors import NotExact
from gridbesov.exact import (
    Surd,
    exact_pow,
    factorize,
    format_exact,
    format_rational,
    is_exact,
    parse_rational,
    power_any,
    sign,
    sum_any,
    to_mpf,
)

positive = st.fractions(min_value=Fraction(1, 1000), max_value=1000, max_denominator=1000).filter(lambda x: x > 0)
small_exp = st.fractions(min_value=-3, max_value=3, max_denominator=12)


def test_square_root_of_two_squares_to_two():
    r2 = exact_pow(Fraction(2), Fraction(1, 2))
    assert isinstance(r2, Surd)
    assert r2 * r2 == 2


def test_quarter_to_minus_quarter_is_root_two():
    assert exact_pow(Fraction(1, 4), Fraction(-1, 4)) == exact_pow(Fraction(2), Fraction(1, 2))


def test_perfect_square_simplifies_to_rational():
    v = exact_pow(Fraction(36, 49), Fraction(1, 2))
    assert v == Fraction(6, 7)
    assert isinstance(v, Fraction)


def test_distinct_radicals_never_cancel():
    r2 = exact_pow(Fraction(2), Fraction(1, 2))
    r3 = exact_pow(Fraction(3), Fraction(1, 2))
    assert r2 + r3 != exact_pow(Fraction(5), Fraction(1, 2))
    assert (r2 + r3) - r3 == r2


def test_sign_resolves_close_values():
    r2 = exact_pow(Fraction(2), Fraction(1, 2))
    assert sign(r2 - Fraction(99, 70)) < 0
    assert sign(r2 - Fraction(140, 99)) > 0
    assert sign(r2 - r2) == 0


def test_division_by_sum_is_not_exact():
    r2 = exact_pow(Fraction(2), Fraction(1, 2))
    with pytest.raises(NotExact):
        Fraction(1) / (r2 + 1)


def test_power_any_falls_back_to_numeric_for_sums():
    r2 = exact_pow(Fraction(2), Fraction(1, 2))
    v = power_any(r2 + 1, Fraction(1, 3))
    assert not is_exact(v)
    with mpmath.workdps(60):
        assert abs(v - mpmath.cbrt(mpmath.sqrt(2) + 1)) < mpmath.mpf(10) ** -50


def test_sum_any_stays_exact_until_numeric():
    r2 = exact_pow(Fraction(2), Fraction(1, 2))
    assert sum_any([r2, r2, Fraction(1)]) == 2 * r2 + 1
    assert not is_exact(sum_any([r2, mpmath.mpf("0.5")]))


@pytest.mark.parametrize("n", [1, 2, 12, 97, 2 ** 61 - 1, 3 ** 40 * 7, 10 ** 30 + 57, 600851475143])
def test_factorize_matches_sympy(n):
    assert dict(factorize(n)) == sympy.factorint(n)


def test_format_rational_always_has_denominator():
    assert format_rational(Fraction(3)) == "3/1"
    assert format_rational(Fraction(-6, 4)) == "-3/2"
    assert parse_rational("-3/2") == Fraction(-3, 2)
    assert parse_rational("0.25") == Fraction(1, 4)


def test_format_exact_radical():
    assert format_exact(exact_pow(Fraction(8), Fraction(1, 2))) == "2/1*2^(1/2)"


@given(positive)
def test_square_root_of_square_is_identity(x):
    assert power_any(x * x, Fraction(1, 2)) == x


@given(positive, positive, small_exp)
def test_power_is_multiplicative(a, b, e):
    assert power_any(a * b, e) == power_any(a, e) * power_any(b, e)


@given(positive, small_exp, small_exp)
def test_exponents_add(a, e1, e2):
    assert power_any(a, e1) * power_any(a, e2) == power_any(a, e1 + e2)


@given(positive, small_exp)
def test_numeric_value_agrees(a, e):
    v = power_any(a, e)
    with mpmath.workdps(60):
        ref = mpmath.power(mpmath.mpf(a.numerator) / a.denominator, mpmath.mpf(e.numerator) / e.denominator)
        assert abs(to_mpf(v) - ref) <= abs(ref) * mpmath.mpf(10) ** -45
