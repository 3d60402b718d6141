import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridbesov.errors import EnumerationGuard, ParameterError, SelectionInfeasible
from gridbesov.exact import sign
from gridbesov.exotic import (
    bilipschitz_diagnostic,
    build_exotic_function,
    exotic_norm_report,
    extremal_words,
    harmonic,
    jstar_profile,
    lp_power_by_n,
    lp_power_closed_form,
    minimal_harmonic_index,
    phi_conjugacy,
    select_exotic_families,
    zeta_upper,
)
from gridbesov.grid_core import NAdicGrid, WeightedBinaryGrid
from gridbesov.norms import BesovParams, haar_expand

F = Fraction
DEEP = 16384
P21 = BesovParams.make("1/5", 2, 1)
P12 = BesovParams.make("1/5", 1, 2)


def brute_r(n, q):
    """Smallest r with sum_{i<=r} 1/i > 2^(n q), by plain accumulation."""
    h, r = F(0), 0
    while h <= 2 ** (n * q):
        r += 1
        h += F(1, r)
    return r


@pytest.fixture(scope="module")
def grids():
    return WeightedBinaryGrid(F(1, 5), depth_limit=DEEP), NAdicGrid(2, depth_limit=DEEP)


@pytest.fixture(scope="module")
def sel2(grids):
    return select_exotic_families(*grids, P21, sep=4, n_max=2)


# harmonic thresholds -------------------------------------------------------------

@pytest.mark.parametrize("n,expected", [(1, 4), (2, 31)])
def test_minimal_harmonic_index(n, expected):
    assert minimal_harmonic_index(n, 1) == brute_r(n, 1) == expected


def test_harmonic_four():
    assert harmonic(4) == F(25, 12)


def test_harmonic_index_limit():
    with pytest.raises(SelectionInfeasible):
        minimal_harmonic_index(4, 1)


def test_zeta_upper_brackets_basel():
    z = zeta_upper(F(2), 1000)
    assert math.pi ** 2 / 6 < z < math.pi ** 2 / 6 + 1e-6


# j*0 profiles ----------------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 5, 9])
def test_identical_grids_have_zero_spread(dyadic, k):
    prof = jstar_profile(dyadic, NAdicGrid(2), k)
    assert prof.exhaustive and prof.spread == 0 and set(prof.values) == {k}


def test_extremal_values_at_level_ten(weighted, dyadic):
    prof = jstar_profile(weighted, dyadic, 10, extremal_words(10))
    left, right = prof.values
    # oracle: level of the largest dyadic cell fitting in [0, 5^-10] and [1 - (4/5)^10, 1]
    assert left == math.ceil(10 * math.log2(5))
    assert right == min(j for j in range(64) if F(1, 2 ** j) <= F(4, 5) ** 10)


@pytest.mark.parametrize("k", [5, 10, 15])
def test_spread_grows(weighted, dyadic, k):
    a = jstar_profile(weighted, dyadic, k, extremal_words(k)).spread
    b = jstar_profile(weighted, dyadic, 2 * k, extremal_words(2 * k)).spread
    assert b > a


def test_profile_guard(weighted, dyadic):
    with pytest.raises(EnumerationGuard):
        jstar_profile(weighted, dyadic, 21)


def test_diagnostic_dyadic_is_bounded(dyadic):
    d = bilipschitz_diagnostic(dyadic, NAdicGrid(2), 20)
    assert d["max_spread"] == 0 and d["verdict"].startswith("bounded")


def test_diagnostic_weighted_slope(weighted, dyadic):
    d = bilipschitz_diagnostic(weighted, dyadic, 20)
    assert abs(d["spread_slope"] - 2) <= 0.2
    assert d["verdict"].startswith("growing")


def test_diagnostic_two_weights(weighted):
    d = bilipschitz_diagnostic(WeightedBinaryGrid(F(2, 5)), weighted, 20)
    # 0^k has measure (2/5)^k against star cells 5^-j at the left end,
    # 1^k has measure (3/5)^k against star cells (4/5)^j at the right end
    expected = math.log(5 / 3) / math.log(5 / 4) - math.log(5 / 2) / math.log(5)
    assert abs(d["spread_slope"] - expected) <= 0.1 * expected
    assert d["verdict"].startswith("growing")


# phi conjugacy ----------------------------------------------------------------------

@given(st.lists(st.integers(0, 1), min_size=1, max_size=12))
def test_phi_maps_endpoints_to_dyadic_rationals(word):
    g = WeightedBinaryGrid(F(1, 5))
    c = g.cell(word)
    k = len(word)
    idx = int("".join(map(str, word)), 2)
    for t in (k, k + 3, k + 9):
        assert phi_conjugacy(g, c.a, t) == F(idx, 2 ** k)


@given(st.fractions(0, 1, max_denominator=1000), st.integers(1, 30))
def test_phi_is_cauchy(x, t):
    g = WeightedBinaryGrid(F(1, 5))
    assert abs(phi_conjugacy(g, x, t) - phi_conjugacy(g, x, t + 1)) <= F(1, 2 ** t)


# selection and functions ---------------------------------------------------------------

def test_selection_n2_verifies(sel2):
    checks = sel2.verify()
    assert checks["ok"] and checks["rows"] == 2 and checks["pairs"] == 4 + 31
    assert [r.r for r in sel2.rows] == [4, 31]


def test_selection_needs_distinct_grids(dyadic):
    with pytest.raises(SelectionInfeasible):
        select_exotic_families(NAdicGrid(2), NAdicGrid(2), P21, n_max=1)


def test_selection_needs_p_ne_q(grids):
    with pytest.raises(ParameterError):
        select_exotic_families(*grids, BesovParams.make("1/4", 2, 2), n_max=1)


def test_default_depth_guard_is_too_shallow():
    with pytest.raises(SelectionInfeasible, match="depth"):
        select_exotic_families(WeightedBinaryGrid(F(1, 5)), NAdicGrid(2), P21, n_max=3)


def test_n1_function_has_eight_pieces(grids):
    sel = select_exotic_families(*grids, P21, n_max=1)
    fn = build_exotic_function(sel, P21)
    assert len(fn.stepfun.pieces) == 8


def test_haar_round_trip(sel2):
    fn = build_exotic_function(sel2, P21)
    h = haar_expand(fn.stepfun, fn.grid)
    assert h.coeffs == fn.stored_coeffs() and h.mean == 0


def test_lp_power_two_ways(sel2):
    fn = build_exotic_function(sel2, P21)
    assert lp_power_by_n(fn, P21) == lp_power_closed_form(fn, P21)


def test_report_n2(sel2):
    fn = build_exotic_function(sel2, P21)
    r = exotic_norm_report(fn, sel2, P21, transfer_nmax=1, transfer_extra=6)
    assert r["haar_roundtrip_exact"] and r["closed_form_exact_equal"]
    assert r["closed_form_difference"] == "0/1"
    assert r["increments_exceed_one"]
    assert r["circle_bound"]["within_limit"] and r["circle_bound"]["coefficient_norm_within_bound"]
    # closed form oracle: sum_m 2^-m H(r_m)
    expected = F(1, 2) * harmonic(4) + F(1, 4) * harmonic(31)
    assert sign(F(r["closed_form_q_power"]) - expected) == 0


def test_q_greater_than_p_mode(grids):
    sel = select_exotic_families(*grids, P12, sep=4, n_max=2)
    assert sel.mode == "q_gt_p" and sel.verify()["ok"]
    fn = build_exotic_function(sel, P12)
    assert fn.grid is grids[0]
    assert haar_expand(fn.stepfun, fn.grid).coeffs == fn.stored_coeffs()
    r = exotic_norm_report(fn, sel, P12, transfer_nmax=1, transfer_extra=6)
    assert r["increments_meet_lower_bound"]
    assert r["closed_form_exact_equal"] or r.get("closed_form_numeric_agree")
