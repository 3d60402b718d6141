import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gridbesov.decompose import (
    AhlforsSetSpec,
    IntervalQuery,
    atom_transfer,
    cantor_complement_decomposition,
    hull_families,
    indicator_decomposition,
    interval_partition_families,
    k0_of_interval,
    lambda_bounds,
    transfer_constant,
)
from gridbesov.errors import GridError, ParameterError
from gridbesov.exact import power_any
from gridbesov.grid_core import NAdicGrid, WeightedBinaryGrid
from gridbesov.norms import BesovParams, rep_to_function, souza_atom

F = Fraction
P = BesovParams.make("1/4", 2, 2)

intervals = st.tuples(st.fractions(0, 1, max_denominator=97), st.fractions(0, 1, max_denominator=97)) \
    .map(sorted).filter(lambda t: t[1] - t[0] > F(1, 200)).map(lambda t: IntervalQuery(*t))


def disjoint(cells):
    cells = sorted(cells, key=lambda c: c.a)
    return all(x.b <= y.a for x, y in zip(cells, cells[1:]))


def binary_digits(x, n):
    out = []
    for _ in range(n):
        x *= 2
        out.append(int(x >= 1))
        x -= int(x >= 1)
    return out


# k0 ----------------------------------------------------------------------------

def test_k0_examples(dyadic, weighted):
    assert k0_of_interval(dyadic, IntervalQuery.make(0, "1/2"))[0] == 1
    lvl, w = k0_of_interval(dyadic, IntervalQuery.make("1/3", "2/3"))
    assert lvl == 3 and F(1, 3) <= w.a and w.b <= F(2, 3)
    lvl, w = k0_of_interval(weighted, IntervalQuery.make(0, "1/5"))
    assert lvl == 1 and (w.a, w.b) == (0, F(1, 5))


@pytest.mark.parametrize("text", ["1/2,1/2", "2/3,1/3", "0,3/2"])
def test_interval_rejected(text):
    with pytest.raises(ParameterError):
        IntervalQuery.parse(text)


# hull families -------------------------------------------------------------------

def test_hull_of_unit_interval(dyadic):
    f1, f2 = hull_families(dyadic, IntervalQuery.make(0, 1))
    assert [c.address for c in f1.cells()] == [c.address for c in f2.cells()] == [dyadic.root().address]


def test_hull_third_to_three_quarters(dyadic):
    q = IntervalQuery.make("1/3", "3/4")
    f1, f2 = hull_families(dyadic, q)
    k0 = f1.k0
    # oracle: enumerate the whole level k0
    level = dyadic.level_cells(k0)
    assert [c.address for c in f1.cells()] == [c.address for c in level if q.a <= c.a and c.b <= q.b]
    assert [c.address for c in f2.cells()] == [c.address for c in level if c.a < q.b and q.a < c.b]
    assert f2.cells()[0].a <= q.a and q.b <= f2.cells()[-1].b


@given(intervals)
def test_hull_cardinality_weighted(q):
    g = WeightedBinaryGrid(F(1, 5))
    f1, f2 = hull_families(g, q)
    assert 1 <= len(f1.cells()) <= len(f2.cells()) <= 12
    assert f2.cells()[0].a <= q.a and q.b <= f2.cells()[-1].b
    assert all(q.a <= c.a and c.b <= q.b for c in f1.cells())


# interval partition ladders --------------------------------------------------------

def test_ladder_of_a_cell(dyadic):
    c = dyadic.cell((1, 0, 1))
    lad = interval_partition_families(dyadic, IntervalQuery(c.a, c.b))
    assert [x.address for x in lad.cells()] == [c.address] and lad.residual == 0


def test_ladder_third_to_one_follows_binary_expansion(dyadic):
    t = 12
    lad = interval_partition_families(dyadic, IntervalQuery.make("1/3", 1), max_steps=t)
    assert all(i <= 0 for i in lad.families)
    # oracle: the left ladder adds one cell for each 0 digit of 1/3 = 0.0101...
    digits = binary_digits(F(1, 3), 40)
    zero_levels = [k + 1 for k, d in enumerate(digits) if d == 0]
    assert [lad.levels[-i] for i in range(1, t + 1)] == zero_levels[1:t + 1]
    assert all(len(lad.families[-i]) == 1 for i in range(1, t + 1))
    assert lad.residual <= F(1, 2) ** t * F(2, 3)


@given(intervals)
def test_ladder_properties_weighted(q):
    g = WeightedBinaryGrid(F(1, 5))
    lad = interval_partition_families(g, q, max_steps=12)
    cells = lad.cells()
    assert disjoint(cells)
    assert lad.covered + lad.residual == q.measure
    assert all(1 <= len(v) <= 10 for v in lad.families.values())
    assert lad.j_plus == sorted(set(lad.j_plus)) and lad.j_minus == sorted(set(lad.j_minus))


# indicator decompositions ---------------------------------------------------------

def test_indicator_of_one_cell(dyadic):
    c = dyadic.cell((0, 1))
    d = indicator_decomposition(dyadic, c, P, 10)
    assert d.rep.coeffs == {c.address: power_any(c.measure, F(1, 4))}


def test_indicator_zero_measure(dyadic):
    with pytest.raises(ParameterError):
        indicator_decomposition(dyadic, [(F(1, 3), F(1, 3))], P, 5)


def test_indicator_third_to_one_two_cells_per_level(dyadic):
    d = indicator_decomposition(dyadic, IntervalQuery.make("1/3", 1), P, 24)
    assert all(len(v) <= 2 for v in d.ladder.families.values())
    # oracle: one cell per 0 digit of 1/3 plus the right half
    digits = binary_digits(F(1, 3), 24)
    expected = {1: 1} | {k + 1: 1 for k, x in enumerate(digits) if x == 0 and k > 0}
    assert {k: len(v) for k, v in d.ladder.families.items()} == expected


@pytest.mark.parametrize("grid", [NAdicGrid(2), WeightedBinaryGrid(F(1, 5))], ids=["dyadic", "weighted"])
@given(q=intervals)
def test_maximal_family_properties(grid, q):
    d = indicator_decomposition(grid, q, P, 14)
    cells = d.ladder.cells()
    assert disjoint(cells)
    assert d.ladder.covered + d.residual == q.measure
    for c in cells:
        assert q.a <= c.a and c.b <= q.b
        if c.level:
            parent = grid.cell(c.address.parent())
            assert not (q.a <= parent.a and parent.b <= q.b)
    f = rep_to_function(d.rep, P)
    assert all(f.value_at((c.a + c.b) / 2) == 1 for c in cells)


def test_indicator_decay_rate(dyadic):
    d = indicator_decomposition(dyadic, IntervalQuery.make("1/3", "3/4"), P, 24)
    assert abs(d.fitted_ratio - 2 ** -0.5) < 0.02
    assert d.fitted_ratio < 1


# Cantor complement -----------------------------------------------------------------

def test_cantor_first_levels(triadic):
    r = cantor_complement_decomposition(triadic, AhlforsSetSpec(), (), 6)
    fams = r.ladder.families
    assert [(c.a, c.b) for c in fams[1]] == [(F(1, 3), F(2, 3))]
    assert [(c.a, c.b) for c in fams[2]] == [(F(1, 9), F(2, 9)), (F(7, 9), F(8, 9))]
    assert all(r.counts[k] == 2 ** (k - 1) for k in range(1, 7))


def test_cantor_level_sums_are_half(triadic):
    r = cantor_complement_decomposition(triadic, AhlforsSetSpec(), (), 12)
    assert all(r.level_sums[k] == F(1, 2) for k in range(1, 13))
    # the identity 3^alpha = 2 behind the exact sums
    assert math.isclose(3 ** AhlforsSetSpec().alpha, 2)


def test_cantor_self_similarity(triadic):
    root = cantor_complement_decomposition(triadic, AhlforsSetSpec(), (), 10)
    left = cantor_complement_decomposition(triadic, AhlforsSetSpec(), (0,), 11)
    assert left.q_power == F(1, 2)
    for k in range(1, 11):
        assert left.level_sums[k + 1] == root.level_sums[k] * left.q_power
        assert left.ratios[k + 1] == root.ratios[k]


def test_cantor_needs_triadic(dyadic):
    with pytest.raises(GridError):
        cantor_complement_decomposition(dyadic, AhlforsSetSpec(), (), 3)


# atom transfer ----------------------------------------------------------------------

def test_transfer_identity(dyadic):
    t = atom_transfer(dyadic, NAdicGrid(2), (0, 1), P, 8)
    assert t.rep.coeffs == {dyadic.cell((0, 1)).address: 1} and t.residual == 0


def test_transfer_dyadic_to_triadic(triadic, dyadic):
    t = atom_transfer(dyadic, triadic, (0,), P, 10)
    # 1/2 = 0.111..._3: one maximal cell per level, the first is [0, 1/3]
    assert all(len(v) == 1 for v in t.ladder.families.values())
    first = t.ladder.families[1][0]
    assert (first.a, first.b) == (0, F(1, 3))
    assert t.rep.coeffs[first.address] == power_any(F(2, 3), F(1, 4))
    f = rep_to_function(t.rep, P)
    a_q = souza_atom(dyadic.cell((0,)), P, dyadic).pieces[dyadic.cell((0,)).address]
    assert all(f.value_at((c.a + c.b) / 2) == a_q for c in t.ladder.cells())


def test_transfer_constant_is_stable(dyadic, triadic):
    c8, _ = transfer_constant(dyadic, triadic, P, 8, 8)
    c10, _ = transfer_constant(dyadic, triadic, P, 8, 10)
    assert 0 < c8 <= c10 < math.inf
    assert c10 - c8 < 0.01 * c8


@pytest.mark.parametrize("src,dst", [(NAdicGrid(2), NAdicGrid(3)), (WeightedBinaryGrid(F(1, 5)), NAdicGrid(2))],
                         ids=["dyadic-triadic", "weighted-dyadic"])
@pytest.mark.parametrize("word", [(0, 1), (1,), (1, 0, 1)])
def test_transfer_round_trip_residual(src, dst, word):
    depth = 10
    lam_src, lam_dst = lambda_bounds(src)[1], lambda_bounds(dst)[1]
    there = atom_transfer(src, dst, word, P, depth)
    lost = there.residual
    for a in there.rep.coeffs:
        c = dst.cell(a)
        back = atom_transfer(dst, src, c, P, src.k0(c.a, c.b)[0] + depth)
        lost += back.residual
    assert lost <= lam_dst ** depth + lam_src ** depth
