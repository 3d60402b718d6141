"""The ten acceptance criteria, each timed and logged as one pass/fail line."""

import contextlib
import math
import random
import time
from fractions import Fraction

import mpmath
import pytest

from gridbesov.decompose import (
    AhlforsSetSpec,
    IntervalQuery,
    cantor_complement_decomposition,
    fitted_ratio,
    indicator_decomposition,
)
from gridbesov.exact import power_any, sign, sum_any, to_mpf
from gridbesov.exotic import (
    bilipschitz_diagnostic,
    build_exotic_function,
    exotic_norm_report,
    harmonic,
    minimal_harmonic_index,
    select_exotic_families,
)
from gridbesov.grid_core import (
    MeasuredNode,
    NAdicGrid,
    WeightedBinaryGrid,
    build_nadic,
    build_weighted_binary,
    canonicalize_to_interval_grid,
    regroup_bins,
    regroup_by_measure,
    validate_good_grid,
)
from gridbesov.norms import (
    AtomicRep,
    BesovParams,
    greedy_atomic_decomposition,
    haar_expand,
    martingale_norm,
    norm_report,
    oscillation_norm,
    rep_norm,
    rep_to_function,
)
from gridbesov.stepfun import conditional_expectation, lp_power, martingale_difference, seeded_corpus

F = Fraction


@contextlib.contextmanager
def criterion(log, number, title, limit):
    """Time the body, record one line, then fail on error or on the time limit."""
    start = time.perf_counter()
    error = None
    try:
        yield
    except AssertionError as exc:
        error = exc
    elapsed = time.perf_counter() - start
    ok = error is None and elapsed < limit
    note = ""
    if error is not None:
        note = f" ({(str(error) or 'assertion failed').splitlines()[0][:80]})"
    log.append(f"{number:>2}. {'PASS' if ok else 'FAIL'}  {title}  {elapsed:.2f}s / {limit}s{note}")
    if error is not None:
        raise error
    assert elapsed < limit, f"took {elapsed:.2f}s, limit {limit}s"


@pytest.fixture(scope="module")
def corpus100():
    return seeded_corpus(NAdicGrid(2), count=100, depth=8)


def test_01_grid_validity(acceptance_log):
    with criterion(acceptance_log, 1, "grid validity: dyadic and weighted 1/5 at depth 12", 10):
        for build, expected in ((lambda: build_nadic(2, 12), (F(1, 2), F(1, 2))),
                                (lambda: build_weighted_binary(F(1, 5), 12), (F(1, 5), F(4, 5)))):
            t = time.perf_counter()
            meta = validate_good_grid(build(), 12)
            assert time.perf_counter() - t < 5, "a single validation exceeded 5 s"
            assert (meta.lambda_hat, meta.lam) == expected


def test_02_exact_algebra(acceptance_log, corpus100):
    with criterion(acceptance_log, 2, "tower, telescoping, mean zero, Parseval on 100 functions", 10):
        for f in corpus100:
            conds = [conditional_expectation(f, k) for k in range(9)]
            for j in range(9):
                for k in range(j, 9):
                    assert conditional_expectation(conds[k], j) == conds[j]
            total = conds[0]
            for k in range(1, 9):
                d = martingale_difference(f, k)
                assert d == conds[k] - conds[k - 1]
                for cell in f.grid.level_cells(k - 1):
                    assert d.integral(cell) == 0
                total = total + d
            assert total == f
            h = haar_expand(f)
            assert sum((c * c for c in h.coeffs.values()), F(0)) + h.mean ** 2 == lp_power(f, 2)


def test_03_round_trip(acceptance_log, corpus100):
    params = BesovParams.make("1/4", 2, 2)
    with criterion(acceptance_log, 3, "greedy representation round trip on 100 functions", 10):
        for f in corpus100:
            assert rep_to_function(greedy_atomic_decomposition(f, params), params) == f


def random_tree(rng, depth, label=(), measure=F(1)):
    if depth == 0:
        return MeasuredNode(label, measure)
    k = rng.choice((2, 3))
    cuts = sorted(rng.sample(range(1, 12), k - 1))
    weights = [F(b - a, 12) for a, b in zip([0] + cuts, cuts + [12])]
    return MeasuredNode(label, measure, [random_tree(rng, depth - 1, label + (i,), measure * w)
                                         for i, w in enumerate(weights)])


def tree_norm(tree, coeffs, params):
    """Norm of a label-keyed representation read level by level off the abstract tree."""
    levels, frontier = [], [tree]
    while frontier:
        levels.append([coeffs[n.label] for n in frontier if n.label in coeffs])
        frontier = [c for n in frontier for c in n.children]
    inner = [sum_any(power_any(abs(c), params.p) for c in lv) for lv in levels if lv]
    return power_any(sum_any(power_any(x, params.q / params.p) for x in inner), 1 / params.q)


def test_04_isometry(acceptance_log):
    rng = random.Random(20240611)
    params = BesovParams.make("1/4", 2, 1)
    with criterion(acceptance_log, 4, "rep norm invariant under canonicalization, 20 trees", 5):
        for _ in range(20):
            tree = random_tree(rng, 3)
            labels = []
            stack = [tree]
            while stack:
                n = stack.pop()
                labels.append(n.label)
                stack.extend(n.children)
            coeffs = {lab: F(rng.randint(-9, 9), rng.randint(1, 9)) for lab in rng.sample(labels, 6)}
            grid = canonicalize_to_interval_grid(tree)
            rep = AtomicRep(grid, {grid.labels[lab]: v for lab, v in coeffs.items()})
            assert rep_norm(rep, params).exact == tree_norm(tree, coeffs, params)


def test_05_regrouping(acceptance_log):
    with criterion(acceptance_log, 5, "regrouped weighted 1/5 grid: l_k/m_k <= 5", 5):
        g = build_weighted_binary(F(1, 5), 12)
        r = regroup_by_measure(g, 12)
        meta = validate_good_grid(r, r.depth_limit)
        assert all(hi / lo <= 5 for hi, lo in meta.level_stats)
        for b in regroup_bins(g, 12, 1):
            assert max(c.measure for c in b) / min(c.measure for c in b) <= 5


def test_06_cantor(acceptance_log):
    with criterion(acceptance_log, 6, "Cantor complement sums equal 1/2, self-similar", 5):
        root = cantor_complement_decomposition(NAdicGrid(3), AhlforsSetSpec(), (), 12)
        assert all(root.level_sums[k] == F(1, 2) for k in range(1, 13))
        left = cantor_complement_decomposition(NAdicGrid(3), AhlforsSetSpec(), (0,), 13)
        assert all(left.level_sums[k + 1] == root.level_sums[k] * left.q_power for k in range(1, 13))


def test_07_indicator_decay(acceptance_log):
    params = BesovParams.make("1/4", 2, 2)
    with criterion(acceptance_log, 7, "indicator of [1/3, 3/4]: fitted decay <= 0.75", 5):
        d = indicator_decomposition(NAdicGrid(2), IntervalQuery.make("1/3", "3/4"), params, 24)
        k0 = d.ladder.k0
        ratio = fitted_ratio(d.level_sums, k0, k0 + 16)
        assert ratio is not None and ratio <= 0.75, f"fitted ratio {ratio}"


def test_08_exotic(acceptance_log):
    params = BesovParams.make("1/5", 2, 1)
    with criterion(acceptance_log, 8, "p > q counterexample: closed form, increments, bound, r_n", 60):
        circle = WeightedBinaryGrid(F(1, 5), depth_limit=16384)
        star = NAdicGrid(2, depth_limit=16384)
        sel = select_exotic_families(circle, star, params, sep=4, n_max=3)
        assert sel.verify()["ok"]
        fn = build_exotic_function(sel, params)
        rep = exotic_norm_report(fn, sel, params)
        # (a) generic Haar norm against the closed form, zero rational error
        closed = sum((F(1, 2 ** row.n) * harmonic(row.r) for row in sel.rows), F(0))
        assert rep["closed_form_exact_equal"] and rep["closed_form_difference"] == "0/1"
        assert sign(F(rep["closed_form_q_power"]) - closed) == 0
        # (b) each increment exceeds 1
        assert all(F(1, 2 ** row.n) * harmonic(row.r) > 1 for row in sel.rows)
        assert rep["increments_exceed_one"]
        # (c) circle-side bound
        assert rep["circle_bound"]["within_limit"]
        # (d) r_1, r_2 against direct accumulation
        for n, expected in ((1, 4), (2, 31)):
            h, r = F(0), 0
            while h <= 2 ** n:
                r += 1
                h += F(1, r)
            assert r == expected == minimal_harmonic_index(n, 1) == sel.rows[n - 1].r


def test_09_dichotomy(acceptance_log):
    with criterion(acceptance_log, 9, "spread 0 for dyadic pair, slope 2 for weighted 1/5", 10):
        same = bilipschitz_diagnostic(NAdicGrid(2), NAdicGrid(2), 20)
        assert all(row["spread"] == 0 for row in same["levels"])
        d = bilipschitz_diagnostic(WeightedBinaryGrid(F(1, 5)), NAdicGrid(2), 20)
        target = math.log2(5) - math.log2(5 / 4)
        assert abs(d["spread_slope"] - target) <= 0.1 * target, f"slope {d['spread_slope']}"


PINNED = {
    # one level-0 convention for every method
    "uniform": {"martingale/rep": ("1", "1"), "martingale/osc": ("0.6737967165", "1.0522830807")},
    # library defaults: oscillation norm without the level-0 term
    "defaults": {"martingale/osc": ("0.6740118950", "1.2465949869")},
}


def test_10_cross_validation(acceptance_log, corpus100):
    params = BesovParams.make("1/4", 2, 2)
    with criterion(acceptance_log, 10, "norm ratios on the corpus inside the pinned intervals", 30):
        ratios = {"martingale/rep": [], "martingale/osc": [], "defaults/osc": []}
        with mpmath.workdps(60):
            for f in corpus100:
                r = norm_report(f, params, ("rep", "martingale", "osc"))
                m = r["martingale"].value
                ratios["martingale/rep"].append(m / r["rep"].value)
                ratios["martingale/osc"].append(m / r["osc"].value)
                ratios["defaults/osc"].append(martingale_norm(f, params).value / oscillation_norm(f, params).value)
        for key, vals in ratios.items():
            assert all(0 < to_mpf(v) < mpmath.inf for v in vals)
            lo, hi = PINNED["defaults"]["martingale/osc"] if key == "defaults/osc" else PINNED["uniform"][key]
            assert abs(min(vals) - mpmath.mpf(lo)) < 1e-9, f"{key} low end {mpmath.nstr(min(vals), 12)}"
            assert abs(max(vals) - mpmath.mpf(hi)) < 1e-9, f"{key} high end {mpmath.nstr(max(vals), 12)}"
