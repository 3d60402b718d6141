"""Constructive decompositions: k0, hull and ladder families, maximal-cell
decompositions of indicators and atoms, and the Cantor-complement example."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import GridError, ParameterError
from .exact import format_exact, format_rational, parse_rational, power_any, sum_any, to_mpf
from .grid_core import CellAddress, Grid, GridCell, NAdicGrid, WeightedBinaryGrid, as_address
from .norms import AtomicRep, BesovParams, rep_norm


@dataclass(frozen=True)
class IntervalQuery:
    a: Fraction
    b: Fraction

    def __post_init__(self):
        if not 0 <= self.a < self.b <= 1:
            raise ParameterError(f"need 0 <= a < b <= 1, got [{self.a}, {self.b}]")

    @classmethod
    def make(cls, a, b) -> "IntervalQuery":
        return cls(parse_rational(a), parse_rational(b))

    @classmethod
    def parse(cls, text: str) -> "IntervalQuery":
        parts = text.split(",")
        if len(parts) != 2:
            raise ParameterError(f"interval must look like a,b: {text!r}")
        return cls.make(*parts)

    @property
    def measure(self) -> Fraction:
        return self.b - self.a


@dataclass
class FamilyLadder:
    k0: int
    families: dict[int, list[GridCell]]
    levels: dict[int, int] = field(default_factory=dict)  # family index -> grid level
    j_plus: list[int] = field(default_factory=list)
    j_minus: list[int] = field(default_factory=list)
    target_measure: Fraction = Fraction(0)
    residual: Fraction = Fraction(0)

    def cells(self) -> list[GridCell]:
        return [c for k in sorted(self.families) for c in self.families[k]]

    @property
    def covered(self) -> Fraction:
        return sum((c.measure for c in self.cells()), Fraction(0))

    def to_json(self) -> dict:
        return {
            "k0": self.k0,
            "families": [{"index": k, "level": self.levels.get(k),
                          "cells": [list(c.address.word) for c in self.families[k]]}
                         for k in sorted(self.families)],
            "j_plus": self.j_plus,
            "j_minus": self.j_minus,
            "target_measure": format_rational(self.target_measure),
            "residual": format_rational(self.residual),
        }


def lambda_bounds(grid: Grid, depth: int = 8) -> tuple[Fraction, Fraction]:
    if isinstance(grid, NAdicGrid):
        return Fraction(1, grid.N), Fraction(1, grid.N)
    if isinstance(grid, WeightedBinaryGrid):
        return min(grid.a, 1 - grid.a), max(grid.a, 1 - grid.a)
    from .grid_core import validate_good_grid

    meta = validate_good_grid(grid, min(depth, grid.depth_limit))
    return meta.lambda_hat, meta.lam


# k0 and hull families ---------------------------------------------------------

def k0_of_interval(grid: Grid, Q: IntervalQuery, start: GridCell | None = None) -> tuple[int, GridCell]:
    """Minimal level with a cell whose closure lies in [a, b]; leftmost witness."""
    return grid.k0(Q.a, Q.b, start)


def hull_families(grid: Grid, Q: IntervalQuery, lambda_hat: Fraction | None = None
                  ) -> tuple[FamilyLadder, FamilyLadder]:
    """F1: level-k0 cells inside Q; F2: F1 plus the flanking level-k0 cells."""
    k0, _ = grid.k0(Q.a, Q.b)
    if k0 == 0:
        root = grid.root()
        f = FamilyLadder(0, {0: [root]}, {0: 0}, target_measure=Q.measure)
        return f, FamilyLadder(0, {0: [root]}, {0: 0}, target_measure=Q.measure)
    parents = _meeting_cells(grid, Q.a, Q.b, k0 - 1)
    level = [ch for c in parents for ch in grid.children(c) if ch.meets_interior(Q.a, Q.b)]
    f1 = [c for c in level if c.inside(Q.a, Q.b)]
    f2 = level
    lam_hat = lambda_hat if lambda_hat is not None else lambda_bounds(grid)[0]
    bound = 2 / lam_hat + 2
    for fam in (f1, f2):
        if not 1 <= len(fam) <= bound:
            raise AssertionError(f"hull family size {len(fam)} outside [1, {bound}]")
    covered1 = sum((c.measure for c in f1), Fraction(0))
    return (FamilyLadder(k0, {0: f1}, {0: k0}, target_measure=Q.measure, residual=Q.measure - covered1),
            FamilyLadder(k0, {0: f2}, {0: k0}, target_measure=Q.measure, residual=Fraction(0)))


def _meeting_cells(grid: Grid, a, b, level: int) -> list[GridCell]:
    """Level cells whose interior meets (a, b); only used above k0 (at most two)."""
    cur = [grid.root()]
    for _ in range(level):
        cur = [ch for c in cur for ch in grid.children(c) if ch.meets_interior(a, b)]
    return cur


def interval_partition_families(grid: Grid, Q: IntervalQuery, max_steps: int = 32,
                                lambda_hat: Fraction | None = None) -> FamilyLadder:
    """Two-sided ladder F^0, F^{+-1}, ... partitioning Q up to a residual.

    F^0 holds the level-j0 cells inside Q.  Step i on the left takes every
    cell of the first deeper level fitting in [a, a_{i-1}], and symmetrically
    on the right.
    """
    a, b = Q.a, Q.b
    j0, _ = grid.k0(a, b)
    f0 = grid.cells_inside(a, b, j0)
    fams = {0: f0}
    levels = {0: j0}
    j_minus, j_plus = [j0], [j0]
    left, right = f0[0].a, f0[-1].b
    for i in range(1, max_steps + 1):
        if left == a:
            break
        j, _ = grid.k0(a, left)
        if j <= j_minus[-1]:
            raise AssertionError("ladder levels must increase")
        cells = grid.cells_inside(a, left, j)
        fams[-i], levels[-i] = cells, j
        j_minus.append(j)
        left = cells[0].a
    for i in range(1, max_steps + 1):
        if right == b:
            break
        j, _ = grid.k0(right, b)
        if j <= j_plus[-1]:
            raise AssertionError("ladder levels must increase")
        cells = grid.cells_inside(right, b, j)
        fams[i], levels[i] = cells, j
        j_plus.append(j)
        right = cells[-1].b
    lam_hat = lambda_hat if lambda_hat is not None else lambda_bounds(grid)[0]
    for k, cells in fams.items():
        if not 1 <= len(cells) <= 2 / lam_hat:
            raise AssertionError(f"family {k} has {len(cells)} cells, bound {2 / lam_hat}")
    return FamilyLadder(j0, fams, levels, j_plus, j_minus, Q.measure, (left - a) + (b - right))


# maximal-cell decompositions ---------------------------------------------------

def merge_intervals(intervals: Iterable[tuple]) -> list[tuple[Fraction, Fraction]]:
    ivs = sorted((Fraction(a), Fraction(b)) for a, b in intervals)
    out: list[list[Fraction]] = []
    for a, b in ivs:
        if a >= b:
            continue
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _overlap(cell: GridCell, targets) -> tuple[bool, Fraction]:
    """(cell inside one target interval, measure of cell intersected with targets)."""
    m = Fraction(0)
    for a, b in targets:
        if a <= cell.a and cell.b <= b:
            return True, cell.measure
        lo, hi = max(a, cell.a), min(b, cell.b)
        if hi > lo:
            m += hi - lo
    return False, m


def maximal_cells(grid: Grid, targets: Sequence[tuple], depth: int,
                  start: GridCell | None = None) -> tuple[dict[int, list[GridCell]], Fraction]:
    """Maximal cells (closure inside the target) by level, down to ``depth``.

    Returns the families and the target measure left uncovered at ``depth``.
    """
    start = start or grid.root()
    fams: dict[int, list[GridCell]] = {}
    inside, m = _overlap(start, targets)
    if inside:
        return {start.level: [start]}, Fraction(0)
    frontier = [start] if m > 0 else []
    level = start.level
    while frontier and level < depth:
        nxt = []
        for c in frontier:
            for ch in grid.children(c):
                ins, mm = _overlap(ch, targets)
                if ins:
                    fams.setdefault(ch.level, []).append(ch)
                elif mm > 0:
                    nxt.append(ch)
        frontier = nxt
        level += 1
    residual = sum((_overlap(c, targets)[1] for c in frontier), Fraction(0))
    return fams, residual


def fitted_ratio(level_sums: dict[int, object], first: int | None = None,
                 last: int | None = None) -> float | None:
    """exp(slope) of a least-squares line through log(sum) against level."""
    pts = [(k, float(to_mpf(v))) for k, v in sorted(level_sums.items())
           if (first is None or k >= first) and (last is None or k <= last) and v != 0]
    if len(pts) < 2:
        return None
    ks = np.array([k for k, _ in pts], dtype=float)
    ys = np.log(np.array([v for _, v in pts], dtype=float))
    slope = np.polyfit(ks, ys, 1)[0]
    return float(np.exp(slope))


@dataclass
class Decomposition:
    rep: AtomicRep
    ladder: FamilyLadder
    level_sums: dict[int, object]
    fitted_ratio: float | None
    residual: Fraction

    def to_json(self) -> dict:
        return {
            "families": self.ladder.to_json(),
            "coefficients": self.rep.to_json()["coeffs"],
            "residual": format_rational(self.residual),
            "level_sums": [{"level": k, "sum": format_exact(v)} for k, v in sorted(self.level_sums.items())],
            "fitted_ratio": self.fitted_ratio,
        }


def _targets_of(grid: Grid, target) -> list[tuple[Fraction, Fraction]]:
    if isinstance(target, IntervalQuery):
        return [(target.a, target.b)]
    if isinstance(target, GridCell):
        return [(target.a, target.b)]
    ivs = []
    for t in target:
        if isinstance(t, GridCell):
            ivs.append((t.a, t.b))
        elif isinstance(t, IntervalQuery):
            ivs.append((t.a, t.b))
        elif isinstance(t, tuple) and len(t) == 2 and not isinstance(t[0], int | CellAddress):
            ivs.append((Fraction(t[0]), Fraction(t[1])))
        else:
            c = grid.cell(as_address(t))
            ivs.append((c.a, c.b))
    return merge_intervals(ivs)


def indicator_decomposition(grid: Grid, target, params: BesovParams, depth: int) -> Decomposition:
    """1_target = sum_P |P|^(1/p-s) a_P over maximal cells P inside the target."""
    targets = _targets_of(grid, target)
    total = sum((b - a for a, b in targets), Fraction(0))
    if total == 0:
        raise ParameterError("target has zero measure")
    fams, residual = maximal_cells(grid, targets, depth)
    expo = 1 / params.p - params.s
    coeffs = {c.address: power_any(c.measure, expo) for cells in fams.values() for c in cells}
    sums = {k: sum_any(power_any(c.measure, 1 - params.s * params.p) for c in cells)
            for k, cells in fams.items()}
    k0 = min(fams) if fams else depth
    ladder = FamilyLadder(k0, fams, {k: k for k in fams}, target_measure=total, residual=residual)
    return Decomposition(AtomicRep(grid, coeffs), ladder, sums, fitted_ratio(sums), residual)


def atom_transfer(src: Grid, dst: Grid, Q, params: BesovParams, depth: int,
                  start: GridCell | None = None) -> Decomposition:
    """Re-expand the src atom a_Q in dst atoms: a_Q = sum (|P|/|Q|)^(1/p-s) a_P."""
    q = src.cell(as_address(Q)) if not isinstance(Q, GridCell) else Q
    fams, residual = maximal_cells(dst, [(q.a, q.b)], depth, start=start)
    expo = 1 / params.p - params.s
    coeffs = {c.address: power_any(c.measure / q.measure, expo) for cells in fams.values() for c in cells}
    sums = {k: sum_any(power_any(coeffs[c.address], params.p) for c in cells) for k, cells in fams.items()}
    k0 = min(fams) if fams else depth
    ladder = FamilyLadder(k0, fams, {k: k for k in fams}, target_measure=q.measure, residual=residual)
    return Decomposition(AtomicRep(dst, coeffs), ladder, sums, fitted_ratio(sums), residual)


def transfer_constant(src: Grid, dst: Grid, params: BesovParams, src_levels: int,
                      extra_depth: int) -> tuple[float, CellAddress]:
    """Largest rep norm of a transferred atom over all src cells up to ``src_levels``."""
    best = (-1.0, None)
    level = [src.root()]
    for lv in range(src_levels + 1):
        for c in level:
            k0, _ = dst.k0(c.a, c.b)
            t = atom_transfer(src, dst, c, params, k0 + extra_depth)
            v = float(rep_norm(t.rep, params).value)
            if v > best[0]:
                best = (v, c.address)
        if lv < src_levels:
            level = [ch for c in level for ch in src.children(c)]
    return best


# Cantor complement -------------------------------------------------------------

@dataclass(frozen=True)
class AhlforsSetSpec:
    """Middle-thirds Cantor set; alpha = log 2 / log 3 is kept symbolic (3^alpha = 2)."""

    kind: str = "middle_thirds_cantor"

    @property
    def alpha(self) -> float:
        return math.log(2) / math.log(3)

    def cell_avoids(self, address: CellAddress) -> bool:
        """A triadic cell's interior misses K iff its address contains the digit 1."""
        return 1 in address.raw

    def measure_power(self, measure: Fraction) -> Fraction:
        """|P|^alpha for |P| = 3^-k, returned exactly as 2^-k."""
        measure = Fraction(measure)
        if measure.numerator != 1:
            raise GridError("measure is not an inverse power of 3")
        d, k = measure.denominator, 0
        while d % 3 == 0:
            d //= 3
            k += 1
        if d != 1:
            raise GridError("measure is not an inverse power of 3")
        return Fraction(1, 2 ** k)


@dataclass
class CantorReport:
    ladder: FamilyLadder
    counts: dict[int, int]
    level_sums: dict[int, Fraction]
    q_power: Fraction
    ratios: dict[int, Fraction]
    max_ratio: Fraction
    total: Fraction

    def to_json(self) -> dict:
        return {
            "families": self.ladder.to_json(),
            "per_level": [{"level": k, "count": self.counts[k], "sum": format_rational(self.level_sums[k]),
                           "ratio_to_Q": format_rational(self.ratios[k])} for k in sorted(self.level_sums)],
            "Q_power": format_rational(self.q_power),
            "max_ratio": format_rational(self.max_ratio),
            "total": format_rational(self.total),
            "residual": format_rational(self.ladder.residual),
        }


def cantor_complement_decomposition(grid: Grid, K: AhlforsSetSpec, Q, depth: int) -> CantorReport:
    """Maximal triadic cells of Q minus K, level by level, with sums of |P|^alpha."""
    if not (isinstance(grid, NAdicGrid) and grid.N == 3):
        raise GridError("the Cantor decomposition needs the triadic grid")
    if isinstance(Q, GridCell):
        q = Q
    else:
        try:
            q = grid.cell(as_address(Q))
        except GridError:
            raise
    fams: dict[int, list[GridCell]] = {}
    if K.cell_avoids(q.address):
        fams[q.level] = [q]
        frontier = []
    else:
        frontier = [q]
    level = q.level
    while frontier and level < depth:
        nxt = []
        for c in frontier:
            for ch in grid.children(c):
                if ch.address.raw[-1] == 1:
                    fams.setdefault(ch.level, []).append(ch)
                else:
                    nxt.append(ch)
        frontier = nxt
        level += 1
    covered = sum((c.measure for cells in fams.values() for c in cells), Fraction(0))
    # the part of Q outside K has full measure in Q
    residual = q.measure - covered
    ladder = FamilyLadder(min(fams) if fams else depth, fams, {k: k for k in fams},
                          target_measure=q.measure, residual=residual)
    sums = {k: sum((K.measure_power(c.measure) for c in cells), Fraction(0)) for k, cells in fams.items()}
    qp = K.measure_power(q.measure)
    ratios = {k: v / qp for k, v in sums.items()}
    return CantorReport(ladder, {k: len(v) for k, v in fams.items()}, sums, qp, ratios,
                        max(ratios.values(), default=Fraction(0)), sum(sums.values(), Fraction(0)))


def parse_grid_token(token: str, depth_limit: int = 512) -> Grid:
    """``nadic:2`` or ``weighted:1/5``."""
    kind, _, arg = token.partition(":")
    if kind == "nadic":
        return NAdicGrid(int(arg), depth_limit=depth_limit)
    if kind == "weighted":
        return WeightedBinaryGrid(arg, depth_limit=depth_limit)
    raise ParameterError(f"unknown grid token {token!r}")
