"""Step functions on grid cells, conditional expectations and oscillations."""

from __future__ import annotations

import heapq
from fractions import Fraction
from typing import Iterable, Mapping

import mpmath
import numpy as np

from .errors import GridError, ParameterError
from .exact import (
    DPS,
    abs_any,
    format_exact,
    is_exact,
    parse_rational,
    power_any,
    sum_any,
    to_mpf,
)
from .grid_core import ROOT, CellAddress, Grid, GridCell, as_address

ZERO = Fraction(0)


class StepFunction:
    """Function constant on each cell of a finite antichain, zero elsewhere.

    Pieces are kept in canonical form: no zero values and no complete
    sibling group sharing one value, so equal functions compare equal.
    """

    __slots__ = ("grid", "pieces")

    def __init__(self, grid: Grid, pieces: Mapping | Iterable = (), canonical: bool = True):
        self.grid = grid
        items = pieces.items() if isinstance(pieces, Mapping) else pieces
        table: dict[CellAddress, object] = {}
        for addr, v in items:
            addr = as_address(addr)
            if addr in table:
                raise GridError(f"duplicate piece {addr!r}")
            table[addr] = v if not isinstance(v, int) else Fraction(v)
        _check_antichain(table)
        self.pieces = _canonical(grid, table) if canonical else table

    # basic queries
    def sorted_pieces(self) -> list[tuple[CellAddress, object]]:
        return sorted(self.pieces.items(), key=lambda kv: kv[0].raw)

    @property
    def depth(self) -> int:
        return max((a.level for a in self.pieces), default=0)

    def value_at(self, x) -> object:
        x = Fraction(x)
        for addr, v in self.pieces.items():
            c = self.grid.cell(addr)
            if c.a <= x < c.b or (x == 1 and c.b == 1):
                return v
        return ZERO

    def integral(self, cell: GridCell | None = None):
        if cell is None:
            return sum_any(v * self.grid.cell(a).measure for a, v in self.pieces.items())
        return _integral_over(self, cell)

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return self.pieces == other.pieces

    def __add__(self, other: "StepFunction") -> "StepFunction":
        return StepFunction(self.grid, accumulate(self.grid, list(self.pieces.items())
                                                  + list(other.pieces.items())))

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "StepFunction":
        c = c if not isinstance(c, int) else Fraction(c)
        return StepFunction(self.grid, {a: c * v for a, v in self.pieces.items()})

    def __repr__(self):
        return f"StepFunction({len(self.pieces)} pieces on {self.grid!r})"

    def to_json(self) -> dict:
        return {
            "pieces": [{"address": list(a.word), "value": format_exact(v)}
                       for a, v in self.sorted_pieces()],
        }


def _check_antichain(table):
    prev = None
    for addr in sorted(table, key=lambda a: a.raw):
        if prev is not None and addr.raw.startswith(prev.raw):
            raise GridError(f"pieces {prev!r} and {addr!r} overlap")
        prev = addr


def _is_zero(v) -> bool:
    return v == 0


def _canonical(grid: Grid, table: dict) -> dict:
    table = {a: v for a, v in table.items() if not _is_zero(v)}
    # merge complete sibling groups, deepest parents first
    heap = []
    for a in table:
        if a.level:
            par = a.parent()
            heapq.heappush(heap, (-par.level, par.raw))
    done = set()
    while heap:
        _, raw = heapq.heappop(heap)
        if raw in done:
            continue
        done.add(raw)
        parent = CellAddress(raw)
        kids = [parent.child(i) for i in range(grid.child_count(parent))]
        if not kids or any(k not in table for k in kids):
            continue
        v0 = table[kids[0]]
        if all(table[k] == v0 for k in kids[1:]):
            for k in kids:
                del table[k]
            table[parent] = v0
            if raw:
                heapq.heappush(heap, (-(len(raw) - 1), raw[:-1]))
                done.discard(raw[:-1])
    return table


def _integral_over(f: StepFunction, cell: GridCell):
    """Integral of f over a cell."""
    total = []
    raw = cell.address.raw
    for a, v in f.pieces.items():
        if a.raw.startswith(raw):
            total.append(v * f.grid.cell(a).measure)
        elif raw.startswith(a.raw):
            return v * cell.measure
    return sum_any(total)


def accumulate(grid: Grid, items: Iterable[tuple]) -> dict:
    """Pointwise sum of weighted cell indicators as an antichain of pieces.

    ``items`` are (address, value) pairs meaning ``value * 1_cell``.  Regions
    of a cell not covered by deeper items are emitted as the sibling cells
    hanging off the paths to those items.
    """
    agg: dict[bytes, object] = {}
    for addr, v in items:
        raw = as_address(addr).raw
        agg[raw] = agg[raw] + v if raw in agg else v
    keys = sorted(agg)
    if not keys:
        return {}
    # forest of keyed nodes: nearest keyed ancestor
    kids: dict[bytes | None, list[bytes]] = {None: []}
    stack: list[bytes] = []
    for k in keys:
        while stack and not k.startswith(stack[-1]):
            stack.pop()
        parent = stack[-1] if stack else None
        kids.setdefault(parent, []).append(k)
        kids.setdefault(k, [])
        stack.append(k)
    out: dict[CellAddress, object] = {}

    def emit(raw: bytes, value):
        if not _is_zero(value):
            out[CellAddress(raw)] = value

    # iterative traversal: (node, accumulated value above node)
    work = [(k, ZERO) for k in kids[None]]
    while work:
        node, above = work.pop()
        val = above + agg[node]
        below = kids[node]
        if not below:
            emit(node, val)
            continue
        _emit_complement(grid, node, below, val, emit)
        work.extend((b, val) for b in below)
    return out


def _emit_complement(grid: Grid, top: bytes, below: list[bytes], value, emit):
    """Emit the cells of ``top`` not on any path to ``below`` nodes."""
    if _is_zero(value):
        return
    # trie of relative paths
    trie: dict[bytes, set[int]] = {}
    for b in below:
        for lv in range(len(top), len(b)):
            trie.setdefault(b[:lv], set()).add(b[lv])
    for node, used in trie.items():
        n = grid.child_count(CellAddress(node))
        for i in range(n):
            if i in used:
                continue
            emit(node + bytes((i,)), value)


def conditional_expectation(f: StepFunction, k: int, keep_zeros: bool = False) -> StepFunction:
    """f_k: average of f over each level-k cell."""
    if k < 0:
        raise ParameterError("level must be non-negative")
    grid = f.grid
    out: dict[CellAddress, object] = {}
    sums: dict[bytes, list] = {}
    for a, v in f.pieces.items():
        if a.level <= k:
            out[a] = v
        else:
            sums.setdefault(a.raw[:k], []).append(v * grid.cell(a).measure)
    for raw, parts in sums.items():
        cell = grid.cell(CellAddress(raw))
        out[cell.address] = sum_any(parts) / cell.measure
    return StepFunction(grid, out, canonical=not keep_zeros)


def martingale_difference(f: StepFunction, k: int) -> StepFunction:
    """d_k f = f_k - f_{k-1}."""
    if k < 1:
        raise ParameterError("martingale differences start at level 1")
    return conditional_expectation(f, k) - conditional_expectation(f, k - 1)


def lp_power(f: StepFunction, p) -> object:
    """sum |v|^p |Q| (exact where the powers are)."""
    p = parse_rational(p)
    return sum_any(power_any(abs_any(v), p) * f.grid.cell(a).measure for a, v in f.pieces.items())


def lp_norm(f: StepFunction, p) -> object:
    """(sum |v|^p |Q|)^(1/p); exact when possible, otherwise a 60-digit mpf."""
    p = parse_rational(p)
    if p < 1:
        raise ParameterError("p must be >= 1")
    return power_any(lp_power(f, p), 1 / p)


# oscillation --------------------------------------------------------------

def _distribution(f: StepFunction, cell: GridCell) -> list[tuple[object, Fraction]]:
    """(value, measure) pairs of f restricted to the cell, zero region included."""
    raw = cell.address.raw
    dist = []
    covered = Fraction(0)
    for a, v in f.pieces.items():
        if raw.startswith(a.raw):
            return [(v, cell.measure)]
        if a.raw.startswith(raw):
            m = f.grid.cell(a).measure
            dist.append((v, m))
            covered += m
    if covered < cell.measure:
        dist.append((ZERO, cell.measure - covered))
    return dist


def _weighted_median(dist):
    ordered = sorted(dist, key=lambda vm: to_mpf(vm[0]) if not isinstance(vm[0], Fraction) else vm[0])
    total = sum(m for _, m in dist)
    acc = Fraction(0)
    for v, m in ordered:
        acc += m
        if 2 * acc >= total:
            return v
    return ordered[-1][0]


def _golden_min(fun, lo, hi, tol):
    invphi = (mpmath.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(2000):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    x = (a + b) / 2
    return x, fun(x)


def osc_power(f: StepFunction, cell: GridCell, p, mode: str = "inf"):
    """osc_p(f, Q)^p.

    ``mode="inf"``: infimum over constants c of the integral of |f - c|^p on Q
    (p = 2: the mean, p = 1: a weighted median, otherwise golden-section search).
    ``mode="mean"``: distance to the cell average instead.
    """
    p = parse_rational(p)
    dist = _distribution(f, cell)
    if len(dist) == 1:
        return ZERO
    if mode not in ("inf", "mean"):
        raise ParameterError(f"unknown oscillation mode {mode!r}")
    exact = all(is_exact(v) for v, _ in dist)
    if mode == "mean" or p == 2:
        mean = sum_any(v * m for v, m in dist) / cell.measure
        c = mean
    elif p == 1 and exact:
        c = _weighted_median(dist)
    else:
        with mpmath.workdps(DPS):
            vals = [(to_mpf(v), to_mpf(m)) for v, m in dist]
            pe = to_mpf(p)

            def obj(x):
                return sum(m * abs(v - x) ** pe for v, m in vals)

            lo = min(v for v, _ in vals)
            hi = max(v for v, _ in vals)
            _, best = _golden_min(obj, lo, hi, mpmath.mpf(10) ** -30)
            return best
    return sum_any(power_any(abs_any(v - c), p) * m for v, m in dist)


def osc_p(f: StepFunction, cell: GridCell, p, mode: str = "inf"):
    p = parse_rational(p)
    return power_any(osc_power(f, cell, p, mode), 1 / p)


def osc_search(f: StepFunction, cell: GridCell, p) -> mpmath.mpf:
    """Golden-section value of osc_p^p regardless of closed forms (cross-check)."""
    with mpmath.workdps(DPS):
        vals = [(to_mpf(v), to_mpf(m)) for v, m in _distribution(f, cell)]
        pe = to_mpf(parse_rational(p))

        def obj(x):
            return sum(m * abs(v - x) ** pe for v, m in vals)

        lo = min(v for v, _ in vals)
        hi = max(v for v, _ in vals)
        if lo == hi:
            return mpmath.mpf(0)
        return _golden_min(obj, lo, hi, mpmath.mpf(10) ** -30)[1]


# support structure ---------------------------------------------------------

def strict_ancestors(f: StepFunction) -> dict[int, set[CellAddress]]:
    """Strict ancestors of the pieces, grouped by level."""
    out: dict[int, set[bytes]] = {}
    for a in f.pieces:
        raw = a.raw
        for lv in range(len(raw)):
            out.setdefault(lv, set()).add(raw[:lv])
    return {lv: {CellAddress(r) for r in s} for lv, s in out.items()}


# random corpora -------------------------------------------------------------

RNG_ALGORITHM = "numpy.random.Generator(numpy.random.Philox(SeedSequence(seed).spawn(count)[i])), Philox-4x64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def random_step_function(grid: Grid, depth: int, rng: np.random.Generator,
                         split_prob: float = 0.7, zero_prob: float = 0.15) -> StepFunction:
    """Random antichain down to ``depth`` with small rational values.

    The leftmost branch is always refined to ``depth`` so the function really
    reaches that level.
    """
    pieces = {}
    stack = [(grid.root(), True)]
    while stack:
        cell, forced = stack.pop()
        if cell.level < depth and (forced or rng.random() < split_prob):
            kids = grid.children(cell)
            for i, ch in enumerate(kids):
                stack.append((ch, forced and i == 0))
            continue
        if rng.random() < zero_prob:
            continue
        num = int(rng.integers(-6, 7))
        den = int(rng.integers(1, 5))
        pieces[cell.address] = Fraction(num, den)
    return StepFunction(grid, pieces)


def seeded_corpus(grid: Grid, count: int = 100, depth: int = 8, seed: int = 20240611) -> list[StepFunction]:
    """Deterministic corpus: one child stream per function."""
    root = np.random.SeedSequence(seed)
    return [random_step_function(grid, depth, np.random.Generator(np.random.Philox(s)))
            for s in root.spawn(count)]


def indicator(grid: Grid, cells: Iterable, value=Fraction(1)) -> StepFunction:
    return StepFunction(grid, {as_address(c): value for c in cells})


def constant(grid: Grid, c) -> StepFunction:
    return StepFunction(grid, {ROOT: parse_rational(c)})


def stepfun_from_json(obj: dict, grid: Grid) -> StepFunction:
    return StepFunction(grid, {CellAddress(p["address"]): parse_rational(p["value"]) for p in obj["pieces"]})
