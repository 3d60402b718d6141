"""Nested interval partitions of [0, 1] with exact rational geometry.

Grids are lazy: a cell is computed from its address on demand (closed forms
for the generator families, a walk from the root otherwise) and kept in a
bounded cache.  Whole levels are only enumerated by the validators, behind
an explicit guard.
"""

from __future__ import annotations

import bisect
import math
import re
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import (
    DepthLimitExceeded,
    EnumerationGuard,
    GridError,
    PartitionGap,
    RatioViolation,
)
from .exact import format_rational, parse_rational

DEFAULT_DEPTH_LIMIT = 512
VALIDATION_GUARD = 1 << 24

_DIGITS = "0123456789abcdefghijklmnopqrstuvwxyz"
_TO_ASCII = bytes.maketrans(bytes(range(36)), _DIGITS.encode())
_FROM_ASCII = bytes.maketrans(_DIGITS.encode(), bytes(range(36)))


class CellAddress:
    """Word of child indices; the empty word is the root [0, 1].

    Stored as ``bytes`` (child index <= 255) so deep addresses stay compact.
    Ordering is lexicographic, which is left-to-right order for disjoint
    cells with ancestors sorting before their descendants.
    """

    __slots__ = ("raw",)

    def __init__(self, word: Iterable[int] | bytes = b""):
        if isinstance(word, bytes):
            self.raw = word
        else:
            try:
                self.raw = bytes(word)
            except ValueError as exc:
                raise GridError(f"child index out of range in {word!r}") from exc

    @property
    def word(self) -> tuple[int, ...]:
        return tuple(self.raw)

    @property
    def level(self) -> int:
        return len(self.raw)

    def parent(self) -> "CellAddress":
        if not self.raw:
            raise GridError("root has no parent")
        return CellAddress(self.raw[:-1])

    def child(self, i: int) -> "CellAddress":
        return CellAddress(self.raw + bytes((i,)))

    def ancestor(self, level: int) -> "CellAddress":
        if level > len(self.raw) or level < 0:
            raise GridError("ancestor level out of range")
        return CellAddress(self.raw[:level])

    def is_ancestor_of(self, other: "CellAddress", strict: bool = False) -> bool:
        if strict and len(self.raw) >= len(other.raw):
            return False
        return other.raw.startswith(self.raw)

    def common_ancestor(self, other: "CellAddress") -> "CellAddress":
        n = min(len(self.raw), len(other.raw))
        i = 0
        # compare in chunks first; addresses can be thousands of digits long
        step = 64
        while i + step <= n and self.raw[i:i + step] == other.raw[i:i + step]:
            i += step
        while i < n and self.raw[i] == other.raw[i]:
            i += 1
        return CellAddress(self.raw[:i])

    def __len__(self):
        return len(self.raw)

    def __iter__(self):
        return iter(self.raw)

    def __getitem__(self, i):
        return self.raw[i]

    def __eq__(self, other):
        return isinstance(other, CellAddress) and self.raw == other.raw

    def __hash__(self):
        return hash(self.raw)

    def __lt__(self, other):
        return self.raw < other.raw

    def __le__(self, other):
        return self.raw <= other.raw

    def __gt__(self, other):
        return self.raw > other.raw

    def __ge__(self, other):
        return self.raw >= other.raw

    def __repr__(self):
        if len(self.raw) > 24:
            return f"CellAddress(<{len(self.raw)} digits>)"
        return f"CellAddress({list(self.raw)})"


ROOT = CellAddress()


def as_address(x) -> CellAddress:
    return x if isinstance(x, CellAddress) else CellAddress(x)


@dataclass(frozen=True)
class GridCell:
    address: CellAddress
    a: Fraction
    b: Fraction
    child_count: int

    @property
    def measure(self) -> Fraction:
        return self.b - self.a

    @property
    def level(self) -> int:
        return self.address.level

    def contains_interval(self, a, b) -> bool:
        return self.a <= a and b <= self.b

    def inside(self, a, b) -> bool:
        """Closed cell contained in the closed interval [a, b]."""
        return a <= self.a and self.b <= b

    def meets_interior(self, a, b) -> bool:
        return self.a < b and a < self.b


@dataclass
class GridMeta:
    lambda_hat: Fraction
    lam: Fraction
    qs_constant: Fraction | None
    level_stats: list[tuple[Fraction, Fraction]]
    depth: int
    cell_count: int = 0

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "lambda_hat": format_rational(self.lambda_hat),
            "lambda": format_rational(self.lam),
            "qs_constant": None if self.qs_constant is None else format_rational(self.qs_constant),
            "level_stats": [
                {"level": k, "max": format_rational(hi), "min": format_rational(lo),
                 "ratio": format_rational(hi / lo)}
                for k, (hi, lo) in enumerate(self.level_stats)
            ],
        }


class Grid:
    """Base class: subclasses provide ``_child_ratios`` or override ``children``."""

    kind = "abstract"

    def __init__(self, depth_limit: int = DEFAULT_DEPTH_LIMIT, cache_size: int = 1 << 17):
        if depth_limit < 0:
            raise GridError("depth_limit must be non-negative")
        self.depth_limit = depth_limit
        self._cache: OrderedDict[bytes, GridCell] = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.RLock()

    # subclass hooks
    def _child_ratios(self, address: CellAddress) -> Sequence[Fraction]:
        raise NotImplementedError

    def generator_spec(self) -> dict:
        raise NotImplementedError

    def child_count(self, address: CellAddress) -> int:
        if address.level >= self.depth_limit:
            return 0
        return len(self._child_ratios(address))

    @property
    def is_binary(self) -> bool:
        return False

    # cache
    def _remember(self, cell: GridCell) -> GridCell:
        with self._lock:
            self._cache[cell.address.raw] = cell
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return cell

    def _cached(self, address: CellAddress) -> GridCell | None:
        with self._lock:
            return self._cache.get(address.raw)

    def _check_depth(self, level: int):
        if level > self.depth_limit:
            raise DepthLimitExceeded(f"level {level} exceeds depth limit {self.depth_limit}")

    # cells
    def root(self) -> GridCell:
        return self.cell(ROOT)

    def cell(self, address) -> GridCell:
        address = as_address(address)
        self._check_depth(address.level)
        hit = self._cached(address)
        if hit is not None:
            return hit
        cell = self._compute_cell(address)
        return self._remember(cell)

    def _compute_cell(self, address: CellAddress) -> GridCell:
        # walk down from the deepest cached ancestor
        level = address.level
        start = 0
        cur = None
        for lv in range(level - 1, -1, -1):
            cur = self._cached(address.ancestor(lv))
            if cur is not None:
                start = lv
                break
        if cur is None:
            cur = self._make_cell(ROOT, Fraction(0), Fraction(1))
            start = 0
        for lv in range(start, level):
            kids = self.children(cur)
            idx = address[lv]
            if idx >= len(kids):
                raise GridError(f"child index {idx} invalid at level {lv}")
            cur = kids[idx]
        return cur

    def _make_cell(self, address: CellAddress, a: Fraction, b: Fraction) -> GridCell:
        return GridCell(address, a, b, self.child_count(address))

    def children(self, cell: GridCell) -> tuple[GridCell, ...]:
        self._check_depth(cell.level + 1)
        ratios = self._child_ratios(cell.address)
        out = []
        x = cell.a
        m = cell.measure
        for i, r in enumerate(ratios):
            y = cell.b if i == len(ratios) - 1 else x + r * m
            out.append(self._make_cell(cell.address.child(i), x, y))
            x = y
        return tuple(out)

    def level_cells(self, k: int, guard: int = VALIDATION_GUARD) -> list[GridCell]:
        self._check_depth(k)
        cells = [self.root()]
        for _ in range(k):
            nxt = []
            for c in cells:
                nxt.extend(self.children(c))
                if len(nxt) > guard:
                    raise EnumerationGuard(f"level enumeration exceeds {guard} cells")
            cells = nxt
        return cells

    def level_extremes(self, k: int) -> tuple[Fraction, Fraction]:
        """(max, min) cell measure at level k."""
        ms = [c.measure for c in self.level_cells(k)]
        return max(ms), min(ms)

    def max_measure(self, k: int) -> Fraction:
        return self.level_extremes(k)[0]

    def locate(self, x, level: int) -> GridCell:
        """Level cell containing x; a shared endpoint goes to the right cell."""
        x = Fraction(x)
        if not 0 <= x <= 1:
            raise GridError("point outside [0, 1]")
        cur = self.root()
        for _ in range(level):
            kids = self.children(cur)
            nxt = kids[-1]
            for ch in kids:
                if x < ch.b:
                    nxt = ch
                    break
            cur = nxt
        return cur

    def k0(self, a, b, start: GridCell | None = None) -> tuple[int, GridCell]:
        """Minimal level holding a cell whose closure lies in [a, b]; leftmost witness."""
        a, b = Fraction(a), Fraction(b)
        if not (0 <= a < b <= 1):
            raise GridError(f"degenerate interval [{a}, {b}]")
        cur_cell = start if start is not None else self.root()
        if not cur_cell.contains_interval(a, b):
            raise GridError("start cell must contain the query interval")
        if cur_cell.inside(a, b):
            return cur_cell.level, cur_cell
        cur = [cur_cell]
        level = cur_cell.level
        while True:
            if level + 1 > self.depth_limit:
                raise DepthLimitExceeded(
                    f"no cell inside [{a}, {b}] up to depth limit {self.depth_limit}")
            nxt = []
            for c in cur:
                for ch in self.children(c):
                    if not ch.meets_interior(a, b):
                        continue
                    if ch.inside(a, b):
                        return level + 1, ch
                    nxt.append(ch)
            cur = nxt
            level += 1

    def cells_inside(self, a, b, level: int, start: GridCell | None = None) -> list[GridCell]:
        """All level cells with closure in [a, b], assuming none exist above ``level``."""
        a, b = Fraction(a), Fraction(b)
        cur = [start if start is not None else self.root()]
        while cur and cur[0].level < level:
            nxt = []
            for c in cur:
                for ch in self.children(c):
                    if ch.meets_interior(a, b):
                        nxt.append(ch)
            cur = nxt
        return [c for c in cur if c.inside(a, b)]

    def __repr__(self):
        return f"{type(self).__name__}({self.generator_spec()})"


class NAdicGrid(Grid):
    kind = "nadic"

    def __init__(self, N: int, depth_limit: int = DEFAULT_DEPTH_LIMIT, **kw):
        if not isinstance(N, int) or N < 2:
            raise GridError(f"N-adic grid needs integer N >= 2, got {N!r}")
        if N > 255:
            raise GridError("N-adic grids support N <= 255")
        super().__init__(depth_limit, **kw)
        self.N = N
        self._ratios = tuple(Fraction(1, N) for _ in range(N))

    @property
    def is_binary(self) -> bool:
        return self.N == 2

    def _child_ratios(self, address):
        return self._ratios

    def child_count(self, address):
        return 0 if address.level >= self.depth_limit else self.N

    def generator_spec(self):
        return {"kind": "nadic", "N": self.N}

    def index_of(self, address: CellAddress) -> int:
        if not address.raw:
            return 0
        if self.N <= 36:
            return int(address.raw.translate(_TO_ASCII), self.N)
        j = 0
        for d in address.raw:
            j = j * self.N + d
        return j

    def address_of(self, index: int, level: int) -> CellAddress:
        if level == 0:
            return ROOT
        if self.N == 2:
            s = format(index, f"0{level}b").encode()
            return CellAddress(s.translate(_FROM_ASCII))
        digits = bytearray(level)
        for i in range(level - 1, -1, -1):
            index, digits[i] = divmod(index, self.N)
        return CellAddress(bytes(digits))

    def _compute_cell(self, address):
        j = self.index_of(address)
        d = self.N ** address.level
        return GridCell(address, Fraction(j, d), Fraction(j + 1, d), self.child_count(address))

    def level_extremes(self, k):
        m = Fraction(1, self.N ** k)
        return m, m

    def locate(self, x, level):
        x = Fraction(x)
        if not 0 <= x <= 1:
            raise GridError("point outside [0, 1]")
        d = self.N ** level
        j = min(x.numerator * d // x.denominator, d - 1)
        return self.cell(self.address_of(j, level))

    def k0(self, a, b, start=None):
        a, b = Fraction(a), Fraction(b)
        if not (0 <= a < b <= 1):
            raise GridError(f"degenerate interval [{a}, {b}]")
        A, D1 = a.numerator, a.denominator
        B, D2 = b.numerator, b.denominator
        j = 0 if start is None else start.level
        width = b - a
        # jump near the first level whose cells are short enough, then refine
        gap_bits = width.denominator.bit_length() - width.numerator.bit_length() - 1
        j = max(j, int(gap_bits / math.log2(self.N)) - 1)
        while Fraction(1, self.N ** j) > width:
            j += 1
        while True:
            if j > self.depth_limit:
                raise DepthLimitExceeded(
                    f"no cell inside [{a}, {b}] up to depth limit {self.depth_limit}")
            scale = self.N ** j
            lo = -((-A * scale) // D1)  # ceil(a * N^j)
            hi = (B * scale) // D2  # floor(b * N^j)
            if lo + 1 <= hi:
                return j, self.cell(self.address_of(lo, j))
            j += 1

    def cells_inside(self, a, b, level, start=None):
        a, b = Fraction(a), Fraction(b)
        scale = self.N ** level
        lo = -((-a.numerator * scale) // a.denominator)
        hi = (b.numerator * scale) // b.denominator
        return [self.cell(self.address_of(t, level)) for t in range(lo, hi)]


_RUNS = re.compile(rb"\x00+|\x01+")


class WeightedBinaryGrid(Grid):
    """Binary grid: left child takes fraction ``a`` of its parent, right child ``1 - a``."""

    kind = "weighted"

    def __init__(self, a, depth_limit: int = DEFAULT_DEPTH_LIMIT, **kw):
        a = parse_rational(a)
        if not 0 < a < 1:
            raise GridError(f"weight must lie in (0, 1), got {a}")
        super().__init__(depth_limit, **kw)
        self.a = a
        self._ratios = (a, 1 - a)

    @property
    def is_binary(self) -> bool:
        return True

    def _child_ratios(self, address):
        return self._ratios

    def child_count(self, address):
        return 0 if address.level >= self.depth_limit else 2

    def generator_spec(self):
        return {"kind": "weighted", "a": format_rational(self.a)}

    def _compute_cell(self, address):
        # run-length closed form in integer arithmetic over the common denominator
        d = self.a.denominator
        n0 = self.a.numerator
        n1 = d - n0
        left = 0
        meas = 1
        scale_pow = 0
        for m in _RUNS.finditer(address.raw):
            run = m.end() - m.start()
            dc = d ** run
            if address.raw[m.start()] == 0:
                left = left * dc
                meas = meas * n0 ** run
            else:
                p1 = n1 ** run
                left = left * dc + meas * (dc - p1)
                meas = meas * p1
            scale_pow += run
        den = d ** scale_pow
        return GridCell(address, Fraction(left, den), Fraction(left + meas, den),
                        self.child_count(address))

    def level_extremes(self, k):
        hi, lo = max(self._ratios), min(self._ratios)
        return hi ** k, lo ** k


class ExplicitTreeGrid(Grid):
    """Finite grid given cell by cell."""

    kind = "explicit"

    def __init__(self, cells: Iterable[tuple[CellAddress, Fraction, Fraction]],
                 labels: dict | None = None, validate: bool = True):
        table: dict[bytes, tuple[Fraction, Fraction]] = {}
        for addr, a, b in cells:
            addr = as_address(addr)
            table[addr.raw] = (Fraction(a), Fraction(b))
        if b"" not in table:
            raise GridError("explicit grid needs the root cell")
        if table[b""] != (Fraction(0), Fraction(1)):
            raise GridError("root cell must be [0, 1]")
        kids: dict[bytes, int] = {}
        for raw in table:
            if raw:
                parent = raw[:-1]
                if parent not in table:
                    raise GridError(f"cell {list(raw)} has no parent")
                kids[parent] = max(kids.get(parent, 0), raw[-1] + 1)
        for parent, n in kids.items():
            for i in range(n):
                if parent + bytes((i,)) not in table:
                    raise GridError(f"cell {list(parent)} is missing child {i}")
        depth = max(len(r) for r in table)
        super().__init__(depth_limit=depth, cache_size=max(1 << 17, len(table) + 1))
        self._table = table
        self._kids = kids
        self.labels = dict(labels or {})
        for raw, (a, b) in table.items():
            self._remember(GridCell(CellAddress(raw), a, b, kids.get(raw, 0)))
        if validate:
            _check_partitions(self)

    @property
    def is_binary(self) -> bool:
        return all(n == 2 for n in self._kids.values())

    def child_count(self, address):
        return self._kids.get(address.raw, 0)

    def cell(self, address):
        address = as_address(address)
        try:
            a, b = self._table[address.raw]
        except KeyError:
            if address.level > self.depth_limit:
                raise DepthLimitExceeded(f"level {address.level} beyond explicit depth") from None
            raise GridError(f"no cell at address {address!r}") from None
        hit = self._cached(address)
        return hit if hit is not None else GridCell(address, a, b, self.child_count(address))

    def children(self, cell):
        n = self._kids.get(cell.address.raw, 0)
        if n == 0:
            raise DepthLimitExceeded(f"cell {cell.address!r} has no materialized children")
        return tuple(self.cell(cell.address.child(i)) for i in range(n))

    def generator_spec(self):
        return {"kind": "explicit"}

    def all_cells(self) -> list[GridCell]:
        return [self.cell(CellAddress(r)) for r in sorted(self._table)]


def _check_partitions(grid: ExplicitTreeGrid):
    for cell in grid.all_cells():
        if cell.child_count == 0:
            continue
        kids = grid.children(cell)
        _check_children(cell, kids)


def _check_children(cell: GridCell, kids: Sequence[GridCell]) -> list[Fraction]:
    if len(kids) < 2:
        raise RatioViolation(f"cell {cell.address.word} has fewer than two children")
    if kids[0].a != cell.a or kids[-1].b != cell.b:
        raise PartitionGap(f"children of {cell.address.word} do not reach the parent endpoints")
    ratios = []
    for i, ch in enumerate(kids):
        if i and ch.a != kids[i - 1].b:
            raise PartitionGap(f"gap or overlap between children of {cell.address.word}")
        if ch.measure <= 0:
            raise RatioViolation(f"child {ch.address.word} has non-positive measure")
        r = ch.measure / cell.measure
        if not 0 < r < 1:
            raise RatioViolation(f"child ratio {r} outside (0, 1) at {ch.address.word}")
        ratios.append(r)
    return ratios


class ImageGrid(Grid):
    """Image of a base grid under an increasing piecewise-linear homeomorphism."""

    kind = "image"

    def __init__(self, base: Grid, breakpoints: Sequence[tuple], depth_limit: int | None = None):
        pts = [(parse_rational(x), parse_rational(y)) for x, y in breakpoints]
        if len(pts) < 2 or pts[0] != (0, 0) or pts[-1] != (1, 1):
            raise GridError("breakpoints must run from (0,0) to (1,1)")
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if not (x1 > x0 and y1 > y0):
                raise GridError("breakpoints must be strictly increasing")
        super().__init__(base.depth_limit if depth_limit is None else depth_limit)
        self.base = base
        self.points = pts
        self._xs = [p[0] for p in pts]
        self._ys = [p[1] for p in pts]

    @property
    def is_binary(self):
        return self.base.is_binary

    def h(self, x) -> Fraction:
        return _pl_eval(self._xs, self._ys, Fraction(x))

    def h_inv(self, y) -> Fraction:
        return _pl_eval(self._ys, self._xs, Fraction(y))

    def child_count(self, address):
        return 0 if address.level >= self.depth_limit else self.base.child_count(address)

    def _compute_cell(self, address):
        c = self.base.cell(address)
        return GridCell(address, self.h(c.a), self.h(c.b), self.child_count(address))

    def children(self, cell):
        self._check_depth(cell.level + 1)
        kids = self.base.children(self.base.cell(cell.address))
        return tuple(GridCell(k.address, self.h(k.a), self.h(k.b), self.child_count(k.address))
                     for k in kids)

    def locate(self, x, level):
        return self.cell(self.base.locate(self.h_inv(x), level).address)

    def generator_spec(self):
        return {"kind": "image", "base": self.base.generator_spec(),
                "breakpoints": [[format_rational(x), format_rational(y)] for x, y in self.points]}


def _pl_eval(xs, ys, x):
    if x <= xs[0]:
        return ys[0]
    if x >= xs[-1]:
        return ys[-1]
    i = bisect.bisect_right(xs, x) - 1
    x0, x1, y0, y1 = xs[i], xs[i + 1], ys[i], ys[i + 1]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


class RegroupedGrid(Grid):
    """Levels rebuilt from measure thresholds of a source grid.

    Level ``k`` holds the source cells P with |P| <= 2^(-stride*k) < |parent(P)|.
    """

    kind = "regrouped"

    def __init__(self, base: Grid, source_depth: int, stride: int):
        if stride < 1:
            raise GridError("stride must be >= 1")
        self.base = base
        self.stride = stride
        self.source_depth = source_depth
        lmax = base.max_measure(source_depth)
        # deepest level that is complete within the source depth
        K = 0
        while lmax * 2 ** (stride * (K + 1)) <= 1:
            K += 1
        super().__init__(depth_limit=K)
        self._source: dict[bytes, CellAddress] = {b"": ROOT}
        self._kids: dict[bytes, tuple[CellAddress, ...]] = {}

    def threshold(self, k: int) -> Fraction:
        return Fraction(1, 2 ** (self.stride * k))

    def source_address(self, address: CellAddress) -> CellAddress:
        if address.raw not in self._source:
            self.cell(address)
        return self._source[address.raw]

    def _source_children(self, address: CellAddress) -> tuple[CellAddress, ...]:
        with self._lock:
            hit = self._kids.get(address.raw)
        if hit is not None:
            return hit
        src = self.base.cell(self._source[address.raw])
        t = self.threshold(address.level + 1)
        found = []
        stack = [src]
        while stack:
            c = stack.pop()
            if c.measure <= t:
                # with a short stride the source cell itself may fall in the next bin
                found.append(c.address)
                continue
            stack.extend(reversed(self.base.children(c)))
        found.sort()
        out = tuple(found)
        with self._lock:
            self._kids[address.raw] = out
            for i, sa in enumerate(out):
                self._source[address.raw + bytes((i,))] = sa
        return out

    def child_count(self, address):
        if address.level >= self.depth_limit:
            return 0
        if address.raw not in self._source:
            self.cell(address)
        return len(self._source_children(address))

    def _compute_cell(self, address):
        cur = ROOT
        for lv in range(address.level):
            kids = self._source_children(address.ancestor(lv))
            if address[lv] >= len(kids):
                raise GridError(f"child index {address[lv]} invalid at level {lv}")
            cur = kids[address[lv]]
        src = self.base.cell(cur)
        return GridCell(address, src.a, src.b, self.child_count(address))

    def children(self, cell):
        self._check_depth(cell.level + 1)
        kids = self._source_children(cell.address)
        return tuple(self.cell(cell.address.child(i)) for i in range(len(kids)))

    def generator_spec(self):
        return {"kind": "regrouped", "base": self.base.generator_spec(),
                "source_depth": self.source_depth, "stride": self.stride}


# builders -----------------------------------------------------------------

def build_nadic(N: int, depth: int = DEFAULT_DEPTH_LIMIT, depth_limit: int | None = None) -> NAdicGrid:
    """N-adic grid; ``depth`` is recorded as the materialization bound."""
    if depth < 0:
        raise GridError("depth must be non-negative")
    return NAdicGrid(N, depth_limit=max(depth, depth_limit or DEFAULT_DEPTH_LIMIT))


def build_weighted_binary(a, depth: int = DEFAULT_DEPTH_LIMIT,
                          depth_limit: int | None = None) -> WeightedBinaryGrid:
    if depth < 0:
        raise GridError("depth must be non-negative")
    return WeightedBinaryGrid(a, depth_limit=max(depth, depth_limit or DEFAULT_DEPTH_LIMIT))


def materialize(grid: Grid, address) -> GridCell:
    return grid.cell(as_address(address))


def validate_good_grid(grid: Grid, depth: int, guard: int = VALIDATION_GUARD) -> GridMeta:
    """Enumerate levels 0..depth, check tiling and ratios, report constants."""
    level = [grid.root()]
    if level[0].a != 0 or level[0].b != 1:
        raise PartitionGap("root is not [0, 1]")
    lam_hat = None
    lam = None
    qs = Fraction(1)
    has_pairs = False
    stats = [(Fraction(1), Fraction(1))]
    total = 1
    for k in range(depth):
        nxt = []
        for cell in level:
            kids = grid.children(cell)
            for r in _check_children(cell, kids):
                lam_hat = r if lam_hat is None or r < lam_hat else lam_hat
                lam = r if lam is None or r > lam else lam
            nxt.extend(kids)
        total += len(nxt)
        if total > guard:
            raise EnumerationGuard(f"validation would enumerate more than {guard} cells")
        for left, right in zip(nxt, nxt[1:]):
            if left.b != right.a:
                raise PartitionGap(f"level {k + 1} is not a partition")
            r = left.measure / right.measure
            qs = max(qs, r, 1 / r)
            has_pairs = True
        ms = [c.measure for c in nxt]
        stats.append((max(ms), min(ms)))
        level = nxt
    if lam_hat is None:
        raise GridError("validation needs depth >= 1")
    return GridMeta(lam_hat, lam, qs if has_pairs else None, stats, depth, total)


def auto_stride(lambda_hat: Fraction) -> int:
    """Smallest r with 2^r * lambda_hat >= 1: no cell can sit in two consecutive bins."""
    r = 1
    while 2 ** r * lambda_hat < 1:
        r += 1
    return r


def regroup_by_measure(grid: Grid, depth: int, stride: int | None = None) -> RegroupedGrid:
    """Rebuild levels by the measure bins (2^(-s(k+1)), 2^(-sk)] of the source cells.

    ``stride=None`` picks the smallest stride for which the result is again a
    good grid; ``stride=1`` gives the literal dyadic bins, which may repeat a
    cell in consecutive levels when the source ratio drops below 1/2.
    """
    if stride is None:
        lam_hat = _lambda_hat(grid, depth)
        stride = auto_stride(lam_hat)
    return RegroupedGrid(grid, depth, stride)


def _lambda_hat(grid: Grid, depth: int) -> Fraction:
    if isinstance(grid, NAdicGrid):
        return Fraction(1, grid.N)
    if isinstance(grid, WeightedBinaryGrid):
        return min(grid.a, 1 - grid.a)
    return validate_good_grid(grid, depth).lambda_hat


def regroup_bins(grid: Grid, depth: int, stride: int = 1) -> list[list[GridCell]]:
    """Literal bins G^k within the source depth (cells may repeat across bins)."""
    lmax = grid.max_measure(depth)
    bins: list[list[GridCell]] = []
    k = 0
    while k == 0 or lmax * 2 ** (stride * k) <= 1:
        t = Fraction(1, 2 ** (stride * k))
        found = []
        stack = [(grid.root(), None)]
        while stack:
            c, parent_m = stack.pop()
            if c.measure <= t and (parent_m is None or parent_m > t):
                found.append(c)
                continue
            stack.extend((ch, c.measure) for ch in reversed(grid.children(c)))
        found.sort(key=lambda c: c.a)
        bins.append(found)
        k += 1
    return bins


# canonicalization ---------------------------------------------------------

@dataclass
class MeasuredNode:
    """Abstract node: a label, a measure and ordered children (no geometry)."""

    label: object
    measure: Fraction
    children: list["MeasuredNode"] = field(default_factory=list)


def canonicalize_to_interval_grid(tree, depth: int | None = None) -> ExplicitTreeGrid:
    """Embed a measured tree as intervals by left-to-right cumulative measure.

    ``tree`` is a ``MeasuredNode`` (root measure 1) or an existing ``Grid``
    (with ``depth``), in which case the result reproduces it cell for cell.
    The returned grid's ``labels`` maps node labels to cell addresses.
    """
    if isinstance(tree, Grid):
        if depth is None:
            depth = tree.depth_limit
        tree = measured_tree_of(tree, depth)
    root_m = Fraction(tree.measure)
    if root_m != 1:
        raise GridError(f"root measure must be 1, got {root_m}")
    cells = []
    labels = {}
    stack = [(tree, ROOT, Fraction(0))]
    while stack:
        node, addr, a = stack.pop()
        m = Fraction(node.measure)
        if m <= 0:
            raise RatioViolation(f"node {node.label!r} has non-positive measure")
        cells.append((addr, a, a + m))
        if node.label in labels:
            raise GridError(f"duplicate label {node.label!r}")
        labels[node.label] = addr
        if node.children:
            s = sum((Fraction(c.measure) for c in node.children), Fraction(0))
            if s != m:
                raise GridError(f"children of {node.label!r} sum to {s}, parent has {m}")
            x = a
            for i, ch in enumerate(node.children):
                stack.append((ch, addr.child(i), x))
                x += Fraction(ch.measure)
    return ExplicitTreeGrid(cells, labels=labels)


def measured_tree_of(grid: Grid, depth: int) -> MeasuredNode:
    def build(cell: GridCell) -> MeasuredNode:
        node = MeasuredNode(cell.address.word, cell.measure)
        if cell.level < depth and grid.child_count(cell.address):
            node.children = [build(ch) for ch in grid.children(cell)]
        return node

    return build(grid.root())


# serialization ------------------------------------------------------------

def grid_from_spec(spec: dict, cells: list | None = None,
                   depth_limit: int = DEFAULT_DEPTH_LIMIT) -> Grid:
    kind = spec.get("kind")
    if kind == "nadic":
        return NAdicGrid(int(spec["N"]), depth_limit=depth_limit)
    if kind == "weighted":
        return WeightedBinaryGrid(spec["a"], depth_limit=depth_limit)
    if kind == "image":
        return ImageGrid(grid_from_spec(spec["base"], depth_limit=depth_limit), spec["breakpoints"])
    if kind == "regrouped":
        base = grid_from_spec(spec["base"], depth_limit=depth_limit)
        return RegroupedGrid(base, int(spec["source_depth"]), int(spec["stride"]))
    if kind == "explicit":
        if not cells:
            raise GridError("explicit grid needs a cell list")
        return ExplicitTreeGrid(_parse_cells(cells))
    raise GridError(f"unknown grid generator {kind!r}")


def _parse_cells(cells):
    return [(CellAddress(c["address"]), parse_rational(c["a"]), parse_rational(c["b"])) for c in cells]


def grid_to_json(grid: Grid, depth: int | None = None) -> dict:
    """Interchange form; explicit grids always list every stored cell."""
    if isinstance(grid, ExplicitTreeGrid):
        cells = grid.all_cells()
    else:
        cells = []
        if depth is not None:
            level = [grid.root()]
            cells.extend(level)
            for _ in range(depth):
                level = [ch for c in level for ch in grid.children(c)]
                if len(cells) + len(level) > VALIDATION_GUARD:
                    raise EnumerationGuard("export would exceed the enumeration guard")
                cells.extend(level)
    return {
        "generator": grid.generator_spec(),
        "cells": [{"address": list(c.address.word), "a": format_rational(c.a),
                   "b": format_rational(c.b)} for c in cells],
    }


def grid_from_json(obj: dict, depth_limit: int = DEFAULT_DEPTH_LIMIT) -> Grid:
    spec = obj["generator"]
    cells = obj.get("cells") or []
    grid = grid_from_spec(spec, cells, depth_limit=depth_limit)
    if spec.get("kind") != "explicit":
        # listed cells must agree with the generator
        for addr, a, b in _parse_cells(cells):
            c = grid.cell(addr)
            if (c.a, c.b) != (a, b):
                raise GridError(f"cell {addr.word} disagrees with its generator")
    return grid
