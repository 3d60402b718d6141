"""Besov parameters, Souza-atom representations and the four computable norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import mpmath

from .errors import GridError, ParameterError
from .exact import (
    NUMERIC_REL_ERROR,
    abs_any,
    format_exact,
    format_rational,
    is_exact,
    parse_rational,
    power_any,
    sign,
    sum_any,
    to_mpf,
)
from .grid_core import ROOT, CellAddress, Grid, as_address
from .stepfun import (
    StepFunction,
    accumulate,
    conditional_expectation,
    lp_power,
    martingale_difference,
    osc_power,
    strict_ancestors,
)

INF = math.inf


@dataclass(frozen=True)
class BesovParams:
    s: Fraction
    p: Fraction
    q: Fraction | float  # math.inf allowed

    def __post_init__(self):
        s, p, q = self.s, self.p, self.q
        if p < 1:
            raise ParameterError(f"p must be >= 1, got {p}")
        if q != INF and q < 1:
            raise ParameterError(f"q must be >= 1, got {q}")
        if not 0 < s < 1 / p:
            raise ParameterError(f"need 0 < s < 1/p, got s={s}, p={p}")

    @classmethod
    def make(cls, s, p, q) -> "BesovParams":
        qv = INF if str(q).strip().lower() in ("inf", "infinity", "oo") else parse_rational(q)
        return cls(parse_rational(s), parse_rational(p), qv)

    @classmethod
    def parse(cls, text: str) -> "BesovParams":
        """Parse ``s=1/4,p=2,q=2`` (q defaults to p)."""
        vals = {}
        for part in text.split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise ParameterError(f"expected key=value in {text!r}")
            k, v = part.split("=", 1)
            vals[k.strip()] = v.strip()
        try:
            return cls.make(vals["s"], vals["p"], vals.get("q", vals["p"]))
        except KeyError as exc:
            raise ParameterError(f"missing parameter {exc.args[0]}") from None
        except ValueError as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(str(exc)) from None

    @property
    def q_is_inf(self) -> bool:
        return self.q == INF

    def to_json(self) -> dict:
        return {"s": format_rational(self.s), "p": format_rational(self.p),
                "q": "inf" if self.q_is_inf else format_rational(self.q)}


@dataclass
class NormResult:
    method: str
    params: BesovParams
    value: mpmath.mpf
    exact: object | None
    power_sum: object | None  # sum over levels of the q-th powers (finite q)
    error_bound: mpmath.mpf
    per_level: list[tuple[int, object]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "params": self.params.to_json(),
            "value": format_exact(self.value),
            "exact": None if self.exact is None else format_exact(self.exact),
            "error_bound": format_exact(self.error_bound),
            "per_level": [{"level": k, "term": format_exact(v)} for k, v in self.per_level],
        }


def _finish(method: str, level_inner: Mapping[int, object], params: BesovParams) -> NormResult:
    """Combine per-level inner sums S_k (already p-th powers) into the norm."""
    levels = sorted(level_inner)
    p, q = params.p, params.q
    if params.q_is_inf:
        terms = [(k, power_any(level_inner[k], 1 / p)) for k in levels]
        best = Fraction(0)
        for _, t in terms:
            if _gt(t, best):
                best = t
        value = best
        power_sum = None
    else:
        terms = [(k, power_any(level_inner[k], q / p)) for k in levels]
        power_sum = sum_any(t for _, t in terms)
        value = power_any(power_sum, 1 / q)
    exact = value if is_exact(value) else None
    mv = to_mpf(value)
    err = mpmath.mpf(0) if exact is not None else abs(mv) * NUMERIC_REL_ERROR * (len(levels) + 1)
    return NormResult(method, params, mv, exact, power_sum, err, terms)


def _gt(x, y) -> bool:
    if is_exact(x) and is_exact(y):
        return sign(x - y) > 0
    return to_mpf(x) > to_mpf(y)


# atoms and representations --------------------------------------------------

@dataclass
class AtomicRep:
    grid: Grid
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = {as_address(a): v for a, v in self.coeffs.items() if v != 0}

    def by_level(self) -> dict[int, list]:
        out: dict[int, list] = {}
        for a, v in self.coeffs.items():
            out.setdefault(a.level, []).append(v)
        return out

    def to_json(self) -> dict:
        return {"coeffs": [{"address": list(a.word), "value": format_exact(v)}
                           for a, v in sorted(self.coeffs.items(), key=lambda kv: kv[0].raw)]}


def atom_value(measure, params: BesovParams):
    """|Q|^(s - 1/p)."""
    return power_any(Fraction(measure), params.s - 1 / params.p)


def souza_atom(cell, params: BesovParams, grid: Grid) -> StepFunction:
    """The function |Q|^(s-1/p) 1_Q."""
    return StepFunction(grid, {cell.address: atom_value(cell.measure, params)})


def rep_norm(rep: AtomicRep, params: BesovParams) -> NormResult:
    p = params.p
    inner = {k: sum_any(power_any(abs_any(v), p) for v in vs) for k, vs in rep.by_level().items()}
    return _finish("rep", inner, params)


def rep_to_function(rep: AtomicRep, params: BesovParams) -> StepFunction:
    g = rep.grid
    items = [(a, v * atom_value(g.cell(a).measure, params)) for a, v in rep.coeffs.items()]
    return StepFunction(g, accumulate(g, items))


def subtree_integrals(f: StepFunction) -> dict[bytes, object]:
    """Integral of f over every piece and every strict ancestor of a piece."""
    g = f.grid
    parts: dict[bytes, list] = {}
    for a, v in f.pieces.items():
        val = v * g.cell(a).measure
        raw = a.raw
        for lv in range(len(raw) + 1):
            parts.setdefault(raw[:lv], []).append(val)
    return {k: sum_any(vs) for k, vs in parts.items()}


def greedy_atomic_decomposition(f: StepFunction, params: BesovParams) -> AtomicRep:
    """Telescoped martingale differences written in Souza atoms."""
    g = f.grid
    ints = subtree_integrals(f)
    expo = 1 / params.p - params.s
    coeffs = {}
    total = ints.get(b"", Fraction(0))
    if total != 0:
        coeffs[ROOT] = total  # |[0,1]| = 1
    for lv, nodes in strict_ancestors(f).items():
        for x in nodes:
            cx = g.cell(x)
            avg_x = ints[x.raw] / cx.measure
            for ch in g.children(cx):
                avg_c = ints.get(ch.address.raw, Fraction(0)) / ch.measure
                d = avg_c - avg_x
                if d != 0:
                    coeffs[ch.address] = d * power_any(ch.measure, expo)
    return AtomicRep(g, coeffs)


# martingale and oscillation norms -------------------------------------------

def martingale_norm(f: StepFunction, params: BesovParams, grid: Grid | None = None,
                    include_level0: bool = True) -> NormResult:
    """(sum_k (l_k^-s |d_k f|_p)^q)^(1/q), l_k the largest level-k measure."""
    g = grid or f.grid
    p, s = params.p, params.s
    inner = {}
    if include_level0:
        f0 = conditional_expectation(f, 0)
        inner[0] = lp_power(f0, p)
    for k in range(1, f.depth + 1):
        d = martingale_difference(f, k)
        if not d.pieces:
            continue
        lk = g.max_measure(k)
        inner[k] = power_any(lk, -s * p) * lp_power(d, p)
    return _finish("martingale", inner, params)


def oscillation_norm(f: StepFunction, params: BesovParams, grid: Grid | None = None,
                     mode: str = "inf", include_level0: bool = False) -> NormResult:
    """(sum_k (sum_Q |Q|^-sp osc_p(f,Q)^p)^(q/p))^(1/q).

    Cells of level k report under index k + 1, in line with the martingale
    difference d_(k+1) they control; index 0 holds the optional |f_0|_p term.
    """
    g = grid or f.grid
    p, s = params.p, params.s
    inner = {}
    if include_level0:
        inner[0] = lp_power(conditional_expectation(f, 0), p)
    for lv, nodes in sorted(strict_ancestors(f).items()):
        parts = []
        for x in nodes:
            c = g.cell(x)
            o = osc_power(f, c, p, mode)
            if o != 0:
                parts.append(power_any(c.measure, -s * p) * o)
        if parts:
            inner[lv + 1] = sum_any(parts)
    return _finish("osc", inner, params)


# Haar system -----------------------------------------------------------------

@dataclass
class HaarCoeffs:
    """d_S keyed by the parent cell of the sibling pair (binary grids: one pair)."""

    grid: Grid
    coeffs: dict = field(default_factory=dict)
    mean: object = Fraction(0)

    def to_json(self) -> dict:
        return {
            "mean": format_exact(self.mean),
            "coeffs": [{"parent": list(a.word), "pair": 0, "value": format_exact(v)}
                       for a, v in sorted(self.coeffs.items(), key=lambda kv: kv[0].raw)],
        }


def haar_scale(cell_a, cell_b):
    """(1/|A| + 1/|B|)^(-1/2)."""
    ma, mb = cell_a.measure, cell_b.measure
    return power_any(ma * mb / (ma + mb), Fraction(1, 2))


def haar_pair_values(grid: Grid, parent_cell, coefficient) -> list[tuple[CellAddress, object]]:
    """coefficient * phi_S as (cell, value) items."""
    A, B = grid.children(parent_cell)
    k = haar_scale(A, B)
    return [(A.address, coefficient * k / A.measure), (B.address, -coefficient * k / B.measure)]


def _require_binary(grid: Grid):
    if not grid.is_binary:
        raise GridError("the Haar system is implemented for binary grids only")


def haar_expand(f: StepFunction, grid: Grid | None = None) -> HaarCoeffs:
    """Coefficients <f, phi_S> for every pair with a nonzero coefficient.

    Works on the compressed tree of the pieces (branch points only); long
    single-path chains are enumerated only when their subtree integral is
    nonzero, because otherwise every coefficient along them vanishes.
    """
    g = grid or f.grid
    _require_binary(g)
    keys = sorted(a.raw for a in f.pieces)
    nodes = {b""}
    nodes.update(keys)
    for x, y in zip(keys, keys[1:]):
        nodes.add(CellAddress(x).common_ancestor(CellAddress(y)).raw)
    ordered = sorted(nodes)
    children: dict[bytes, list[bytes]] = {n: [] for n in ordered}
    stack: list[bytes] = []
    for n in ordered:
        while stack and not n.startswith(stack[-1]):
            stack.pop()
        if stack:
            children[stack[-1]].append(n)
        stack.append(n)
    piece_val = {a.raw: v for a, v in f.pieces.items()}
    integral: dict[bytes, object] = {}
    for n in reversed(ordered):
        if n in piece_val:
            integral[n] = piece_val[n] * g.cell(CellAddress(n)).measure
        else:
            integral[n] = sum_any(integral[c] for c in children[n])
    coeffs = {}

    def put(raw: bytes, ia, ib):
        if ia == 0 and ib == 0:
            return
        cell = g.cell(CellAddress(raw))
        A, B = g.children(cell)
        d = haar_scale(A, B) * (ia / A.measure - ib / B.measure)
        if d != 0:
            coeffs[cell.address] = d

    for n in ordered:
        if n in piece_val:
            continue
        kids = children[n]
        lv = len(n)
        side = [Fraction(0), Fraction(0)]
        for c in kids:
            side[c[lv]] = side[c[lv]] + integral[c]
        put(n, side[0], side[1])
        for c in kids:
            if integral[c] == 0:
                continue
            for j in range(lv + 1, len(c)):
                if c[j] == 0:
                    put(c[:j], integral[c], Fraction(0))
                else:
                    put(c[:j], Fraction(0), integral[c])
    return HaarCoeffs(g, coeffs, integral[b""])


def haar_reconstruct(coeffs: HaarCoeffs) -> StepFunction:
    g = coeffs.grid
    items = [(ROOT, coeffs.mean)]
    for a, d in coeffs.coeffs.items():
        items.extend(haar_pair_values(g, g.cell(a), d))
    return StepFunction(g, accumulate(g, items))


def haar_norm(coeffs: HaarCoeffs, params: BesovParams, include_level0: bool = False) -> NormResult:
    """Each d_S weighted by |Q_S|^(1/p-s-1/2); pairs under a level-k parent
    report under index k + 1, index 0 holds the optional |mean| term."""
    g = coeffs.grid
    p, s = params.p, params.s
    w = (1 / p - s - Fraction(1, 2)) * p
    inner: dict[int, list] = {}
    if include_level0 and coeffs.mean != 0:
        inner[0] = [power_any(abs_any(coeffs.mean), p)]
    for a, d in coeffs.coeffs.items():
        term = power_any(abs_any(d), p) * power_any(g.cell(a).measure, w)
        inner.setdefault(a.level + 1, []).append(term)
    return _finish("haar", {k: sum_any(v) for k, v in inner.items()}, params)


def norm_report(f: StepFunction, params: BesovParams, methods=("rep", "martingale", "osc", "haar"),
                include_level0: bool = True) -> dict:
    """All requested norms under one k=0 convention."""
    out = {}
    for m in methods:
        if m == "rep":
            rep = greedy_atomic_decomposition(f, params)
            if not include_level0:
                rep = AtomicRep(rep.grid, {a: v for a, v in rep.coeffs.items() if a.level > 0})
            out[m] = rep_norm(rep, params)
        elif m == "martingale":
            out[m] = martingale_norm(f, params, include_level0=include_level0)
        elif m == "osc":
            out[m] = oscillation_norm(f, params, include_level0=include_level0)
        elif m == "haar":
            out[m] = haar_norm(haar_expand(f), params, include_level0=include_level0)
        else:
            raise ParameterError(f"unknown norm method {m!r}")
    return out
