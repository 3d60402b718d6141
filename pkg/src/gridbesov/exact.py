"""Exact arithmetic for measures raised to rational exponents.

Values are either ``Fraction`` or ``Surd``.  A ``Surd`` is a finite linear
combination, with rational coefficients, of radicals ``prod_p p**e_p`` where
each ``p`` is prime and ``0 < e_p < 1``.  Distinct radicals of that shape
are linearly independent over the rationals, so the canonical form gives
exact equality tests.  Anything that does not fit (roots of sums, huge
unfactorable integers) raises ``NotExact`` and callers drop to mpmath.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Union

import gmpy2
import mpmath

from .errors import NotExact

DPS = 60
# relative error claimed for values that went through 60-digit arithmetic
NUMERIC_REL_ERROR = mpmath.mpf(10) ** -45

_SMALL_PRIMES = [p for p in range(2, 2000) if all(p % d for d in range(2, math.isqrt(p) + 1))]
_FULL_FACTOR_BITS = 160

Key = tuple  # tuple[(prime, Fraction exponent), ...] sorted by prime


def _mp():
    mpmath.mp.dps = max(mpmath.mp.dps, DPS)
    return mpmath.mp


@lru_cache(maxsize=65536)
def factorize(n: int) -> tuple:
    """Prime factorization of a positive integer as ((p, k), ...)."""
    if n < 1:
        raise ValueError("factorize needs a positive integer")
    out: dict[int, int] = {}
    m = gmpy2.mpz(n)
    for p in _SMALL_PRIMES:
        if m == 1:
            break
        if m % p == 0:
            m, k = gmpy2.remove(m, p)
            out[p] = int(k)
    if m > 1:
        for q, k in _factor_cofactor(int(m)).items():
            out[q] = out.get(q, 0) + k
    return tuple(sorted(out.items()))


def _factor_cofactor(m: int) -> dict[int, int]:
    if gmpy2.is_prime(m, 40):
        return {m: 1}
    # perfect power of a prime or of a small composite
    for d in range(m.bit_length(), 1, -1):
        root, ok = gmpy2.iroot(m, d)
        if ok:
            base = _factor_cofactor(int(root))
            return {p: k * d for p, k in base.items()}
    if m.bit_length() > _FULL_FACTOR_BITS:
        raise NotExact(f"refusing to factor a {m.bit_length()}-bit integer")
    import sympy

    return {int(p): int(k) for p, k in sympy.factorint(m).items()}


def _canon_mul_keys(k1: Key, k2: Key) -> tuple[Fraction, Key]:
    """Multiply two radicals; returns (rational factor, radical key)."""
    if not k1:
        return Fraction(1), k2
    if not k2:
        return Fraction(1), k1
    exps = dict(k1)
    for p, e in k2:
        exps[p] = exps.get(p, Fraction(0)) + e
    factor = Fraction(1)
    key = []
    for p in sorted(exps):
        e = exps[p]
        if e >= 1:
            factor *= p
            e -= 1
        if e:
            key.append((p, e))
    return factor, tuple(key)


def _power_monomial(coef: Fraction, key: Key, r: Fraction) -> tuple[Fraction, Key]:
    """(coef * radical(key)) ** r for coef > 0."""
    if r.denominator == 1 and not key:
        return coef ** r.numerator, ()
    # try a direct root before factoring
    if not key:
        d = r.denominator
        a, ok_a = gmpy2.iroot(gmpy2.mpz(coef.numerator), d)
        b, ok_b = gmpy2.iroot(gmpy2.mpz(coef.denominator), d)
        if ok_a and ok_b:
            return Fraction(int(a), int(b)) ** r.numerator, ()
    exps: dict[int, Fraction] = {p: e for p, e in key}
    for p, k in factorize(coef.numerator):
        exps[p] = exps.get(p, Fraction(0)) + k
    for p, k in factorize(coef.denominator):
        exps[p] = exps.get(p, Fraction(0)) - k
    factor = Fraction(1)
    out = []
    for p in sorted(exps):
        e = exps[p] * r
        whole = math.floor(e)
        frac = e - whole
        if whole:
            factor *= Fraction(p) ** whole
        if frac:
            out.append((p, frac))
    return factor, tuple(out)


@lru_cache(maxsize=65536)
def _key_mpf(key: Key, dps: int) -> mpmath.mpf:
    with mpmath.workdps(dps):
        v = mpmath.mpf(1)
        for p, e in key:
            v *= mpmath.power(p, mpmath.mpf(e.numerator) / e.denominator)
        return +v


class Surd:
    """Exact real of the form sum_i c_i * prod_p p**e_{i,p}."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: dict | None = None):
        self.terms: dict[Key, Fraction] = {k: v for k, v in (terms or {}).items() if v}
        self._hash = None

    # construction
    @classmethod
    def power(cls, base, exponent) -> "ExactNum":
        """Exact ``base ** exponent`` for rational base >= 0 and rational exponent."""
        base = Fraction(base)
        exponent = Fraction(exponent)
        if base < 0:
            if exponent.denominator != 1:
                raise NotExact("negative base with fractional exponent")
            return Fraction(base) ** exponent.numerator
        if base == 0:
            if exponent <= 0:
                raise ZeroDivisionError("0 to a non-positive power")
            return Fraction(0)
        c, k = _power_monomial(base, (), exponent)
        return cls({k: c}).simplify()

    def simplify(self) -> "ExactNum":
        if not self.terms:
            return Fraction(0)
        if len(self.terms) == 1 and () in self.terms:
            return self.terms[()]
        return self

    # arithmetic
    @staticmethod
    def _terms_of(x) -> dict:
        if isinstance(x, Surd):
            return x.terms
        if isinstance(x, (int, Fraction)):
            return {(): Fraction(x)} if x else {}
        raise TypeError(f"unsupported operand {type(x).__name__}")

    def __add__(self, other):
        try:
            t2 = self._terms_of(other)
        except TypeError:
            return NotImplemented
        out = dict(self.terms)
        for k, v in t2.items():
            out[k] = out.get(k, 0) + v
        return Surd(out).simplify()

    __radd__ = __add__

    def __neg__(self):
        return Surd({k: -v for k, v in self.terms.items()})

    def __pos__(self):
        return self

    def __sub__(self, other):
        try:
            t2 = self._terms_of(other)
        except TypeError:
            return NotImplemented
        return self + Surd({k: -v for k, v in t2.items()})

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        try:
            t2 = self._terms_of(other)
        except TypeError:
            return NotImplemented
        out: dict[Key, Fraction] = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in t2.items():
                f, k = _canon_mul_keys(k1, k2)
                out[k] = out.get(k, 0) + c1 * c2 * f
        return Surd(out).simplify()

    __rmul__ = __mul__

    def _inverse(self):
        if len(self.terms) != 1:
            raise NotExact("inverse of a multi-term surd")
        (key, c), = self.terms.items()
        if c > 0:
            f, k = _power_monomial(c, key, Fraction(-1))
            return Surd({k: f}).simplify()
        f, k = _power_monomial(-c, key, Fraction(-1))
        return Surd({k: -f}).simplify()

    def __truediv__(self, other):
        if isinstance(other, Surd):
            return self * other._inverse()
        if isinstance(other, (int, Fraction)):
            return self * (Fraction(1) / Fraction(other))
        return NotImplemented

    def __rtruediv__(self, other):
        return Fraction(other) * self._inverse()

    def __pow__(self, exponent):
        exponent = Fraction(exponent)
        if exponent.denominator == 1:
            n = exponent.numerator
            base = self if n >= 0 else self._inverse()
            result: ExactNum = Fraction(1)
            sq = base
            n = abs(n)
            while n:
                if n & 1:
                    result = result * sq
                n >>= 1
                if n:
                    sq = sq * sq
            return result
        if len(self.terms) != 1:
            raise NotExact("fractional power of a multi-term surd")
        (key, c), = self.terms.items()
        if c < 0:
            raise NotExact("fractional power of a negative number")
        f, k = _power_monomial(c, key, exponent)
        return Surd({k: f}).simplify()

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # comparison
    def sign(self) -> int:
        if not self.terms:
            return 0
        if len(self.terms) == 1:
            return 1 if next(iter(self.terms.values())) > 0 else -1
        dps = DPS
        while True:
            with mpmath.workdps(dps + 10):
                v = self.to_mpf(dps)
                # each term carries relative error ~10^-dps
                bound = sum(abs(c) for c in self.terms.values()) * self._max_radical(dps)
                if abs(v) > bound * mpmath.mpf(10) ** (-dps + 5):
                    return 1 if v > 0 else -1
            dps *= 2
            if dps > 20000:  # pragma: no cover - independence guarantees nonzero
                raise NotExact("sign undetermined")

    def _max_radical(self, dps):
        return max(_key_mpf(k, dps) for k in self.terms)

    def to_mpf(self, dps: int = DPS) -> mpmath.mpf:
        with mpmath.workdps(dps):
            total = mpmath.mpf(0)
            for k, c in self.terms.items():
                total += mpmath.mpf(c.numerator) / c.denominator * _key_mpf(k, dps)
            return +total

    def __float__(self):
        return float(self.to_mpf())

    def __eq__(self, other):
        if isinstance(other, Surd):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == ({(): Fraction(other)} if other else {})
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def _cmp(self, other) -> int:
        return sign(self - other)

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __repr__(self):
        return f"Surd({format_exact(self)})"


ExactNum = Union[Fraction, Surd]
Number = Union[Fraction, Surd, mpmath.mpf]


def is_exact(x) -> bool:
    return isinstance(x, (int, Fraction, Surd))


def sign(x) -> int:
    if isinstance(x, Surd):
        return x.sign()
    return (x > 0) - (x < 0)


def exact_abs(x):
    if isinstance(x, Surd):
        return abs(x)
    return abs(x)


def exact_pow(base, exponent):
    """``base ** exponent`` staying exact when possible, else ``NotExact``."""
    exponent = Fraction(exponent)
    if isinstance(base, Surd):
        return base ** exponent
    base = Fraction(base)
    if exponent.denominator == 1:
        if base == 0 and exponent < 0:
            raise ZeroDivisionError("0 to a negative power")
        return base ** exponent.numerator
    return Surd.power(base, exponent)


def to_mpf(x, dps: int = DPS) -> mpmath.mpf:
    if isinstance(x, Surd):
        return x.to_mpf(dps)
    with mpmath.workdps(dps):
        if isinstance(x, Fraction):
            return mpmath.mpf(x.numerator) / x.denominator
        if isinstance(x, int):
            return mpmath.mpf(x)
        return mpmath.mpf(x)


def power_any(base, exponent):
    """Exact power when possible, otherwise a 60-digit mpf."""
    if is_exact(base):
        try:
            return exact_pow(base, exponent)
        except NotExact:
            pass
    with mpmath.workdps(DPS):
        e = Fraction(exponent)
        return mpmath.power(to_mpf(base), mpmath.mpf(e.numerator) / e.denominator)


def abs_any(x):
    if isinstance(x, Surd):
        return abs(x)
    return abs(x)


def sum_any(values):
    """Sum keeping exactness while all inputs are exact."""
    total = Fraction(0)
    numeric = None
    for v in values:
        if numeric is None and is_exact(v):
            total = total + v
        else:
            if numeric is None:
                numeric = to_mpf(total)
            with mpmath.workdps(DPS):
                numeric += to_mpf(v)
    return total if numeric is None else numeric


def parse_rational(text) -> Fraction:
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {text!r}") from exc


def format_rational(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def format_exact(x) -> str:
    """Canonical text for Fraction/Surd values; mpf gets 30 significant digits."""
    if isinstance(x, (int, Fraction)):
        return format_rational(Fraction(x))
    if isinstance(x, Surd):
        parts = []
        for key in sorted(x.terms, key=lambda k: tuple((p, e.numerator, e.denominator) for p, e in k)):
            c = x.terms[key]
            rad = "*".join(f"{p}^({e.numerator}/{e.denominator})" for p, e in key)
            parts.append(format_rational(c) + (f"*{rad}" if rad else ""))
        return " + ".join(parts)
    return mpmath.nstr(x, 30, min_fixed=-5, max_fixed=5)
