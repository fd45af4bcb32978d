"""Exact rational scalar utilities.

Everything downstream stores squared distances and squared radii as
`fractions.Fraction` values, so all geometric decisions reduce to integer
arithmetic.  Square roots enter only through the decision procedures below
(comparing sums of square roots of rationals is decidable by squaring twice)
and through directed rational enclosures used for diagnostics.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence

Q = Fraction

QZero = Q(0)
QOne = Q(1)


def as_q(x) -> Q:
    """Coerce ints / strings like '3/4' / Fractions to Fraction."""
    if isinstance(x, Q):
        return x
    if isinstance(x, int):
        return Q(x)
    if isinstance(x, str):
        return Q(x)
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


def q_str(x: Q) -> str:
    """Canonical 'p/q' string (plain integer string when q == 1)."""
    x = as_q(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# primitive integer normal forms
# ---------------------------------------------------------------------------

def primitive_vector(vec: Sequence) -> tuple[int, ...]:
    """Scale a nonzero rational vector to coprime integers, first nonzero > 0.

    The result is the canonical representative of the projective class, so
    projective equality becomes tuple equality.
    """
    fracs = [as_q(v) for v in vec]
    if all(f == 0 for f in fracs):
        raise ValueError("zero vector has no projective class")
    den = math.lcm(*(f.denominator for f in fracs))
    ints = [int(f * den) for f in fracs]
    g = math.gcd(*ints)
    ints = [v // g for v in ints]
    for v in ints:
        if v != 0:
            if v < 0:
                ints = [-w for w in ints]
            break
    return tuple(ints)


def int_gcd_content(vec: Sequence[int]) -> int:
    g = math.gcd(*(abs(v) for v in vec))
    return g if g else 1


# ---------------------------------------------------------------------------
# integer square-root enclosures
# ---------------------------------------------------------------------------

_DEFAULT_SCALE = 10 ** 15


def sqrt_lower(x: Q, scale: int = _DEFAULT_SCALE) -> Q:
    """Rational r with r <= sqrt(x); error < 1/scale for x <= scale-ish."""
    x = as_q(x)
    if x < 0:
        raise ValueError("negative radicand")
    p, q = x.numerator, x.denominator
    # sqrt(p/q) = sqrt(p*q)/q
    n = math.isqrt(p * q * scale * scale)
    return Q(n, q * scale)


def sqrt_upper(x: Q, scale: int = _DEFAULT_SCALE) -> Q:
    """Rational r with r >= sqrt(x)."""
    x = as_q(x)
    if x < 0:
        raise ValueError("negative radicand")
    if x == 0:
        return QZero
    p, q = x.numerator, x.denominator
    n = math.isqrt(p * q * scale * scale)
    if n * n < p * q * scale * scale:
        n += 1
    return Q(n, q * scale)


def sqrt_interval(x: Q, abs_tol: Q) -> tuple[Q, Q]:
    """Certified enclosure [lo, hi] of sqrt(x) with hi - lo <= abs_tol."""
    x = as_q(x)
    abs_tol = as_q(abs_tol)
    if abs_tol <= 0:
        raise ValueError("tolerance must be positive")
    scale = 2 * abs_tol.denominator * max(1, abs_tol.numerator)
    scale = max(scale, int(2 / abs_tol) + 1)
    lo, hi = sqrt_lower(x, scale), sqrt_upper(x, scale)
    while hi - lo > abs_tol:
        scale *= 4
        lo, hi = sqrt_lower(x, scale), sqrt_upper(x, scale)
    return lo, hi


# ---------------------------------------------------------------------------
# exact decision procedures for square-root comparisons
# ---------------------------------------------------------------------------

def cmp_sqrt_sum(a: Q, b: Q, c: Q) -> int:
    """Exact sign of (sqrt(a) + sqrt(b)) - sqrt(c) for nonnegative rationals."""
    a, b, c = as_q(a), as_q(b), as_q(c)
    if min(a, b, c) < 0:
        raise ValueError("radicands must be nonnegative")
    s = a + b
    if c < s:
        return 1
    if c == s:
        return 1 if a * b > 0 else 0
    # compare 2*sqrt(a*b) with t := c - s > 0
    t = c - s
    lhs, rhs = 4 * a * b, t * t
    return (lhs > rhs) - (lhs < rhs)


def sqrt_sum_le(a: Q, b: Q, c: Q) -> bool:
    """sqrt(a) + sqrt(b) <= sqrt(c), decided exactly."""
    return cmp_sqrt_sum(a, b, c) <= 0


def sqrt_sum_lt(a: Q, b: Q, c: Q) -> bool:
    """sqrt(a) + sqrt(b) < sqrt(c), decided exactly."""
    return cmp_sqrt_sum(a, b, c) < 0


def sqrt_le_sqrt_sum(a: Q, b: Q, c: Q) -> bool:
    """sqrt(a) <= sqrt(b) + sqrt(c): the triangle-inequality comparison."""
    return cmp_sqrt_sum(b, c, a) >= 0


# ---------------------------------------------------------------------------
# exact rational intervals (directed rounding is free over Q)
# ---------------------------------------------------------------------------

class Iv:
    """Closed rational interval [lo, hi]; arithmetic is outward-exact."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = as_q(lo)
        hi = lo if hi is None else as_q(hi)
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    def __repr__(self):
        return f"Iv({self.lo}, {self.hi})"

    def __add__(self, other):
        other = other if isinstance(other, Iv) else Iv(other)
        return Iv(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other):
        other = other if isinstance(other, Iv) else Iv(other)
        return Iv(self.lo - other.hi, self.hi - other.lo)

    def __mul__(self, other):
        other = other if isinstance(other, Iv) else Iv(other)
        cands = (self.lo * other.lo, self.lo * other.hi,
                 self.hi * other.lo, self.hi * other.hi)
        return Iv(min(cands), max(cands))

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other):
        return Iv(other) - self

    def __neg__(self):
        return Iv(-self.hi, -self.lo)

    def contains_zero(self) -> bool:
        return self.lo <= 0 <= self.hi

    def sign(self) -> int:
        """+1 / -1 when certified nonzero, 0 when the interval straddles 0."""
        if self.lo > 0:
            return 1
        if self.hi < 0:
            return -1
        return 0

    def width(self) -> Q:
        return self.hi - self.lo


def iv_dot(u: Sequence[Iv], v: Sequence[Iv]) -> Iv:
    acc = Iv(0)
    for a, b in zip(u, v, strict=True):
        acc = acc + a * b
    return acc


def iv_det(rows: Sequence[Sequence[Iv]]) -> Iv:
    """Interval determinant by cofactor expansion (small dimensions only)."""
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    acc = Iv(0)
    sign = 1
    for j in range(n):
        minor = [[row[k] for k in range(n) if k != j] for row in rows[1:]]
        term = rows[0][j] * iv_det(minor)
        acc = acc + (term if sign > 0 else -term)
        sign = -sign
    return acc
