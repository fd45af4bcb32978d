"""Exact projective geometry over the rationals with place-aware norms.

Points, hyperplanes and subspaces of P(Q^n) are stored as primitive integer
data, so equality is structural.  Distances are returned as exact rational
*squares* of the chordal metric

    d(v, w) = |v ^ w| / (|v| |w|),

with the Euclidean norm at the archimedean place and the max norm with p-adic
absolute values at a finite place.  All neighborhood tests (membership,
disjointness, containment of metric balls) reduce to exact comparisons of
square roots of rationals, which are decidable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

from . import linalg
from .rat import (Q, as_q, cmp_sqrt_sum, primitive_vector, sqrt_sum_le,
                  sqrt_sum_lt)


class DimensionMismatch(ValueError):
    pass


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# places
# ---------------------------------------------------------------------------

def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    if p < 4:
        return True
    if p % 2 == 0:
        return False
    f = 3
    while f * f <= p:
        if p % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class Place:
    """An archimedean or p-adic place of Q."""

    kind: str  # "arch" | "padic"
    prime: int | None = None

    def __post_init__(self):
        if self.kind not in ("arch", "padic"):
            raise ValueError(f"unknown place kind {self.kind!r}")
        if self.kind == "padic":
            if self.prime is None or not _is_prime(self.prime):
                raise ValueError(f"{self.prime!r} is not prime")
        elif self.prime is not None:
            raise ValueError("archimedean place carries no prime")

    @property
    def archimedean(self) -> bool:
        return self.kind == "arch"


ARCH = Place("arch")


def padic_abs_sq(place: Place, x: Q) -> Q:
    """|x|_p^2 as an exact rational."""
    x = as_q(x)
    if x == 0:
        return Q(0)
    p = place.prime
    v = 0
    num, den = x.numerator, x.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return Q(1, p ** (2 * v)) if v >= 0 else Q(p ** (-2 * v))


def norm_sq(place: Place, v: Sequence) -> Q:
    """Squared standard norm of a rational vector at the given place."""
    vv = [as_q(x) for x in v]
    if place.archimedean:
        return sum(x * x for x in vv)
    return max(padic_abs_sq(place, x) for x in vv)


def _wedge_coords(u: Sequence[Q], v: Sequence[Q]) -> list[Q]:
    n = len(u)
    return [u[i] * v[j] - u[j] * v[i]
            for i in range(n) for j in range(i + 1, n)]


# ---------------------------------------------------------------------------
# projective objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjPoint:
    """Point of P(Q^n): primitive integer coordinates, canonical sign."""

    coords: tuple[int, ...]

    @staticmethod
    def of(entries: Sequence) -> "ProjPoint":
        return ProjPoint(primitive_vector(entries))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def apply(self, g: linalg.Mat) -> "ProjPoint":
        return ProjPoint.of(linalg.mat_vec(g, linalg.vec(self.coords)))


@dataclass(frozen=True)
class ProjHyperplane:
    """Hyperplane of P(Q^n) given by a primitive integer functional."""

    functional: tuple[int, ...]

    @staticmethod
    def of(entries: Sequence) -> "ProjHyperplane":
        return ProjHyperplane(primitive_vector(entries))

    @property
    def dim(self) -> int:
        return len(self.functional)

    def contains(self, x: ProjPoint) -> bool:
        _check_dim(self, x)
        return sum(f * c for f, c in zip(self.functional, x.coords)) == 0

    def apply(self, g: linalg.Mat) -> "ProjHyperplane":
        """Image hyperplane g(H): functional transforms by g^{-T}."""
        ginv = linalg.mat_inv(g)
        return ProjHyperplane.of(
            linalg.vec_mat(linalg.vec(self.functional), ginv))


@dataclass(frozen=True)
class ProjSubspace:
    """Projective subspace spanned by the rows of a canonical echelon basis."""

    basis: tuple[tuple[Q, ...], ...]

    @staticmethod
    def of(rows: Sequence[Sequence]) -> "ProjSubspace":
        reduced, pivots = linalg.rref(rows)
        if not pivots:
            raise GeometryError("zero subspace is not projective")
        return ProjSubspace(tuple(tuple(r) for r in reduced))

    @property
    def dim(self) -> int:
        return len(self.basis[0])

    @property
    def proj_dim(self) -> int:
        return len(self.basis) - 1

    def contains(self, x: ProjPoint) -> bool:
        _check_dim(self, x)
        stacked = list(self.basis) + [linalg.vec(x.coords)]
        return linalg.rank(stacked) == len(self.basis)

    def apply(self, g: linalg.Mat) -> "ProjSubspace":
        return ProjSubspace.of([linalg.mat_vec(g, linalg.vec(b)) for b in self.basis])

    def normal_functional(self) -> ProjHyperplane:
        """For a codimension-1 subspace, the defining functional."""
        if len(self.basis) != self.dim - 1:
            raise GeometryError("subspace is not a hyperplane")
        ker = linalg.kernel_basis(self.basis)
        if len(ker) != 1:
            raise GeometryError("degenerate basis")
        return ProjHyperplane.of(ker[0])

    @staticmethod
    def from_hyperplane(h: ProjHyperplane) -> "ProjSubspace":
        ker = linalg.kernel_basis([linalg.vec(h.functional)])
        return ProjSubspace.of(ker)


ProjObject = Union[ProjPoint, ProjHyperplane, ProjSubspace]


def _check_dim(a, b):
    da = a.dim if hasattr(a, "dim") else len(a)
    db = b.dim if hasattr(b, "dim") else len(b)
    if da != db:
        raise DimensionMismatch(f"ambient dimensions differ: {da} vs {db}")


# ---------------------------------------------------------------------------
# distances (all squared, all exact)
# ---------------------------------------------------------------------------

def proj_distance_sq(place: Place, x: ProjPoint, y: ProjPoint) -> Q:
    """d(x, y)^2 = |x ^ y|^2 / (|x|^2 |y|^2); in [0, 1], 0 iff x == y."""
    _check_dim(x, y)
    u = linalg.vec(x.coords)
    v = linalg.vec(y.coords)
    w = _wedge_coords(u, v)
    if all(c == 0 for c in w):
        return Q(0)
    if place.archimedean:
        return sum(c * c for c in w) / (norm_sq(place, u) * norm_sq(place, v))
    wn = max(padic_abs_sq(place, c) for c in w)
    return wn / (norm_sq(place, u) * norm_sq(place, v))


def _subspace_rows(l: ProjSubspace | ProjHyperplane) -> list[linalg.Vec]:
    if isinstance(l, ProjHyperplane):
        return [linalg.vec(b) for b in ProjSubspace.from_hyperplane(l).basis]
    return [linalg.vec(b) for b in l.basis]


def point_subspace_distance_sq(place: Place, x: ProjPoint,
                               l: ProjSubspace | ProjHyperplane) -> Q:
    """Squared distance from a point to a projective subspace.

    Computed through wedge norms: |v ^ b_1 ^ ... ^ b_k| / (|v| |b_1 ^ ... ^ b_k|),
    which at the archimedean place agrees with orthogonal projection and at a
    finite place realizes the valuation minimum.
    """
    _check_dim(x, l)
    if isinstance(l, ProjHyperplane):
        f = linalg.vec(l.functional)
        v = linalg.vec(x.coords)
        val = linalg.dot(f, v)
        if val == 0:
            return Q(0)
        if place.archimedean:
            return val * val / (norm_sq(place, f) * norm_sq(place, v))
        return padic_abs_sq(place, val) / (norm_sq(place, f) * norm_sq(place, v))
    rows = _subspace_rows(l)
    v = linalg.vec(x.coords)
    k = len(rows)
    big = minors_norm_sq(place, rows + [v], k + 1)
    small = minors_norm_sq(place, rows, k)
    if big == 0:
        return Q(0)
    return big / (small * norm_sq(place, v))


def minors_norm_sq(place: Place, rows: list[linalg.Vec], k: int) -> Q:
    ms = linalg.minors(rows, k)
    if not ms:
        raise GeometryError("no minors of requested size")
    if place.archimedean:
        return sum(m * m for m in ms)
    return max(padic_abs_sq(place, m) for m in ms)


class IrrationalDistance(GeometryError):
    """The exact squared distance is a non-rational algebraic number."""


def subspace_distance_sq(place: Place, l1: ProjSubspace, l2: ProjSubspace) -> Q:
    """Squared max-min distance between equal-dimensional subspaces.

    Exactly rational for points, for codimension-1 subspaces, and whenever the
    extremal principal angle is rational-squared; otherwise raises
    IrrationalDistance.  Equality of subspaces gives 0.
    """
    _check_dim(l1, l2)
    if l1.proj_dim != l2.proj_dim:
        raise DimensionMismatch("subspace distance needs equal projective dimension")
    if l1.basis == l2.basis:
        return Q(0)
    if l1.proj_dim == 0:
        return proj_distance_sq(place, ProjPoint.of(l1.basis[0]),
                                ProjPoint.of(l2.basis[0]))
    if len(l1.basis) == l1.dim - 1:
        # single nonzero principal angle: the angle between the normals
        n1 = l1.normal_functional()
        n2 = l2.normal_functional()
        return proj_distance_sq(place, ProjPoint.of(n1.functional),
                                ProjPoint.of(n2.functional))
    if not place.archimedean:
        raise IrrationalDistance(
            "general nonarchimedean subspace distance not supported")
    return _pencil_max_sin_sq(l1, l2)


def _pencil_max_sin_sq(l1: ProjSubspace, l2: ProjSubspace) -> Q:
    """Largest generalized eigenvalue of the sin^2 pencil, both directions."""
    from .roots import isolate_real_roots, poly_eval, refine_root

    best = Q(0)
    for a, b in ((l1, l2), (l2, l1)):
        c = linalg.mat(a.basis)
        rows2 = _subspace_rows(b)
        c2 = linalg.mat(rows2)
        g2 = linalg.mat_mul(c2, linalg.transpose(c2))
        p2 = linalg.mat_mul(linalg.mat_mul(linalg.transpose(c2), linalg.mat_inv(g2)), c2)
        n = a.dim
        resid = linalg.mat_sub(linalg.identity(n), p2)
        amat = linalg.mat_mul(linalg.mat_mul(c, resid), linalg.transpose(c))
        bmat = linalg.mat_mul(c, linalg.transpose(c))
        m = linalg.mat_mul(linalg.mat_inv(bmat), amat)
        cp = linalg.charpoly(m)
        roots = isolate_real_roots(cp)
        if not roots:
            continue
        lo, hi = roots[-1]
        lo, hi = refine_root(cp, lo, hi, Q(1, 10 ** 24))
        if lo == hi:
            best = max(best, lo)
            continue
        # try to recognize an exact rational root inside the refined interval
        for cand in _rational_candidates(cp, lo, hi):
            if poly_eval(cp, cand) == 0:
                best = max(best, cand)
                break
        else:
            raise IrrationalDistance(
                f"extremal principal angle in ({lo}, {hi}] is irrational")
    return best


def _rational_candidates(p, lo, hi):
    import math
    den = math.lcm(*(c.denominator for c in p))
    ip = [int(c * den) for c in p]
    while ip and ip[0] == 0:
        ip = ip[1:]
    if not ip:
        return
    a0, an = abs(ip[0]), abs(ip[-1])
    for qd in _divisors(an):
        for pn in _divisors(a0):
            for s in (1, -1):
                cand = Q(s * pn, qd)
                if lo < cand <= hi:
                    yield cand


def _divisors(n: int):
    n = abs(n)
    out = set()
    f = 1
    while f * f <= n:
        if n % f == 0:
            out.add(f)
            out.add(n // f)
        f += 1
    return sorted(out)


# ---------------------------------------------------------------------------
# M-flags
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MFlag:
    """A hyperplane together with a point lying on it."""

    hyperplane: ProjHyperplane
    point: ProjPoint

    def __post_init__(self):
        if not self.hyperplane.contains(self.point):
            raise GeometryError("flag point must lie on the flag hyperplane")

    @property
    def dim(self) -> int:
        return self.hyperplane.dim

    def apply(self, g: linalg.Mat) -> "MFlag":
        return MFlag(self.hyperplane.apply(g), self.point.apply(g))


def mflag_touches(a: MFlag, b: MFlag) -> bool:
    """Two flags touch when either point lies on the other hyperplane."""
    _check_dim(a, b)
    return b.hyperplane.contains(a.point) or a.hyperplane.contains(b.point)


def is_general_position(flags: Sequence[MFlag]) -> bool:
    """Every n-subset of hyperplanes meets trivially and every n-subset of
    points spans, checked by exact rank computations."""
    if not flags:
        raise GeometryError("empty flag family")
    n = flags[0].dim
    if any(f.dim != n for f in flags):
        raise DimensionMismatch("flags live in different spaces")
    if len(flags) < n:
        raise GeometryError(f"need at least {n} flags")
    for subset in itertools.combinations(flags, n):
        funcs = [linalg.vec(f.hyperplane.functional) for f in subset]
        if linalg.rank(funcs) < n:
            return False
        pts = [linalg.vec(f.point.coords) for f in subset]
        if linalg.rank(pts) < n:
            return False
    return True


# ---------------------------------------------------------------------------
# metric balls
# ---------------------------------------------------------------------------

def _center_distance_sq(place: Place, center: ProjObject, x: ProjPoint) -> Q:
    if isinstance(center, ProjPoint):
        return proj_distance_sq(place, x, center)
    return point_subspace_distance_sq(place, x, center)


@dataclass(frozen=True)
class Ball:
    """Metric neighborhood of a point / hyperplane / subspace.

    closed=True is the [A]_eps form, closed=False the open (A)_eps form.
    """

    center: ProjObject
    radius_sq: Q
    closed: bool = True

    def __post_init__(self):
        r = as_q(self.radius_sq)
        if not (0 < r < 1):
            raise GeometryError("radius_sq must lie in (0, 1)")
        object.__setattr__(self, "radius_sq", r)

    @property
    def dim(self) -> int:
        return self.center.dim

    def contains_point(self, place: Place, x: ProjPoint) -> bool:
        d = _center_distance_sq(place, self.center, x)
        return d <= self.radius_sq if self.closed else d < self.radius_sq


def center_to_center_distance_sq(place: Place, a: ProjObject, b: ProjObject) -> Q:
    if isinstance(a, ProjPoint) and isinstance(b, ProjPoint):
        return proj_distance_sq(place, a, b)
    if isinstance(a, ProjPoint):
        return point_subspace_distance_sq(place, a, b)
    if isinstance(b, ProjPoint):
        return point_subspace_distance_sq(place, b, a)
    sa = a if isinstance(a, ProjSubspace) else ProjSubspace.from_hyperplane(a)
    sb = b if isinstance(b, ProjSubspace) else ProjSubspace.from_hyperplane(b)
    return subspace_distance_sq(place, sa, sb)


def ball_coordinate_intervals(ball: Ball) -> list:
    """Interval vector certain to contain a representative of every point
    (or hyperplane normal) in the ball.

    A point at chordal distance <= rho from the center c admits a
    representative within Euclidean distance tan(arcsin rho) * |c| of c.
    """
    from .rat import Iv, sqrt_upper
    center = ball.center
    if isinstance(center, ProjPoint):
        coords = center.coords
    elif isinstance(center, ProjHyperplane):
        coords = center.functional
    else:
        raise GeometryError("subspace balls have no coordinate enclosure")
    rho_sq = ball.radius_sq
    n_sq = sum(Q(c) * c for c in coords)
    t = sqrt_upper(rho_sq / (1 - rho_sq) * n_sq)
    return [Iv(Q(c) - t, Q(c) + t) for c in coords]


def balls_disjoint(place: Place, a: Ball, b: Ball) -> bool:
    """Certified disjointness: center distance exceeds the radius sum.

    Sufficient in any metric space; exact arithmetic throughout.  For two
    open balls the comparison is non-strict.
    """
    d = center_to_center_distance_sq(place, a.center, b.center)
    if a.closed or b.closed:
        return sqrt_sum_lt(a.radius_sq, b.radius_sq, d)
    return sqrt_sum_le(a.radius_sq, b.radius_sq, d)


def ball_contains_ball(place: Place, outer: Ball, inner: Ball) -> bool:
    """Certified containment: d(centers) + r_inner <= r_outer.

    When the inner ball is closed and the outer open the comparison must be
    strict.
    """
    d = center_to_center_distance_sq(place, outer.center, inner.center)
    if inner.closed and not outer.closed:
        return cmp_sqrt_sum(d, inner.radius_sq, outer.radius_sq) < 0
    return cmp_sqrt_sum(d, inner.radius_sq, outer.radius_sq) <= 0
