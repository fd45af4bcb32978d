"""Rank-1 unipotent calculus in SL_n(Z).

A rank-1 unipotent u = I + N (N = u - I of rank 1, N^2 = 0) is determined up
to powers by its flag: the attraction point p_u (image line of N) and fixed
hyperplane L_u (kernel of N, an (n-2)-dimensional projective subspace).  The
closed form u^k = I + k N turns the dynamics into an exact inequality: this
module derives certified minimal powers, verifies Schottky systems built from
such elements, constructs commuting Z^2 pairs, and runs the deterministic
steering search that moves one rational flag close to another inside SL_n(Z)
or a congruence kernel.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from . import linalg
from .exactlin import (ARCH, Ball, GeometryError, Place, ProjHyperplane,
                       ProjPoint, ProjSubspace, balls_disjoint,
                       ball_contains_ball, point_subspace_distance_sq,
                       proj_distance_sq, subspace_distance_sq)
from .rat import Q, as_q, primitive_vector


class UnipotentError(ValueError):
    pass


class SearchBudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# rank-1 unipotents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankOneUnipotent:
    """u = I + scale * v f^T with f(v) = 0, v and f primitive integer."""

    matrix: linalg.Mat
    point: ProjPoint            # p_u: projective image line of u - I
    hyperplane: ProjSubspace    # L_u: projectivized kernel of u - I
    scale: int                  # integer multiplier of the primitive dyad
    v0: tuple[int, ...]
    f0: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.matrix)

    def nilpart(self) -> linalg.Mat:
        return linalg.mat_sub(self.matrix, linalg.identity(self.dim))

    def power(self, k: int) -> "RankOneUnipotent":
        """u^k = I + k N, exactly."""
        if k == 0:
            raise UnipotentError("zero power is not rank-1 unipotent")
        n = self.dim
        mat = tuple(tuple((Q(1) if i == j else Q(0))
                          + k * self.scale * self.v0[i] * self.f0[j]
                          for j in range(n)) for i in range(n))
        sc = k * self.scale
        if sc < 0:
            return RankOneUnipotent(mat, self.point, self.hyperplane, -sc,
                                    self.v0, tuple(-f for f in self.f0))
        return RankOneUnipotent(mat, self.point, self.hyperplane, sc,
                                self.v0, self.f0)


def attraction_data(u) -> tuple[ProjPoint, ProjSubspace]:
    """(p_u, L_u) of a rank-1 unipotent integer matrix, exactly."""
    return _analyze(linalg.mat(u))[1:3]


def _analyze(u: linalg.Mat) -> tuple[linalg.Mat, ProjPoint, ProjSubspace,
                                     int, tuple[int, ...], tuple[int, ...]]:
    n = len(u)
    if not linalg.is_integer_matrix(u):
        raise UnipotentError("matrix must be integral")
    if linalg.det(u) != 1:
        raise UnipotentError("matrix must have determinant 1")
    nil = linalg.mat_sub(u, linalg.identity(n))
    if all(x == 0 for row in nil for x in row):
        raise UnipotentError("identity is not a rank-1 unipotent")
    if linalg.rank(nil) != 1:
        raise UnipotentError("u - I must have rank 1")
    sq = linalg.mat_mul(nil, nil)
    if any(x != 0 for row in sq for x in row):
        raise UnipotentError("(u - I)^2 must vanish")
    col = next(j for j in range(n) if any(nil[i][j] != 0 for i in range(n)))
    v0 = primitive_vector([nil[i][col] for i in range(n)])
    i0 = next(i for i in range(n) if v0[i] != 0)
    row = [nil[i0][j] / v0[i0] for j in range(n)]
    f0 = primitive_vector(row)
    # recover the integer scale: nil = scale * v0 f0^T
    j0 = next(j for j in range(n) if f0[j] != 0)
    scale_q = Q(int(nil[i0][j0]), v0[i0] * f0[j0])
    if scale_q.denominator != 1:
        raise UnipotentError("nilpart is not an integer dyad")
    scale = int(scale_q)
    if scale < 0:
        f0 = tuple(-x for x in f0)
        scale = -scale
    for i in range(n):
        for j in range(n):
            if nil[i][j] != scale * v0[i] * f0[j]:
                raise UnipotentError("nilpart failed dyad reconstruction")
    point = ProjPoint(v0)
    hyperplane = ProjSubspace.of(linalg.kernel_basis([linalg.vec(f0)]))
    return u, point, hyperplane, scale, v0, f0


def rank_one_unipotent(u) -> RankOneUnipotent:
    return RankOneUnipotent(*_analyze(linalg.mat(u)))


def from_flag(p: ProjPoint, l: ProjSubspace) -> RankOneUnipotent:
    """The primitive rank-1 unipotent with attraction point p and fixed
    hyperplane l (requires p in l and l of projective dimension n-2)."""
    n = p.dim
    if l.proj_dim != n - 2:
        raise UnipotentError("fixed subspace must have projective dim n-2")
    if not l.contains(p):
        raise UnipotentError("attraction point must lie on the fixed subspace")
    f = l.normal_functional().functional
    v = p.coords
    if sum(a * b for a, b in zip(f, v)) != 0:
        raise UnipotentError("flag is not isotropic (internal inconsistency)")
    mat = tuple(tuple((Q(1) if i == j else Q(0)) + v[i] * f[j]
                      for j in range(n)) for i in range(n))
    return rank_one_unipotent(mat)


def _hyperplane_functional(l: ProjSubspace) -> tuple[int, ...]:
    return l.normal_functional().functional


def min_power(u: RankOneUnipotent, epsilon_sq, delta_sq) -> int:
    """Least m such that every nonzero power of u^m maps the complement of
    the open delta-neighborhood of L_u into the open epsilon-ball around p_u.

    Uses the closed form (u^m)^k = I + k m N: for x at distance >= delta from
    L_u one gets d((I + tN)x, p_u) <= 1 / (|t| delta |f||v| - 1), so it
    suffices that m * scale * delta * |f| * |v| >= 1 + 1/epsilon, the |k| = 1
    worst case; decided exactly on squares.
    """
    epsilon_sq, delta_sq = as_q(epsilon_sq), as_q(delta_sq)
    if not (0 < epsilon_sq <= delta_sq < 1):
        raise UnipotentError("need 0 < epsilon_sq <= delta_sq < 1")
    f_sq = sum(x * x for x in u.f0)
    v_sq = sum(x * x for x in u.v0)

    def sufficient(m: int) -> bool:
        a = Q(m * m * u.scale * u.scale) * delta_sq * f_sq * v_sq
        b = 1 / epsilon_sq
        lhs = a - 1 - b
        return lhs >= 0 and lhs * lhs >= 4 * b

    m = 1
    while not sufficient(m):
        m *= 2
    lo, hi = m // 2, m
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if sufficient(mid):
            hi = mid
        else:
            lo = mid
    return hi


def power_is_sufficient(u: RankOneUnipotent, epsilon_sq, delta_sq) -> bool:
    """Condition (1) check on a stored (already powered) element."""
    return min_power(u, epsilon_sq, delta_sq) == 1


# ---------------------------------------------------------------------------
# Schottky systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemElement:
    unipotent: RankOneUnipotent
    epsilon_sq: Q
    delta_sq: Q


@dataclass(frozen=True)
class SchottkySystem:
    elements: tuple[SystemElement, ...]
    attracting: tuple[Ball, ...]   # the set A as a finite union of balls
    repelling: tuple[Ball, ...]    # the set R as a finite union of balls
    place: Place = ARCH


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    conditions: dict
    messages: tuple[str, ...]

    def __bool__(self):
        return self.ok


def _point_ball(e: SystemElement) -> Ball:
    return Ball(e.unipotent.point, e.epsilon_sq, closed=False)


def _plane_ball(e: SystemElement) -> Ball:
    return Ball(e.unipotent.hyperplane, e.delta_sq, closed=False)


def verify_system(s: SchottkySystem) -> VerificationReport:
    """Check conditions (1)-(4) of the Schottky-system definition plus the
    containment A inside R, all by exact arithmetic; never raises."""
    msgs: list[str] = []
    conds = {"powers": True, "cross_disjoint": True,
             "points_in_A": True, "planes_in_R": True, "A_in_R": True}
    place = s.place
    for idx, e in enumerate(s.elements):
        if e.delta_sq < e.epsilon_sq:
            conds["powers"] = False
            msgs.append(f"element {idx}: delta_sq < epsilon_sq")
            continue
        if not power_is_sufficient(e.unipotent, e.epsilon_sq, e.delta_sq):
            conds["powers"] = False
            msgs.append(f"element {idx}: stored power fails the dynamics bound")
    for i, j in itertools.permutations(range(len(s.elements)), 2):
        if not balls_disjoint(place, _point_ball(s.elements[i]),
                              _plane_ball(s.elements[j])):
            conds["cross_disjoint"] = False
            msgs.append(f"(p_{i})_eps meets (L_{j})_delta")
    for idx, e in enumerate(s.elements):
        if not any(ball_contains_ball(place, a, _point_ball(e))
                   for a in s.attracting):
            conds["points_in_A"] = False
            msgs.append(f"(p_{idx})_eps escapes the attracting set")
        if not any(ball_contains_ball(place, r, _plane_ball(e))
                   for r in s.repelling):
            conds["planes_in_R"] = False
            msgs.append(f"(L_{idx})_delta escapes the repelling set")
    for k, a in enumerate(s.attracting):
        if not any(ball_contains_ball(place, r, a) for r in s.repelling):
            conds["A_in_R"] = False
            msgs.append(f"attracting ball {k} is not inside the repelling set")
    return VerificationReport(all(conds.values()), conds, tuple(msgs))


def empty_system(n: int, attracting=(), repelling=(),
                 place: Place = ARCH) -> SchottkySystem:
    return SchottkySystem((), tuple(attracting), tuple(repelling), place)


def add_flag(s: SchottkySystem, p: ProjPoint, l: ProjSubspace,
             epsilon_sq, delta_sq) -> SchottkySystem:
    """Adjoin the powered unipotent with flag (p, l), enlarging A and R by
    the closed balls [p]_eps and [l]_delta."""
    epsilon_sq, delta_sq = as_q(epsilon_sq), as_q(delta_sq)
    if not (0 < epsilon_sq <= delta_sq):
        raise UnipotentError("need delta >= epsilon > 0")
    new_a = Ball(p, epsilon_sq, closed=True)
    new_r = Ball(l, delta_sq, closed=True)
    for a in s.attracting:
        if not balls_disjoint(s.place, new_a, a):
            raise UnipotentError("[p]_eps meets the attracting set")
    for r in s.repelling:
        if not balls_disjoint(s.place, new_r, r):
            raise UnipotentError("[L]_delta meets the repelling set")
    u = from_flag(p, l)
    m = min_power(u, epsilon_sq, delta_sq)
    elem = SystemElement(u.power(m), epsilon_sq, delta_sq)
    out = SchottkySystem(s.elements + (elem,), s.attracting + (new_a,),
                         s.repelling + (new_r,), s.place)
    report = verify_system(out)
    if not report:
        raise UnipotentError(
            "adding the flag broke the system: " + "; ".join(report.messages))
    return out


# ---------------------------------------------------------------------------
# Z^2 certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZSquaredCertificate:
    """Exact witness that <u, v> is free abelian of rank 2: the commutator is
    the identity and the nilpotent parts are linearly independent."""

    u: linalg.Mat
    v: linalg.Mat
    commutator_trivial: bool
    nilparts_independent: bool

    def __post_init__(self):
        if not (self.commutator_trivial and self.nilparts_independent):
            raise UnipotentError("certificate conditions not satisfied")


def z_squared_pair(g: linalg.Mat, u1: RankOneUnipotent,
                   u2: RankOneUnipotent) -> ZSquaredCertificate:
    """Certificate for <u1, g^{-1} u2 g> under the hypotheses
    p_{u2} = g p_{u1} and L_{u2} != g L_{u1}."""
    g = linalg.mat(g)
    if u2.point != u1.point.apply(g):
        raise UnipotentError("hypothesis p_{u2} = g p_{u1} fails")
    if u2.hyperplane.basis == u1.hyperplane.apply(g).basis:
        raise UnipotentError(
            "hypothesis L_{u2} != g L_{u1} fails: the pair generates Z, not Z^2")
    g_inv = linalg.mat_inv(g)
    w = linalg.mat_mul(linalg.mat_mul(g_inv, u2.matrix), g)
    comm = linalg.mat_mul(linalg.mat_mul(u1.matrix, w),
                          linalg.mat_inv(linalg.mat_mul(w, u1.matrix)))
    trivial = linalg.mat_eq(comm, linalg.identity(u1.dim))
    n1 = [x for row in u1.nilpart() for x in row]
    nw = [x for row in linalg.mat_sub(w, linalg.identity(u1.dim))
          for x in row]
    independent = linalg.rank([n1, nw]) == 2
    return ZSquaredCertificate(u1.matrix, w, trivial, independent)


# ---------------------------------------------------------------------------
# steering search (deterministic heuristic for an existence theorem)
# ---------------------------------------------------------------------------

def elementary_matrix(n: int, i: int, j: int, value: int = 1) -> linalg.Mat:
    return tuple(tuple(Q(1) if r == c else (Q(value) if (r, c) == (i, j)
                                            else Q(0))
                       for c in range(n)) for r in range(n))


def elementary_alphabet(n: int, unit: int = 1,
                        magnitudes: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
                        ) -> list[linalg.Mat]:
    """Elementary transvection powers e_{ij}^{+- unit*mag} in a fixed order.

    With unit = d every letter lies in the congruence kernel K_d.
    """
    out = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for mag in magnitudes:
                for sign in (1, -1):
                    out.append(elementary_matrix(n, i, j, sign * unit * mag))
    return out


def _flag_score(place: Place, g: linalg.Mat, p1: ProjPoint, l1: ProjSubspace,
                p2: ProjPoint, l2: ProjSubspace) -> tuple[Q, Q, Q]:
    dp = proj_distance_sq(place, p1.apply(g), p2)
    dl = subspace_distance_sq(place, l1.apply(g), l2)
    return dp + dl, dp, dl


def conze_search(p1: ProjPoint, l1: ProjSubspace, p2: ProjPoint,
                 l2: ProjSubspace, epsilon_sq, delta_sq,
                 budget: int = 100_000,
                 alphabet: list[linalg.Mat] | None = None,
                 place: Place = ARCH) -> linalg.Mat:
    """Find g (a product of alphabet letters, by default elementary
    transvection powers) with g p1 in (p2)_eps and g L1 in (L2)_delta.

    Deterministic best-first search on the exact squared-distance score with
    length-lex tie-breaking; the final membership checks are exact.  The
    existence of some g is a theorem for lattices acting on flag pairs in
    dimension >= 3; the search itself is a steering heuristic, so it reports
    budget exhaustion rather than nonexistence.
    """
    epsilon_sq, delta_sq = as_q(epsilon_sq), as_q(delta_sq)
    n = p1.dim
    if n < 3:
        raise UnipotentError("steering search requires dimension >= 3")
    if alphabet is None:
        alphabet = elementary_alphabet(n)
    ident = linalg.identity(n)

    def goal(g):
        _, dp, dl = _flag_score(place, g, p1, l1, p2, l2)
        return dp < epsilon_sq and dl < delta_sq

    if goal(ident):
        return ident
    start = _flag_score(place, ident, p1, l1, p2, l2)[0]
    heap: list = [(start, 0, (), ident)]
    seen = {_key(ident)}
    expansions = 0
    counter = 0
    while heap:
        _, _, word, g = heapq.heappop(heap)
        expansions += 1
        if expansions > budget:
            raise SearchBudgetExceeded(
                f"steering search exhausted its budget of {budget}")
        for li, letter in enumerate(alphabet):
            h = linalg.mat_mul(letter, g)
            k = _key(h)
            if k in seen:
                continue
            seen.add(k)
            if goal(h):
                return h
            score = _flag_score(place, h, p1, l1, p2, l2)[0]
            counter += 1
            heapq.heappush(heap, (score, counter, word + (li,), h))
    raise SearchBudgetExceeded("steering search emptied its frontier")


def _key(m: linalg.Mat):
    return tuple(tuple(int(x) for x in row) for row in m)


# ---------------------------------------------------------------------------
# throwing: extend a system so that it, plus g, generates everything
# ---------------------------------------------------------------------------

def throwing(s: SchottkySystem, g: linalg.Mat, p1: ProjPoint, p2: ProjPoint,
             l1: ProjSubspace, l2: ProjSubspace, epsilon_sq, delta_sq
             ) -> tuple[SchottkySystem, ZSquaredCertificate]:
    """Adjoin powered unipotents for the flags (p1, L1), (p2, L2) related by
    p1 = g p2, L1 != g L2; the returned certificate plus congruence evidence
    feed the finite-index conclusion, which is recorded as trusted, never
    re-proved."""
    epsilon_sq, delta_sq = as_q(epsilon_sq), as_q(delta_sq)
    if not (0 < epsilon_sq <= delta_sq):
        raise UnipotentError("need delta >= epsilon > 0")
    g = linalg.mat(g)
    place = s.place
    balls_p = [Ball(p, epsilon_sq, closed=True) for p in (p1, p2)]
    balls_l = [Ball(l, delta_sq, closed=True) for l in (l1, l2)]
    for k, bp in enumerate(balls_p, 1):
        for r in s.repelling:
            if not balls_disjoint(place, bp, r):
                raise UnipotentError(f"condition (1): [p{k}]_eps meets R")
    for k, bl in enumerate(balls_l, 1):
        for a in s.attracting:
            if not balls_disjoint(place, bl, a):
                raise UnipotentError(f"condition (1): [L{k}]_delta meets A")
    if not balls_disjoint(place, balls_p[0], balls_l[1]):
        raise UnipotentError("condition (2): [p1]_eps meets [L2]_delta")
    if not balls_disjoint(place, balls_p[1], balls_l[0]):
        raise UnipotentError("condition (2): [p2]_eps meets [L1]_delta")
    if p1 != p2.apply(g):
        raise UnipotentError("condition (3): p1 = g p2 fails")
    if l1.basis == l2.apply(g).basis:
        raise UnipotentError("condition (3): L1 != g L2 fails")
    u1 = from_flag(p1, l1)
    u2 = from_flag(p2, l2)
    m = max(min_power(u1, epsilon_sq, delta_sq),
            min_power(u2, epsilon_sq, delta_sq))
    v1, v2 = u1.power(m), u2.power(m)
    cert = z_squared_pair(g, v2, v1)
    out = SchottkySystem(
        s.elements + (SystemElement(v1, epsilon_sq, delta_sq),
                      SystemElement(v2, epsilon_sq, delta_sq)),
        s.attracting + tuple(balls_p), s.repelling + tuple(balls_l), place)
    report = verify_system(out)
    if not report:
        raise UnipotentError("throwing broke the system: "
                             + "; ".join(report.messages))
    return out, cert


# ---------------------------------------------------------------------------
# desk-scale freeness oracle for unipotent systems
# ---------------------------------------------------------------------------

def system_freeness_oracle(s: SchottkySystem, max_len: int = 6,
                           max_exponent: int = 2,
                           budget: int = 200_000) -> bool:
    """Injectivity up to length max_len of the natural map from the free
    product of the cyclic groups <u>: no nonempty alternating word
    u_{i1}^{k1} ... u_{im}^{km} (adjacent i's distinct, 0 < |k| <=
    max_exponent) may equal the identity."""
    mats = [e.unipotent.matrix for e in s.elements]
    if not mats:
        return True
    n = len(mats[0])
    ident = linalg.identity(n)
    powers: list[dict[int, linalg.Mat]] = []
    for m in mats:
        d = {}
        for k in range(1, max_exponent + 1):
            d[k] = linalg.mat_pow(m, k)
            d[-k] = linalg.mat_pow(m, -k)
        powers.append(d)
    count = 0

    def rec(prod, last_i, depth):
        nonlocal count
        for i in range(len(mats)):
            if i == last_i:
                continue
            for k in powers[i]:
                count += 1
                if count > budget:
                    raise SearchBudgetExceeded("alternating-word budget")
                nxt = linalg.mat_mul(prod, powers[i][k])
                if linalg.mat_eq(nxt, ident):
                    return False
                if depth + 1 < max_len and not rec(nxt, i, depth + 1):
                    return False
        return True

    return rec(ident, None, 0)
