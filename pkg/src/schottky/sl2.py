"""Exact circle dynamics for SL_2 over the reals.

P(R^2) is a circle; points are primitive integer pairs and closed arcs carry
exact rational endpoints, so every membership, disjointness and image
computation below is an integer-arithmetic decision.  Determinant-one
matrices act preserving the cyclic orientation, hence the image of an arc is
the arc of the endpoint images.

On top of the arc layer: precise attracting/repelling neighborhoods (the
complement of the neighborhood system is a fundamental domain for the cyclic
group), boundary reduction into that fundamental domain, a subgroup
membership oracle, and the realization step that extends a table by a
prescribed partial permutation of cosets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from . import linalg
from .contraction import (CertificationError, VeryProximalCertificate,
                          certify_power_auto, certify_very_proximal_auto,
                          singular_gap_bounds)
from .exactlin import ARCH, Ball, ProjPoint, proj_distance_sq
from .pingpong import (PingPongTable, SchottkyVerificationError, TableEntry,
                       Word, eval_word, freeness_oracle,
                       is_projective_identity, verify_schottky)
from .rat import Q, as_q, sqrt_upper


class PrecisionError(RuntimeError):
    """An exact decision is blocked by an enclosure that is too wide."""


class RealizationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# circle points and exact cyclic order
# ---------------------------------------------------------------------------

def cpoint(x, y=None) -> tuple[int, int]:
    """Canonical primitive representative of a point of P(R^2)."""
    from .rat import primitive_vector
    if y is None:
        x, y = x
    return primitive_vector((x, y))


def circ_key(p: tuple[int, int]):
    """Sort key realizing the angle order theta in [0, pi) exactly."""
    x, y = p
    if x == 0:
        return (1, Q(0))
    return (0, Q(y, x)) if y >= 0 else (2, Q(y, x))


def apply_matrix(g: linalg.Mat, p: tuple[int, int]) -> tuple[int, int]:
    v = linalg.mat_vec(g, linalg.vec(p))
    return cpoint(v[0], v[1])


def point_distance_sq(p: tuple[int, int], q: tuple[int, int]) -> Q:
    return proj_distance_sq(ARCH, ProjPoint(p), ProjPoint(q))


@dataclass(frozen=True)
class Arc:
    """Closed arc from start to end, counterclockwise (increasing angle)."""

    start: tuple[int, int]
    end: tuple[int, int]

    def __post_init__(self):
        if self.start == self.end:
            raise ValueError("degenerate arc")

    def contains(self, p: tuple[int, int], strict: bool = False) -> bool:
        ks, ke, kp = circ_key(self.start), circ_key(self.end), circ_key(p)
        if strict and (kp == ks or kp == ke):
            return False
        if ks < ke:
            return ks <= kp <= ke
        return kp >= ks or kp <= ke

    def contains_arc(self, other: "Arc", strict: bool = False) -> bool:
        """other is a subset of self: both endpoints inside and other does
        not wrap through the complement."""
        if not (self.contains(other.start, strict)
                and self.contains(other.end, strict)):
            return False
        comp_mid = arc_midpoint(Arc(self.end, self.start))
        return not other.contains(comp_mid)

    def image(self, g: linalg.Mat) -> "Arc":
        """Arc of images; valid because det(g) > 0 preserves orientation."""
        return Arc(apply_matrix(g, self.start), apply_matrix(g, self.end))

    def complement(self) -> "Arc":
        """The closed complementary arc (shares endpoints)."""
        return Arc(self.end, self.start)

    def width_sq(self) -> Q:
        """Chordal distance between the endpoints: a width surrogate for
        short arcs."""
        return point_distance_sq(self.start, self.end)


def arcs_disjoint(a: Arc, b: Arc) -> bool:
    return not (a.contains(b.start) or a.contains(b.end)
                or b.contains(a.start) or b.contains(a.end))


def arc_midpoint(a: Arc) -> tuple[int, int]:
    """A rational point strictly inside the arc."""
    s, e = a.start, a.end
    cand = cpoint(s[0] + e[0], s[1] + e[1])
    if a.contains(cand, strict=True):
        return cand
    cand = cpoint(-(s[0] + e[0]), -(s[1] + e[1]))
    if a.contains(cand, strict=True):
        return cand
    # antipodal-ish endpoints: rotate the start slightly into the arc
    for t_num, t_den in ((1, 8), (1, 64), (1, 512), (1, 4096)):
        x, y = s
        cand = cpoint(x * t_den - y * t_num, x * t_num + y * t_den)
        if a.contains(cand, strict=True):
            return cand
    raise PrecisionError("could not locate an interior rational point")


def arc_around(center: tuple[int, int], radius_sq: Q) -> Arc:
    """Closed arc certified to contain the closed chordal ball around the
    center: endpoints are exact rational rotations by an angle whose sine
    squared weakly exceeds radius_sq."""
    radius_sq = as_q(radius_sq)
    if not (0 < radius_sq < Q(9, 10)):
        raise ValueError("radius_sq out of range")
    # tan t with sin^2 >= radius_sq:  t^2 >= r^2/(1 - r^2)
    t = sqrt_upper(radius_sq / (1 - radius_sq))
    x, y = center
    a = t.denominator * x - t.numerator * y, t.denominator * y + t.numerator * x
    b = t.denominator * x + t.numerator * y, t.denominator * y - t.numerator * x
    return Arc(cpoint(*b), cpoint(*a))


def shrink_arc_towards(p: tuple[int, int], a: Arc, times: int = 1) -> Arc:
    """Shrink the arc around an interior point p by repeated mediants."""
    if not a.contains(p, strict=True):
        raise ValueError("point must be interior")
    s, e = a.start, a.end
    for _ in range(times):
        s2 = cpoint(s[0] + p[0], s[1] + p[1])
        if not Arc(s, e).contains(s2, strict=True):
            s2 = cpoint(-(s[0] + p[0]), -(s[1] + p[1]))
        e2 = cpoint(e[0] + p[0], e[1] + p[1])
        if not Arc(s, e).contains(e2, strict=True):
            e2 = cpoint(-(e[0] + p[0]), -(e[1] + p[1]))
        cand = Arc(s2, e2)
        if cand.contains(p, strict=True):
            s, e = s2, e2
        else:
            break
    return Arc(s, e)


# ---------------------------------------------------------------------------
# circle points with enclosures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CirclePoint:
    """Exact rational point or a narrow arc enclosure of an algebraic one."""

    point: tuple[int, int] | None = None
    enclosure: Arc | None = None

    def __post_init__(self):
        if (self.point is None) == (self.enclosure is None):
            raise ValueError("exactly one of point / enclosure must be given")

    @property
    def exact(self) -> bool:
        return self.point is not None

    def image(self, g: linalg.Mat) -> "CirclePoint":
        if self.exact:
            return CirclePoint(point=apply_matrix(g, self.point))
        return CirclePoint(enclosure=self.enclosure.image(g))

    def inside(self, a: Arc, strict: bool = False) -> bool:
        if self.exact:
            return a.contains(self.point, strict)
        return a.contains_arc(self.enclosure, strict)

    def outside(self, a: Arc) -> bool:
        if self.exact:
            return not a.contains(self.point)
        return arcs_disjoint(a, self.enclosure)

    def width_sq(self) -> Q:
        return Q(0) if self.exact else self.enclosure.width_sq()


# ---------------------------------------------------------------------------
# precise generators and tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreciseGenerator:
    matrix: linalg.Mat
    cert: VeryProximalCertificate
    omega_plus: Arc
    omega_minus: Arc
    fixed_plus: Arc     # enclosure of the attracting fixed point
    fixed_minus: Arc    # enclosure of the repelling fixed point


@dataclass(frozen=True)
class PreciseTable:
    entries: tuple[PreciseGenerator, ...]

    def __len__(self):
        return len(self.entries)

    @property
    def generators(self) -> list[linalg.Mat]:
        return [e.matrix for e in self.entries]

    def all_arcs(self) -> list[Arc]:
        out = []
        for e in self.entries:
            out.append(e.omega_plus)
            out.append(e.omega_minus)
        return out

    def o_components(self) -> list[Arc]:
        """The open components of O = P minus all arcs, as open arcs
        (represented by their closed hulls between consecutive arc ends)."""
        arcs = self.all_arcs()
        marked = sorted(arcs, key=lambda a: circ_key(a.start))
        comps = []
        for i, a in enumerate(marked):
            b = marked[(i + 1) % len(marked)]
            if a.end == b.start:
                continue
            comps.append(Arc(a.end, b.start))
        return comps

    def to_pingpong(self) -> PingPongTable:
        return PingPongTable(tuple(TableEntry(e.matrix, e.cert)
                                   for e in self.entries), ARCH)


def fixed_point_arcs(g: linalg.Mat, cert: VeryProximalCertificate,
                     refine: int = 12) -> tuple[Arc, Arc]:
    """Certified enclosures of the attracting and repelling fixed points,
    refined by exact arc nesting (the image of a nested arc is again an
    enclosure, and it contracts)."""
    out = []
    for mtx, side in ((g, cert.forward), (linalg.mat_inv(g), cert.backward)):
        box = side.canonical_point_box
        arc = arc_around(cpoint(*box.center.coords), box.radius_sq)
        for _ in range(refine):
            img = arc.image(mtx)
            if arc.contains_arc(img, strict=True):
                arc = img
            else:
                break
        out.append(arc)
    return out[0], out[1]


def make_precise(g: linalg.Mat,
                 initial_minus: Arc | None = None,
                 cert: VeryProximalCertificate | None = None,
                 power_bound: int = 50) -> PreciseGenerator:
    """Build precise attracting/repelling arcs for a very proximal g.

    The repelling arc is the given (or derived) closed neighborhood of the
    repelling fixed point; the attracting arc is the exact image of the
    complement, which makes the complement of the pair a fundamental domain
    for the cyclic group: the fundamental-domain clauses are additionally
    spot-verified by exact power checks up to power_bound.
    """
    g = linalg.mat(g)
    if cert is None:
        cert = certify_very_proximal_auto(g)
    fixed_plus, fixed_minus = fixed_point_arcs(g, cert)
    if initial_minus is None:
        rep = cert.backward.canonical_point_box
        initial_minus = arc_around(cpoint(*rep.center.coords),
                                   cert.backward.base.epsilon_sq)
    if not initial_minus.contains_arc(fixed_minus, strict=True):
        raise RealizationError(
            "initial repelling arc does not enclose the repelling point")
    if initial_minus.contains(fixed_plus.start) \
            or initial_minus.contains(fixed_plus.end):
        raise RealizationError("initial repelling arc meets the attracting "
                               "fixed point enclosure")
    omega_minus = initial_minus
    omega_plus = omega_minus.complement().image(g)
    if not arcs_disjoint(omega_plus, omega_minus):
        raise RealizationError(
            "derived attracting arc meets the repelling arc; element is not "
            "contracting enough for the requested arc")
    if not omega_plus.contains_arc(fixed_plus, strict=True):
        raise RealizationError("attracting arc misses the attracting point")
    gen = PreciseGenerator(g, cert, omega_plus, omega_minus,
                           fixed_plus, fixed_minus)
    _verify_precise_generator(gen, power_bound)
    return gen


def _verify_precise_generator(gen: PreciseGenerator, power_bound: int):
    g = gen.matrix
    # structural identity: g maps the complement of the open repelling arc
    # exactly onto the attracting arc
    image = gen.omega_minus.complement().image(g)
    if image != gen.omega_plus:
        raise RealizationError("attracting arc fails its defining identity")
    # nesting: g(omega_plus) inside omega_plus, g^{-1}(omega_minus) inside
    g_inv = linalg.mat_inv(g)
    if not gen.omega_plus.contains_arc(gen.omega_plus.image(g)):
        raise RealizationError("attracting arc is not forward invariant")
    if not gen.omega_minus.contains_arc(gen.omega_minus.image(g_inv)):
        raise RealizationError("repelling arc is not backward invariant")
    # fundamental domain spot checks: powers move O off itself
    o1 = Arc(gen.omega_plus.end, gen.omega_minus.start)
    o2 = Arc(gen.omega_minus.end, gen.omega_plus.start)
    comps = [c for c in (o1, o2) if c.start != c.end]
    fwd = bwd = linalg.identity(2)
    for _ in range(power_bound):
        fwd = linalg.mat_mul(fwd, g)
        bwd = linalg.mat_mul(bwd, g_inv)
        for c in comps:
            for m in (fwd, bwd):
                img = c.image(m)
                for c2 in comps:
                    if not arcs_disjoint(img, c2):
                        raise RealizationError(
                            "a power of g returns the fundamental domain "
                            "onto itself")


def build_precise_table(mats, power_auto: bool = True,
                        epsilon_sq_cap=Q(1, 100)) -> PreciseTable:
    """Certify, make precise, and cross-check a family of generators."""
    gens = []
    for m in mats:
        m = linalg.mat(m)
        if power_auto:
            _, cert = certify_power_auto(m, epsilon_sq_cap=as_q(epsilon_sq_cap))
        else:
            cert = certify_very_proximal_auto(
                m, epsilon_sq_cap=as_q(epsilon_sq_cap))
        gens.append(make_precise(cert.g, cert=cert))
    table = PreciseTable(tuple(gens))
    verify_precise(table)
    return table


def verify_precise(table: PreciseTable) -> bool:
    """All arcs pairwise disjoint, each generator precise, O nonempty."""
    arcs = table.all_arcs()
    for a, b in itertools.combinations(arcs, 2):
        if not arcs_disjoint(a, b):
            raise RealizationError("neighborhood arcs of the table overlap")
    for gen in table.entries:
        _verify_precise_generator(gen, power_bound=8)
    if not table.o_components():
        raise RealizationError("fundamental domain is empty")
    return True


# ---------------------------------------------------------------------------
# limit set samples
# ---------------------------------------------------------------------------

def limit_set_sample(table: PreciseTable, depth: int,
                     width_cap: Q = Q(1, 4)) -> list[CirclePoint]:
    """Enclosures of w(v) for every reduced word w of length <= depth and
    every attracting/repelling fixed point v of the generators."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    bases = []
    for e in table.entries:
        bases.append(e.fixed_plus)
        bases.append(e.fixed_minus)
    out: list[CirclePoint] = [CirclePoint(enclosure=b) for b in bases]
    gens = table.generators
    mats = []
    for i, g in enumerate(gens):
        mats.append(((i, 1), g))
        mats.append(((i, -1), linalg.mat_inv(g)))

    def rec(prefix_mat, last, d):
        if d == 0:
            return
        for (i, s), m in mats:
            if last == (i, -s):
                continue
            cur = linalg.mat_mul(prefix_mat, m)
            for b in bases:
                enc = b.image(cur)
                if enc.width_sq() > width_cap:
                    raise PrecisionError("sample enclosure width blew up")
                out.append(CirclePoint(enclosure=enc))
            rec(cur, (i, s), d - 1)

    rec(linalg.identity(2), None, depth)
    return out


# ---------------------------------------------------------------------------
# boundary reduction and membership
# ---------------------------------------------------------------------------

LIMIT_FLAG = "limit"


def boundary_reduce(x: CirclePoint, table: PreciseTable,
                    max_steps: int = 64):
    """Apply generator inverses until the point leaves every open
    neighborhood arc.  Returns (word, reduced point) or LIMIT_FLAG after
    max_steps (the orbit is then indistinguishable from the limit set)."""
    letters: list[tuple[int, int]] = []
    cur = x
    inverses = [linalg.mat_inv(g) for g in table.generators]
    for _ in range(max_steps):
        hit = None
        for i, e in enumerate(table.entries):
            if cur.inside(e.omega_plus, strict=True):
                hit = (i, 1)
                break
            if cur.inside(e.omega_minus, strict=True):
                hit = (i, -1)
                break
        if hit is None:
            # confirm decidability: the point must be certifiably outside
            # every open arc (boundary contact is fine for exact points)
            for e in table.entries:
                for arc in (e.omega_plus, e.omega_minus):
                    if not cur.exact and not cur.outside(arc) \
                            and not cur.inside(arc, strict=True):
                        raise PrecisionError(
                            "enclosure straddles an arc boundary")
            return Word.of([(i, -s) for i, s in letters]).reduce(), cur
        i, s = hit
        cur = cur.image(inverses[i] if s > 0 else table.generators[i])
        letters.append((i, s))
    return LIMIT_FLAG


def base_point(table: PreciseTable) -> tuple[int, int]:
    """A deterministic rational point interior to the fundamental domain."""
    comps = table.o_components()
    if not comps:
        raise RealizationError("fundamental domain is empty")
    return arc_midpoint(comps[0])


def membership(g: linalg.Mat, table: PreciseTable,
               max_steps: int = 64) -> bool:
    """Exact subgroup membership through the fundamental-domain reduction:
    reduce g x0 and test the reducing word against g projectively."""
    g = linalg.mat(g)
    x0 = base_point(table)
    res = boundary_reduce(CirclePoint(point=apply_matrix(g, x0)), table,
                          max_steps)
    if res == LIMIT_FLAG:
        raise PrecisionError("orbit did not reduce within the step budget")
    word, reduced = res
    m = linalg.mat_mul(eval_word(word, table.to_pingpong()), g)
    if is_projective_identity(m):
        return True
    # the reduced point must then lie strictly inside the fundamental domain
    # for the verdict to be sound; boundary hits are flagged instead
    if reduced.exact and any(
            a.contains(reduced.point) for a in table.all_arcs()):
        raise PrecisionError("reduction landed on a neighborhood boundary")
    return False


@dataclass(frozen=True)
class CosetId:
    """Coset of the table subgroup, identified by a representative."""

    representative: linalg.Mat

    def same_coset(self, other: "CosetId", table: PreciseTable) -> bool:
        rep = linalg.mat_mul(linalg.mat_inv(other.representative),
                             self.representative)
        return membership(rep, table)


# ---------------------------------------------------------------------------
# possible partial permutations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PPP:
    """A prescription of m coset mappings alpha_i Delta -> beta_i Delta."""

    m: int
    alpha: tuple[linalg.Mat, ...]
    beta: tuple[linalg.Mat, ...]

    def __post_init__(self):
        if self.m < 1 or len(self.alpha) != self.m or len(self.beta) != self.m:
            raise ValueError("alpha and beta must both have length m")

    @property
    def special(self) -> bool:
        return is_projective_identity(self.alpha[0]) and \
            is_projective_identity(self.beta[0])


def is_legitimate(phi: PPP, table: PreciseTable) -> bool:
    """Both alpha and beta must hit m distinct cosets of the table group."""
    for tup in (phi.alpha, phi.beta):
        for i, j in itertools.combinations(range(phi.m), 2):
            rep = linalg.mat_mul(linalg.mat_inv(tup[j]), tup[i])
            if membership(rep, table):
                return False
    return True
