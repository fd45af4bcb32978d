"""Certified contraction and proximality for projective transformations.

A transformation g acting on P(Q^n) is epsilon-contracting when it maps the
complement of an epsilon-neighborhood of some hyperplane into an epsilon-ball
around some point.  The criterion used here is the top singular gap a1/a2 of
g: certified rational bounds come from exact root isolation on the
characteristic polynomial of g^T g, attracting/repelling data come from power
iteration with exact residual enclosures, and every issued certificate
re-validates its mapping claim through the inequality

    d(x, H*) >= delta  ==>  d(g x, u1) <= (a2/a1) / delta,

evaluated with directed rational rounding.  No unspecified constants enter
the validation path; the configurable constants below only scale reported
Lipschitz bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from . import linalg
from .exactlin import (ARCH, Ball, Place, ProjHyperplane, ProjPoint,
                       ball_contains_ball, balls_disjoint,
                       point_subspace_distance_sq, proj_distance_sq)
from .rat import (Q, as_q, cmp_sqrt_sum, primitive_vector, sqrt_lower,
                  sqrt_upper)
from .roots import (count_roots, isolate_real_roots, refine_root,
                    squarefree_part, sturm_chain)


class CertificationError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    """Module constants; the lemma constants are configuration because the
    validation never trusts them."""

    lipschitz_c: Q = Q(4)
    power_c1: Q = Q(4)
    power_c2: Q = Q(4)
    gap_rel_width: Q = Q(1, 10 ** 6)
    max_power_iters: int = 400
    max_banach_iters: int = 400
    enclosure_shrink: Q = Q(1, 64)  # box radius target relative to epsilon


DEFAULT_CONFIG = Config()


# ---------------------------------------------------------------------------
# singular gap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingularGap:
    """Certified rational bounds on a1/a2, the top singular value ratio."""

    lower: Q
    upper: Q

    def __post_init__(self):
        if not (1 <= self.lower <= self.upper):
            raise CertificationError("invalid singular gap bracket")


def _gram(g: linalg.Mat) -> linalg.Mat:
    return linalg.mat_mul(linalg.transpose(g), g)


def singular_gap_bounds(g: linalg.Mat, rel_width: Q | None = None,
                        config: Config = DEFAULT_CONFIG) -> SingularGap:
    """Bracket a1/a2 by isolating the top two eigenvalues of g^T g."""
    rel_width = as_q(rel_width) if rel_width is not None else config.gap_rel_width
    if linalg.det(g) == 0:
        raise CertificationError("singular matrix has no singular gap")
    m = _gram(g)
    cp = linalg.charpoly(m)
    intervals = isolate_real_roots(cp)
    if not intervals:
        raise CertificationError("no real eigenvalues found (internal error)")
    # multiplicity of the largest distinct eigenvalue
    sf = squarefree_part(cp)
    from .roots import poly_div_exact, poly_gcd, poly_deriv
    mult_part = poly_gcd(cp, poly_deriv(cp))
    lo1, hi1 = intervals[-1]
    if len(mult_part) > 1:
        chain = sturm_chain(squarefree_part(mult_part))
        if count_roots(chain, lo1, hi1) > 0:
            return SingularGap(Q(1), Q(1))
    if len(intervals) == 1:
        # single distinct eigenvalue with multiplicity 1 can only happen for n=1
        return SingularGap(Q(1), Q(1))
    lo2, hi2 = intervals[-2]
    width = rel_width / 4
    while True:
        lo1, hi1 = refine_root(cp, lo1, hi1, width * max(lo1, Q(1)))
        lo2, hi2 = refine_root(cp, lo2, hi2, width * max(lo2, Q(1)))
        if lo2 > 0:
            ratio_lo = lo1 / hi2
            ratio_hi = hi1 / lo2
            lower = max(Q(1), sqrt_lower(ratio_lo))
            upper = sqrt_upper(ratio_hi)
            if upper - lower <= rel_width * lower:
                return SingularGap(lower, upper)
        width /= 16


# ---------------------------------------------------------------------------
# certified top-eigenvector enclosures (symmetric matrices)
# ---------------------------------------------------------------------------

def top_eigenvector_enclosure(m: linalg.Mat, target_radius_sq: Q,
                              config: Config = DEFAULT_CONFIG
                              ) -> tuple[tuple[int, ...], Q]:
    """Power iteration on a symmetric positive matrix with an exact
    Davis-Kahan style residual bound.

    Returns (primitive integer vector v, B) with d(v, v1)^2 <= B where v1 is
    the top eigendirection.  Requires the top eigenvalue to be simple.
    """
    n = len(m)
    cp = linalg.charpoly(m)
    intervals = isolate_real_roots(cp)
    if len(intervals) < 2:
        raise CertificationError("top eigenvalue is not simple")
    lam2_hi = refine_root(cp, *intervals[-2], Q(1, 10 ** 9))[1]

    seeds = [tuple(1 if j == i else 0 for j in range(n)) for i in range(n)]
    seeds.append(tuple(range(1, n + 1)))
    for seed in seeds:
        x = linalg.vec(seed)
        for _ in range(config.max_power_iters):
            y = linalg.mat_vec(m, x)
            nx = linalg.dot(x, x)
            rho = linalg.dot(x, y) / nx
            if rho > lam2_hi:
                r = tuple(a - rho * b for a, b in zip(y, x))
                bound = linalg.dot(r, r) / (nx * (rho - lam2_hi) ** 2)
                if bound <= target_radius_sq:
                    return primitive_vector(x), bound
            x = linalg.vec(primitive_vector(y))
    raise CertificationError(
        "power iteration failed to certify the requested enclosure")


# ---------------------------------------------------------------------------
# contraction certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionCertificate:
    """Validated claim: g maps P(Q^n) minus the repelling ball into the
    attracting ball.  s_upper bounds a2/a1; h_sq and v_sq are the squared
    enclosure radii of the stored frame around the true Cartan frame."""

    g: linalg.Mat
    place: Place
    epsilon_sq: Q
    attracting: Ball
    repelling: Ball
    gap: SingularGap
    s_upper: Q
    h_sq: Q
    v_sq: Q


def certify_contraction(g: linalg.Mat, epsilon_sq,
                        place: Place = ARCH,
                        config: Config = DEFAULT_CONFIG) -> ContractionCertificate:
    """Issue an epsilon-contraction certificate, validating the mapping claim
    with directed rational rounding.

    Requires gap.lower >= 1/epsilon_sq (the singular-value criterion); raises
    CertificationError with the measured gap otherwise.
    """
    epsilon_sq = as_q(epsilon_sq)
    if not (0 < epsilon_sq < Q(1, 16)):
        raise CertificationError("epsilon_sq must lie in (0, 1/16)")
    if not place.archimedean:
        raise CertificationError("only the archimedean place is certified")
    g = linalg.mat(g)
    gap = singular_gap_bounds(g, config=config)
    if gap.lower * epsilon_sq < 1:
        raise CertificationError(
            f"singular gap lower bound {gap.lower} is below 1/epsilon_sq = "
            f"{1 / epsilon_sq}; cannot certify")
    s_upper = 1 / gap.lower

    target = epsilon_sq * config.enclosure_shrink ** 2
    n_vec, h_sq = top_eigenvector_enclosure(_gram(g), target / 4, config)
    a_vec, v_sq = top_eigenvector_enclosure(
        _gram(linalg.transpose(g)), target / 4, config)
    n_vec, h_sq = _simplify_center(n_vec, h_sq, place)
    a_vec, v_sq = _simplify_center(a_vec, v_sq, place)

    attracting = Ball(ProjPoint(a_vec), epsilon_sq, closed=False)
    repelling = Ball(ProjHyperplane(n_vec), epsilon_sq, closed=False)

    # validation of the mapping claim with the stored (rational) frame:
    # for x with d(x, H_stored) >= eps we have d(x, H_true) >= eps - h =: delta
    # and then d(gx, u1)^2 <= s^2 (1 - delta^2) / (delta^2 + s^2 (1 - delta^2)),
    # so the claim holds when that bound plus the point slop v stays below eps.
    delta_lo = sqrt_lower(epsilon_sq) - sqrt_upper(h_sq)
    if delta_lo <= 0:
        raise CertificationError("hyperplane enclosure exceeds epsilon")
    dsq = delta_lo * delta_lo
    num = s_upper * s_upper * (1 - dsq)
    img_sq = num / (dsq + num)
    if cmp_sqrt_sum(img_sq, v_sq, epsilon_sq) >= 0:
        raise CertificationError(
            "mapping claim failed exact validation; gap too close to the "
            "criterion boundary for the requested epsilon")
    return ContractionCertificate(g, place, epsilon_sq, attracting, repelling,
                                  gap, s_upper, h_sq, v_sq)


def lipschitz_bound_outside(cert: ContractionCertificate, d_sq) -> Q:
    """Upper bound c * (a2/a1) / d^2 for the Lipschitz constant of g outside
    the d-neighborhood of the repelling hyperplane."""
    d_sq = as_q(d_sq)
    if d_sq <= 0:
        raise CertificationError("d_sq must be positive")
    return DEFAULT_CONFIG.lipschitz_c * cert.s_upper / d_sq


# ---------------------------------------------------------------------------
# canonical fixed flags and very proximal certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProximalityCertificate:
    base: ContractionCertificate
    r_sq: Q
    canonical_point_box: Ball
    canonical_hyperplane_box: Ball
    point_exact: bool
    hyperplane_exact: bool


@dataclass(frozen=True)
class VeryProximalCertificate:
    forward: ProximalityCertificate
    backward: ProximalityCertificate

    @property
    def g(self) -> linalg.Mat:
        return self.forward.base.g

    @property
    def place(self) -> Place:
        return self.forward.base.place

    def attracting(self, sign: int = 1) -> Ball:
        return (self.forward if sign > 0 else self.backward).base.attracting

    def repelling(self, sign: int = 1) -> Ball:
        return (self.forward if sign > 0 else self.backward).base.repelling


_TINY = Q(1, 10 ** 40)


def _simplify_center(coords: tuple[int, ...], radius_sq: Q,
                     place: Place) -> tuple[tuple[int, ...], Q]:
    """Round a huge-entry center to a low-height direction, inflating the
    radius by the exact rounding distance (kept sound by the triangle
    inequality)."""
    height = max(abs(c) for c in coords)
    if height <= 10 ** 9:
        return coords, radius_sq
    scale = 10 ** 8
    approx = tuple(round(c * scale / height) for c in coords)
    if all(c == 0 for c in approx):
        return coords, radius_sq
    approx = primitive_vector(approx)
    d_sq = proj_distance_sq(place, ProjPoint(coords), ProjPoint(approx))
    if d_sq <= radius_sq:
        return approx, 4 * radius_sq
    return coords, radius_sq


def _banach_fixed_point(g: linalg.Mat, cert: ContractionCertificate,
                        config: Config) -> tuple[tuple[int, ...], Q, bool]:
    """Iterate g on its attracting ball; return (center, radius_sq, exact)."""
    place = cert.place
    eps_sq = cert.epsilon_sq
    c_a = cert.attracting.center
    h_c = cert.repelling.center
    sep_sq = point_subspace_distance_sq(place, c_a, h_c)
    # delta = dist of the attracting ball to the true repelling hyperplane
    delta_lo = sqrt_lower(sep_sq) - sqrt_upper(eps_sq) - sqrt_upper(cert.h_sq)
    if delta_lo <= 0:
        raise CertificationError("attracting ball touches the repelling zone")
    lip = cert.s_upper / (delta_lo * delta_lo)
    if lip >= Q(3, 4):
        raise CertificationError(
            f"certified contraction rate {lip} too weak for fixed-point nesting")
    shrink = lip / (1 - lip)
    target = max(cert.v_sq * Q(1, 10 ** 6), Q(1, 10 ** 30))
    x = linalg.vec(c_a.coords)
    for _ in range(config.max_banach_iters):
        gx = linalg.vec(primitive_vector(linalg.mat_vec(g, x)))
        step_sq = proj_distance_sq(place, ProjPoint(tuple(int(c) for c in x)),
                                   ProjPoint(tuple(int(c) for c in gx)))
        if step_sq == 0:
            return tuple(int(c) for c in gx), _TINY, True
        radius_sq = shrink * shrink * step_sq
        x = gx
        if radius_sq <= target:
            center, radius_sq = _simplify_center(
                tuple(int(c) for c in gx), radius_sq, place)
            return center, radius_sq, False
    raise CertificationError("fixed-point nesting did not converge in budget")


def certify_very_proximal(g: linalg.Mat, r_sq, epsilon_sq,
                          place: Place = ARCH,
                          config: Config = DEFAULT_CONFIG) -> VeryProximalCertificate:
    """Certify that g and g^{-1} are (r, eps)-proximal, with certified boxes
    around the canonical fixed point and fixed hyperplane of each."""
    r_sq, epsilon_sq = as_q(r_sq), as_q(epsilon_sq)
    if r_sq <= 4 * epsilon_sq:
        raise CertificationError("need r_sq > 4 * epsilon_sq")
    g = linalg.mat(g)
    ginv = linalg.mat_inv(g)
    sides = []
    for mtx in (g, ginv):
        cert = certify_contraction(mtx, epsilon_sq, place, config)
        sep_sq = point_subspace_distance_sq(
            place, cert.attracting.center, cert.repelling.center)
        if sep_sq < r_sq:
            raise CertificationError(
                f"attracting/repelling separation {sep_sq} below r_sq {r_sq}")
        fix_pt, fp_rad, fp_exact = _banach_fixed_point(mtx, cert, config)
        # fixed hyperplane normal = attracting fixed point of the transpose
        cert_t = certify_contraction(linalg.transpose(mtx), epsilon_sq,
                                     place, config)
        fix_n, fn_rad, fn_exact = _banach_fixed_point(
            linalg.transpose(mtx), cert_t, config)
        point_box = Ball(ProjPoint(fix_pt), fp_rad)
        plane_box = Ball(ProjHyperplane(fix_n), fn_rad)
        if not ball_contains_ball(place, Ball(cert.attracting.center,
                                              epsilon_sq), point_box):
            raise CertificationError("canonical point escaped the epsilon ball")
        sides.append(ProximalityCertificate(cert, r_sq, point_box, plane_box,
                                            fp_exact, fn_exact))
    vpc = VeryProximalCertificate(sides[0], sides[1])
    _check_separation(vpc)
    return vpc


def _check_separation(vpc: VeryProximalCertificate) -> None:
    """A(g) meets neither R(g) nor A(g^{-1}), and symmetrically."""
    place = vpc.place
    for fwd, bwd in ((vpc.forward, vpc.backward), (vpc.backward, vpc.forward)):
        a = fwd.base.attracting
        if not balls_disjoint(place, a, fwd.base.repelling):
            raise CertificationError("attracting ball meets its repelling ball")
        if not balls_disjoint(place, a, bwd.base.attracting):
            raise CertificationError(
                "attracting balls of g and g^{-1} are not separated")


def is_dominated(g_cert: VeryProximalCertificate,
                 h_cert: VeryProximalCertificate) -> bool:
    """Neighborhood containment for both signs, decided exactly."""
    place = g_cert.place
    if len(g_cert.g) != len(h_cert.g) or place != h_cert.place:
        raise CertificationError("certificates live in different spaces")
    for sign in (1, -1):
        if not ball_contains_ball(place, h_cert.repelling(sign),
                                  g_cert.repelling(sign)):
            return False
        if not ball_contains_ball(place, h_cert.attracting(sign),
                                  g_cert.attracting(sign)):
            return False
    return True


# ---------------------------------------------------------------------------
# automatic parameter selection
# ---------------------------------------------------------------------------

def certify_very_proximal_auto(g: linalg.Mat,
                               place: Place = ARCH,
                               config: Config = DEFAULT_CONFIG,
                               epsilon_sq_cap: Q = Q(1, 100)
                               ) -> VeryProximalCertificate:
    """Pick workable (r, eps) for g automatically, or raise."""
    g = linalg.mat(g)
    gap = singular_gap_bounds(g, config=config)
    if gap.lower <= 1:
        raise CertificationError("no singular gap: element is not contracting")
    last_err: Exception | None = None
    eps_sq = min(as_q(epsilon_sq_cap), Q(1, 17))
    floor = 1 / (2 * gap.lower)
    while eps_sq > floor:
        try:
            cert = certify_contraction(g, eps_sq, place, config)
            sep_sq = point_subspace_distance_sq(
                place, cert.attracting.center, cert.repelling.center)
            r_sq = sep_sq * Q(9, 10)
            if r_sq <= 4 * eps_sq:
                raise CertificationError("separation too small for epsilon")
            return certify_very_proximal(g, r_sq, eps_sq, place, config)
        except CertificationError as err:
            last_err = err
            eps_sq /= 4
    raise CertificationError(
        f"auto certification failed (gap lower bound {gap.lower}, "
        f"epsilon_sq cap {epsilon_sq_cap}): {last_err}")


def certify_power_auto(g: linalg.Mat, max_doublings: int = 12,
                       place: Place = ARCH,
                       config: Config = DEFAULT_CONFIG,
                       epsilon_sq_cap: Q = Q(1, 100)
                       ) -> tuple[int, VeryProximalCertificate]:
    """Find the least power 2^k of g that certifies; returns (power, cert)."""
    power = 1
    h = linalg.mat(g)
    last_err: Exception | None = None
    for _ in range(max_doublings + 1):
        try:
            return power, certify_very_proximal_auto(h, place, config,
                                                     epsilon_sq_cap)
        except CertificationError as err:
            last_err = err
            h = linalg.mat_mul(h, h)
            power *= 2
    raise CertificationError(
        f"no power up to 2^{max_doublings} certified: {last_err}")
