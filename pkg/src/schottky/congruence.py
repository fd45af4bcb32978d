"""Congruence quotients of SL_n(Z): reductions, orders, closures, evidence.

Everything here is finite and exact: reductions are entrywise, group orders
come from the standard prime-power formula, and surjectivity onto
SL(n, Z/dZ) is established by breadth-first closure of the generator images,
never by sampling.  Density claims are always labeled as finite evidence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import linalg
from .rat import Q, as_q


class CongruenceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# reductions and orders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModMatrix:
    entries: tuple[tuple[int, ...], ...]
    modulus: int

    def __post_init__(self):
        if self.modulus < 2:
            raise CongruenceError("modulus must be >= 2")

    @property
    def dim(self) -> int:
        return len(self.entries)

    def mul(self, other: "ModMatrix") -> "ModMatrix":
        d = self.modulus
        a, b = self.entries, other.entries
        n = len(a)
        return ModMatrix(tuple(
            tuple(sum(a[i][k] * b[k][j] for k in range(n)) % d
                  for j in range(n)) for i in range(n)), d)

    def is_identity(self) -> bool:
        return all(self.entries[i][j] == (1 if i == j else 0)
                   for i in range(self.dim) for j in range(self.dim))


def reduce_mod(g, d: int) -> ModMatrix:
    """Entrywise reduction of an SL_n(Z) matrix; re-verifies det = 1 mod d."""
    g = linalg.mat(g)
    if d < 2:
        raise CongruenceError("modulus must be >= 2")
    if not linalg.is_integer_matrix(g):
        raise CongruenceError("matrix must be integral")
    if linalg.det(g) != 1:
        raise CongruenceError("matrix must have determinant 1")
    n = len(g)
    ent = tuple(tuple(int(g[i][j]) % d for j in range(n)) for i in range(n))
    det_mod = _det_mod(ent, d)
    if det_mod != 1 % d:
        raise CongruenceError("reduced determinant is not 1 (internal)")
    return ModMatrix(ent, d)


def _det_mod(ent, d):
    n = len(ent)
    rows = [list(r) for r in ent]
    det = 1
    for c in range(n):
        piv = next((r for r in range(c, n)
                    if math.gcd(rows[r][c], d) == 1), None)
        if piv is None:
            # fall back to exact integer determinant
            return int(linalg.det(linalg.mat(ent))) % d
        if piv != c:
            rows[c], rows[piv] = rows[piv], rows[c]
            det = -det
        det = (det * rows[c][c]) % d
        inv = pow(rows[c][c], -1, d)
        for r in range(c + 1, n):
            f = (rows[r][c] * inv) % d
            rows[r] = [(x - f * y) % d for x, y in zip(rows[r], rows[c])]
    return det % d


def _factorize(d: int) -> dict[int, int]:
    out: dict[int, int] = {}
    f = 2
    while f * f <= d:
        while d % f == 0:
            out[f] = out.get(f, 0) + 1
            d //= f
        f += 1
    if d > 1:
        out[d] = out.get(d, 0) + 1
    return out


def sl_order(n: int, d: int) -> int:
    """|SL(n, Z/dZ)| by multiplicativity and the prime-power formula."""
    if n < 2 or d < 2:
        raise CongruenceError("need n >= 2 and d >= 2")
    total = 1
    for p, k in _factorize(d).items():
        gl_p = 1
        for i in range(n):
            gl_p *= p ** n - p ** i
        sl_p = gl_p // (p - 1)
        total *= sl_p * p ** ((n * n - 1) * (k - 1))
    return total


def elementary_generators(n: int) -> list[linalg.Mat]:
    """All n^2 - n elementary transvections e_{ij}, fixed order."""
    from .unischottky import elementary_matrix
    return [elementary_matrix(n, i, j)
            for i in range(n) for j in range(n) if i != j]


# ---------------------------------------------------------------------------
# closures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CongruenceImage:
    modulus: int
    generator_images: tuple[ModMatrix, ...]
    order: int
    surjective: bool | None        # None = cap exceeded, undecided
    full_order: int
    elements: frozenset | None = None   # kept only for small closures


_SMALL_CLOSURE = 60_000
_ELEMENT_KEEP = 60_000


def image_closure(gens, d: int, cap: int = 10 ** 6) -> CongruenceImage:
    """Breadth-first closure of the generator images in SL(n, Z/dZ).

    Exceeding the cap yields surjective=None with the order found so far;
    surjectivity is otherwise decided by comparison with sl_order.
    """
    mods = [reduce_mod(g, d) for g in gens]
    if not mods:
        raise CongruenceError("need at least one generator")
    n = mods[0].dim
    full = sl_order(n, d)
    if full <= _SMALL_CLOSURE or cap <= _SMALL_CLOSURE:
        order, elements, partial = _bfs_python(mods, d, n, cap)
    else:
        order, elements, partial = _bfs_numpy(mods, d, n, cap)
    if partial:
        return CongruenceImage(d, tuple(mods), order, None, full, None)
    surj = order == full
    keep = frozenset(elements) if elements is not None else None
    return CongruenceImage(d, tuple(mods), order, surj, full, keep)


def _bfs_python(mods, d, n, cap):
    gen_tuples = [m.entries for m in mods]
    ident = tuple(tuple(1 if i == j else 0 for j in range(n))
                  for i in range(n))
    visited = {ident}
    frontier = [ident]
    while frontier:
        if len(visited) > cap:
            return len(visited), None, True
        nxt = []
        for cur in frontier:
            for g in gen_tuples:
                prod = tuple(
                    tuple(sum(cur[i][k] * g[k][j] for k in range(n)) % d
                          for j in range(n)) for i in range(n))
                if prod not in visited:
                    visited.add(prod)
                    nxt.append(prod)
        frontier = nxt
    elements = visited if len(visited) <= _ELEMENT_KEEP else None
    return len(visited), elements, False


def _bfs_numpy(mods, d, n, cap):
    import numpy as np
    nn = n * n
    weights = d ** np.arange(nn, dtype=np.int64)
    gens = np.array([m.entries for m in mods], dtype=np.int64)
    space = d ** nn
    dense = space <= 100_000_000
    if dense:
        visited = np.zeros(space, dtype=bool)
    else:
        visited_keys = None  # sorted array of seen keys
    ident = np.eye(n, dtype=np.int64).reshape(1, nn)
    ident_key = int(ident @ weights)
    if dense:
        visited[ident_key] = True
    else:
        visited_keys = np.array([ident_key], dtype=np.int64)
    frontier = ident
    total = 1
    chunk = 200_000
    while frontier.size:
        new_rows = []
        for lo in range(0, len(frontier), chunk):
            block = frontier[lo:lo + chunk].reshape(-1, n, n)
            for gi in range(len(gens)):
                prod = (block @ gens[gi]) % d
                flat = prod.reshape(-1, nn)
                keys = flat @ weights
                uniq, idx = np.unique(keys, return_index=True)
                if dense:
                    fresh = ~visited[uniq]
                    visited[uniq[fresh]] = True
                    rows = flat[idx[fresh]]
                else:
                    fresh_mask = ~np.isin(uniq, visited_keys,
                                          assume_unique=False)
                    fresh_keys = uniq[fresh_mask]
                    visited_keys = np.union1d(visited_keys, fresh_keys)
                    rows = flat[idx[fresh_mask]]
                if len(rows):
                    new_rows.append(rows)
        if not new_rows:
            break
        nxt = np.concatenate(new_rows)
        # cross-generator duplicates within the wave
        keys = nxt @ weights
        _, first = np.unique(keys, return_index=True)
        frontier = nxt[np.sort(first)]
        total += len(frontier)
        if total > cap:
            return total, None, True
    return total, None, False


_EXPONENT_CACHE: dict[tuple[int, int], int] = {}


def exponent_mod(n: int, d: int, cap: int = 10 ** 6) -> int:
    """Exponent (lcm of element orders) of SL(n, Z/dZ), by enumeration from
    the elementary generators."""
    key = (n, d)
    if key in _EXPONENT_CACHE:
        return _EXPONENT_CACHE[key]
    full = sl_order(n, d)
    if full > cap:
        raise CongruenceError(
            f"|SL({n}, Z/{d})| = {full} exceeds the enumeration cap {cap}")
    img = image_closure(elementary_generators(n), d, cap=max(cap, full + 1))
    if img.elements is None or img.order != full:
        raise CongruenceError("failed to enumerate the full group")
    ident = tuple(tuple(1 if i == j else 0 for j in range(n))
                  for i in range(n))
    exp = 1
    for ent in img.elements:
        k = 1
        cur = ent
        while cur != ident:
            cur = ModMatrix(cur, d).mul(ModMatrix(ent, d)).entries
            k += 1
        exp = exp * k // math.gcd(exp, k)
    _EXPONENT_CACHE[key] = exp
    return exp


# ---------------------------------------------------------------------------
# density evidence
# ---------------------------------------------------------------------------

_EVIDENCE_CAVEAT = ("finite evidence only: surjectivity was verified for the "
                    "listed moduli; profinite density itself is not "
                    "machine-checked")


@dataclass(frozen=True)
class DensityEvidence:
    moduli_checked: tuple[int, ...]
    all_surjective: bool
    orders: tuple[tuple[int, int], ...]   # (modulus, closure order)
    caveat: str = _EVIDENCE_CAVEAT
    evidence_only: bool = True


def density_evidence(gens, moduli, cap: int = 10 ** 7) -> DensityEvidence:
    moduli = tuple(moduli)
    if 4 not in moduli:
        raise CongruenceError("criterion requires modulus 4 to be checked")
    if not any(m % 2 == 1 and m > 1 for m in moduli):
        raise CongruenceError("criterion requires at least one odd modulus")
    orders = []
    all_surj = True
    for d in moduli:
        img = image_closure(gens, d, cap=cap)
        orders.append((d, img.order))
        if img.surjective is not True:
            all_surj = False
    return DensityEvidence(moduli, all_surj, tuple(orders))


# ---------------------------------------------------------------------------
# the prodense pipeline
# ---------------------------------------------------------------------------

from .exactlin import (ARCH, Ball, ProjPoint, ProjSubspace,
                       point_subspace_distance_sq, proj_distance_sq,
                       subspace_distance_sq)
from .rat import sqrt_lower, sqrt_upper
from .unischottky import (SchottkySystem, SystemElement, UnipotentError,
                          ZSquaredCertificate, elementary_alphabet,
                          min_power, rank_one_unipotent, z_squared_pair)


@dataclass(frozen=True)
class ProdenseResult:
    system: SchottkySystem
    evidence: DensityEvidence
    q_used: int
    block_exponents: tuple[int, ...]     # the group exponents t and r
    element_exponents: tuple[int, ...]   # the 2n^2-2n powers used
    conjugators: tuple


def _base_transvection(p_vec, f_vec, x: int, n: int) -> linalg.Mat:
    """I + x p f^T: the rank-1 unipotent of the base flag, scaled by x."""
    return tuple(tuple((Q(1) if a == b else Q(0)) + x * p_vec[a] * f_vec[b]
                       for b in range(n)) for a in range(n))


def _scramble_menu(n: int, unit: int):
    """Deterministic small menu of kernel-of-unit elements: identity, single
    transvection letters, and their pairwise products."""
    from .unischottky import elementary_matrix
    letters = [elementary_matrix(n, a, b, s * unit)
               for a in range(n) for b in range(n) if a != b
               for s in (1, -1)]
    yield linalg.identity(n)
    for m in letters:
        yield m
    for m1 in letters:
        for m2 in letters:
            yield linalg.mat_mul(m1, m2)


def _steer_flag_candidates(src_p, src_l, dst_p, dst_l, unit,
                           limit_p_sq, limit_l_sq, budget):
    """Deterministic stream of kernel-of-unit conjugators g with the flag
    image (g src_p, g src_l) strictly inside the requested limits.

    Candidates are tau(x) sigma, where tau(x) = I + x p f^T is the base
    flag's own transvection (which pulls points toward p and hyperplanes
    toward L simultaneously) and sigma runs over a fixed scramble menu that
    removes the degenerate starting positions.
    """
    place = ARCH
    n = src_p.dim
    p_vec = dst_p.coords
    f_vec = dst_l.normal_functional().functional
    f_row = linalg.vec(f_vec)
    src_f = linalg.vec(src_l.normal_functional().functional)
    spent = 0
    for sigma in _scramble_menu(n, unit):
        v1 = linalg.mat_vec(sigma, linalg.vec(src_p.coords))
        if linalg.dot(f_row, v1) == 0:
            continue
        phi1 = linalg.vec_mat(src_f, linalg.mat_inv(sigma))
        if sum(a * b for a, b in zip(phi1, p_vec)) == 0:
            continue
        x = unit
        hits = 0
        for _ in range(60):
            g = linalg.mat_mul(_base_transvection(p_vec, f_vec, x, n), sigma)
            spent += 1
            if spent > budget:
                return
            gp, gl = src_p.apply(g), src_l.apply(g)
            dp = proj_distance_sq(place, gp, dst_p)
            dl = subspace_distance_sq(place, gl, dst_l)
            if dp < limit_p_sq and dl < limit_l_sq:
                yield g, dp, dl
                hits += 1
                if hits >= 5:
                    break
            x *= 2


def _mutually_isolated(flags, cand_p, cand_l) -> bool:
    """cand point off every accepted hyperplane and vice versa, exactly."""
    for (pp, ll) in flags:
        if ll.contains(cand_p) or cand_l.contains(pp):
            return False
    return True


def prodense_construct(p: ProjPoint, l: ProjSubspace, epsilon_sq, delta_sq,
                       moduli, n: int = 3, q_policy=(1, 2, 3, 5),
                       steer_budget: int = 30_000,
                       closure_cap: int = 2 * 10 ** 7) -> ProdenseResult:
    """Build 2n^2 - 2n rank-1 unipotents forming a verified Schottky system
    with A = [p]_eps and R = [L]_delta, whose congruence images witness
    surjectivity over the requested moduli.

    First block: n^2 - n conjugates, by kernel-of-3 elements, of elementary
    transvections raised to powers t k + 1 (t the exponent of the mod-3
    group), so the mod-3 image is exactly the elementary image.  Second
    block: same with the kernel of q^2 for the first q in q_policy whose
    final evidence comes out fully surjective.
    """
    epsilon_sq, delta_sq = as_q(epsilon_sq), as_q(delta_sq)
    if not (0 < epsilon_sq <= delta_sq < 1):
        raise CongruenceError("need 0 < epsilon_sq <= delta_sq < 1")
    if l.proj_dim != n - 2 or not l.contains(p):
        raise CongruenceError("need a rational flag p in L of codimension 1")
    moduli = tuple(moduli)
    if 4 not in moduli:
        raise CongruenceError("moduli must include 4")
    if not any(m % 2 == 1 and m > 1 for m in moduli):
        raise CongruenceError("moduli must include an odd prime")

    from .unischottky import elementary_matrix
    positions = [(i, j) for i in range(n) for j in range(n) if i != j]
    t_exp = exponent_mod(n, 3)

    last_err = None
    for q in q_policy:
        try:
            return _prodense_attempt(p, l, epsilon_sq, delta_sq, moduli, n,
                                     q, t_exp, positions, steer_budget,
                                     closure_cap)
        except (CongruenceError, UnipotentError) as err:
            last_err = err
    raise CongruenceError(f"every q in {q_policy} failed: {last_err}")


def _prodense_attempt(p, l, epsilon_sq, delta_sq, moduli, n, q, t_exp,
                      positions, steer_budget, closure_cap) -> ProdenseResult:
    from .unischottky import elementary_matrix
    place = ARCH
    r_exp = 1 if q == 1 else exponent_mod(n, q * q)
    blocks = [(3, t_exp), (max(q * q, 1), r_exp)]

    # steer all 2(n^2 - n) flags strictly inside the target balls
    limit_p_sq = epsilon_sq * Q(49, 100)
    limit_l_sq = delta_sq * Q(49, 100)
    accepted: list[tuple[ProjPoint, ProjSubspace]] = []
    conjugators: list[linalg.Mat] = []
    sources = []
    for unit, _ in blocks:
        for (i, j) in positions:
            sources.append((unit, i, j))
    for unit, i, j in sources:
        e_ij = elementary_matrix(n, i, j)
        base_u = rank_one_unipotent(e_ij)
        src_p, src_l = base_u.point, base_u.hyperplane
        found = False
        for g, dp, dl in _steer_flag_candidates(src_p, src_l, p, l,
                                                max(unit, 1),
                                                limit_p_sq, limit_l_sq,
                                                steer_budget):
            cand_p, cand_l = src_p.apply(g), src_l.apply(g)
            if _mutually_isolated(accepted, cand_p, cand_l):
                accepted.append((cand_p, cand_l))
                conjugators.append(g)
                found = True
                break
        if not found:
            raise CongruenceError(
                f"steering failed for source e_{i+1},{j+1} in kernel "
                f"of {unit}")

    # exact radius for the per-element neighborhoods
    eps_lo = sqrt_lower(epsilon_sq)
    del_lo = sqrt_lower(delta_sq)
    max_dp = max(proj_distance_sq(place, fp, p) for fp, _ in accepted)
    max_dl = max(subspace_distance_sq(place, fl, l) for _, fl in accepted)
    cap1 = (eps_lo - sqrt_upper(max_dp)) ** 2
    cap2 = (del_lo - sqrt_upper(max_dl)) ** 2
    cross = None
    for a in range(len(accepted)):
        for b in range(len(accepted)):
            if a == b:
                continue
            d = point_subspace_distance_sq(place, accepted[a][0],
                                           accepted[b][1])
            cross = d if cross is None else min(cross, d)
    rho_sq = min(cap1, cap2, cross / 8)
    if rho_sq <= 0:
        raise CongruenceError("no room left for the element neighborhoods")

    # element exponents: block_exp * k + 1, large enough for the dynamics
    # bound and coprime to every requested modulus
    elements = []
    exponents = []
    m = len(positions)
    for idx, (g, (i, j)) in enumerate(zip(conjugators,
                                          positions + positions)):
        unit, block_exp = blocks[0] if idx < m else blocks[1]
        e_ij = elementary_matrix(n, i, j)
        base = rank_one_unipotent(
            linalg.mat_mul(linalg.mat_mul(g, e_ij), linalg.mat_inv(g)))
        need = min_power(base, rho_sq, rho_sq)
        k = max(1, -(-(need - 1) // block_exp))
        while any(math.gcd(block_exp * k + 1, d) != 1 for d in moduli):
            k += 1
        s = block_exp * k + 1
        exponents.append(s)
        elements.append(SystemElement(base.power(s), rho_sq, rho_sq))

    system = SchottkySystem(tuple(elements),
                            (Ball(p, epsilon_sq, closed=True),),
                            (Ball(l, delta_sq, closed=True),), place)
    from .unischottky import verify_system
    report = verify_system(system)
    if not report:
        raise CongruenceError("system verification failed: "
                              + "; ".join(report.messages))

    # block residues: first block reduces to the elementary images mod 3
    for idx in range(m):
        u = elements[idx].unipotent.matrix
        i, j = positions[idx]
        if reduce_mod(u, 3).entries != reduce_mod(
                elementary_matrix(n, i, j), 3).entries:
            raise CongruenceError("block-1 element has the wrong mod-3 image")
    block1 = [e.unipotent.matrix for e in elements[:m]]
    img3 = image_closure(block1, 3)
    if img3.surjective is not True:
        raise CongruenceError("first block is not surjective mod 3")
    if q > 1:
        block2 = [e.unipotent.matrix for e in elements[m:]]
        imgq = image_closure(block2, q * q, cap=closure_cap)
        if imgq.surjective is not True:
            raise CongruenceError(f"second block is not surjective mod {q*q}")

    gens = [e.unipotent.matrix for e in elements]
    evidence = density_evidence(gens, moduli, cap=closure_cap)
    if not evidence.all_surjective:
        raise CongruenceError("full system failed a modulus check")
    return ProdenseResult(system, evidence, q, (t_exp, r_exp),
                          tuple(exponents), tuple(conjugators))


# ---------------------------------------------------------------------------
# the counting family: finitely many of the continuum-many systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyPair:
    left: int                      # bitmask of the first function
    right: int                     # bitmask of the second
    differing_index: int           # least i with f(i) != g(i)
    certificate: ZSquaredCertificate
    evidence: DensityEvidence


@dataclass(frozen=True)
class CountingFamilyReport:
    base: ProdenseResult
    flags: tuple                   # per index: (p_i, L_i, L'_i, eps_i, delta_i)
    systems_verified: int
    pairs: tuple[FamilyPair, ...]


def _aux_flag_catalog(n: int):
    """Deterministic stream of rational flags used for the family indices."""
    candidates_p = [(0, 1, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1), (1, 0, 1),
                    (1, 2, 0), (0, 1, 2), (2, 1, 1), (1, 1, 2), (1, 3, 1)]
    for pv in candidates_p:
        pt = ProjPoint.of(pv)
        for fv in [(1, 0, 0), (0, 0, 1), (0, 1, 0), (1, -1, 0), (1, 0, -1),
                   (0, 1, -1), (1, 1, -1), (2, -1, 0), (1, -2, 1)]:
            if sum(a * b for a, b in zip(fv, pv)) != 0:
                continue
            yield pt, ProjSubspace.of(linalg.kernel_basis([linalg.vec(fv)]))


def _tilted_hyperplane(p_i: ProjPoint, l_i: ProjSubspace, delta_sq,
                       place=ARCH) -> ProjSubspace:
    """A second hyperplane through p_i, distinct from l_i, within half the
    delta-ball around it."""
    f = linalg.vec(l_i.normal_functional().functional)
    tilts = linalg.kernel_basis([linalg.vec(p_i.coords)])
    tilt = None
    for cand in tilts:
        if linalg.rank([f, cand]) == 2:
            tilt = cand
            break
    if tilt is None:
        raise CongruenceError("no independent tilt direction (internal)")
    m = 4
    for _ in range(60):
        f2 = tuple(m * a + b for a, b in zip(f, tilt))
        l2 = ProjSubspace.of(linalg.kernel_basis([linalg.vec(f2)]))
        d = subspace_distance_sq(place, l2, l_i)
        if 0 < d < delta_sq / 4:
            return l2
        m *= 2
    raise CongruenceError("tilt refinement did not converge")


def counting_family(F: int, p: ProjPoint, l: ProjSubspace, epsilon_sq,
                    delta_sq, moduli=(3, 4, 5), n: int = 3,
                    closure_cap: int = 2 * 10 ** 7) -> CountingFamilyReport:
    """Finite truncation of the continuum family: a base system plus F
    commuting pairs u_{i,1}, u_{i,2} sharing attraction points.

    Every one of the 2^F selector systems verifies; for every unordered pair
    of distinct selectors the first differing index yields an exact Z^2
    certificate, and the union of the two systems gets congruence evidence
    over the requested moduli.
    """
    if F < 1:
        raise CongruenceError("F must be >= 1")
    epsilon_sq, delta_sq = as_q(epsilon_sq), as_q(delta_sq)
    base = prodense_construct(p, l, epsilon_sq, delta_sq,
                              tuple(sorted(set(moduli) | {4})),
                              n=n, closure_cap=closure_cap)
    place = base.system.place
    base_a = base.system.attracting
    base_r = base.system.repelling

    # choose F auxiliary flags with mutually disjoint closed balls, also
    # disjoint from the base A and R
    aux: list[tuple[ProjPoint, ProjSubspace]] = []
    radii: list[Q] = []
    eps_aux = min(epsilon_sq, delta_sq) / 4
    for cand_p, cand_l in _aux_flag_catalog(n):
        if len(aux) == F:
            break
        bp = Ball(cand_p, eps_aux, closed=True)
        bl = Ball(cand_l, eps_aux, closed=True)
        from .exactlin import balls_disjoint
        ok = all(balls_disjoint(place, bp, r) for r in base_r)
        ok = ok and all(balls_disjoint(place, bl, a) for a in base_a)
        ok = ok and all(balls_disjoint(place, bp, a) for a in base_a)
        ok = ok and all(balls_disjoint(place, bl, r) for r in base_r)
        for (qp, ql) in aux:
            if not ok:
                break
            ok = ok and balls_disjoint(place, bp,
                                       Ball(ql, eps_aux, closed=True))
            ok = ok and balls_disjoint(place, Ball(qp, eps_aux, closed=True),
                                       bl)
            ok = ok and balls_disjoint(place, bp,
                                       Ball(qp, eps_aux, closed=True))
        if ok:
            aux.append((cand_p, cand_l))
            radii.append(eps_aux)
    if len(aux) < F:
        raise CongruenceError(
            f"flag catalog provided only {len(aux)} of {F} isolated flags")

    # build the commuting pairs over each auxiliary flag
    from .unischottky import from_flag, verify_system
    pairs_u = []
    flags_out = []
    for (p_i, l_i), e_i in zip(aux, radii):
        l_i2 = _tilted_hyperplane(p_i, l_i, e_i, place)
        rho = e_i / 4
        u1 = from_flag(p_i, l_i)
        u2 = from_flag(p_i, l_i2)
        m = max(min_power(u1, rho, rho), min_power(u2, rho, rho))
        pairs_u.append((SystemElement(u1.power(m), rho, rho),
                        SystemElement(u2.power(m), rho, rho)))
        flags_out.append((p_i, l_i, l_i2, e_i, e_i))

    all_a = base_a + tuple(Ball(p_i, e_i, closed=True)
                           for (p_i, _), e_i in zip(aux, radii))
    all_r = base_r + tuple(Ball(l_i, e_i, closed=True)
                           for (_, l_i), e_i in zip(aux, radii))

    systems = []
    for mask in range(2 ** F):
        chosen = tuple(pairs_u[i][(mask >> i) & 1] for i in range(F))
        sys_f = SchottkySystem(base.system.elements + chosen, all_a, all_r,
                               place)
        rep = verify_system(sys_f)
        if not rep:
            raise CongruenceError(
                f"selector {mask:b} failed verification: "
                + "; ".join(rep.messages))
        systems.append(sys_f)

    ident = linalg.identity(n)
    out_pairs = []
    for ma in range(2 ** F):
        for mb in range(ma + 1, 2 ** F):
            i = next(k for k in range(F) if ((ma >> k) ^ (mb >> k)) & 1)
            ua = pairs_u[i][0].unipotent
            ub = pairs_u[i][1].unipotent
            cert = z_squared_pair(ident, ua, ub)
            union_gens = [e.unipotent.matrix for e in systems[ma].elements]
            seen_keys = {tuple(tuple(int(x) for x in row) for row in g)
                         for g in union_gens}
            for e in systems[mb].elements:
                k = tuple(tuple(int(x) for x in row)
                          for row in e.unipotent.matrix)
                if k not in seen_keys:
                    union_gens.append(e.unipotent.matrix)
            ev = density_evidence(union_gens, tuple(sorted(set(moduli) | {4})),
                                  cap=closure_cap)
            if not ev.all_surjective:
                raise CongruenceError(
                    f"pair ({ma:b},{mb:b}) failed a congruence check")
            out_pairs.append(FamilyPair(ma, mb, i, cert, ev))
    return CountingFamilyReport(base, tuple(flags_out), len(systems),
                                tuple(out_pairs))
