"""Ping-pong tables, Schottky certification and freeness oracles.

A table is a list of generators, each carrying a very-proximal certificate.
Schottky verification checks the cross-disjointness conditions exactly; the
conclusion (the generators are free) is corroborated at desk scale by a
brute-force oracle that multiplies out every reduced word up to a length
bound with exact arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from . import linalg
from .contraction import (CertificationError, VeryProximalCertificate,
                          certify_power_auto, certify_very_proximal_auto)
from .exactlin import (ARCH, Ball, MFlag, Place, ProjHyperplane, ProjPoint,
                       ball_coordinate_intervals, balls_disjoint,
                       center_to_center_distance_sq)
from .rat import Iv, Q, as_q, iv_det, iv_dot


class SchottkyVerificationError(ValueError):
    """Raised when a cross-disjointness condition fails; carries the pair."""

    def __init__(self, msg, i=None, j=None, gap_sq=None):
        super().__init__(msg)
        self.i, self.j, self.gap_sq = i, j, gap_sq


class BudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# tables and words
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TableEntry:
    matrix: linalg.Mat
    cert: VeryProximalCertificate


@dataclass(frozen=True)
class PingPongTable:
    entries: tuple[TableEntry, ...]
    place: Place = ARCH

    def __len__(self):
        return len(self.entries)

    @property
    def generators(self) -> list[linalg.Mat]:
        return [e.matrix for e in self.entries]

    def attracting(self, i: int, sign: int) -> Ball:
        return self.entries[i].cert.attracting(sign)

    def repelling(self, i: int, sign: int) -> Ball:
        return self.entries[i].cert.repelling(sign)


def table_from_matrices(mats, place: Place = ARCH,
                        epsilon_sq_cap=Q(1, 100),
                        power_auto: bool = False) -> PingPongTable:
    """Auto-certify each matrix and assemble a table.

    With power_auto, matrices whose singular gap is too small at the
    requested epsilon are replaced by their least certifying 2^k power.
    """
    entries = []
    for m in mats:
        m = linalg.mat(m)
        if power_auto:
            _, cert = certify_power_auto(m, place=place,
                                         epsilon_sq_cap=as_q(epsilon_sq_cap))
            entries.append(TableEntry(cert.g, cert))
        else:
            cert = certify_very_proximal_auto(
                m, place, epsilon_sq_cap=as_q(epsilon_sq_cap))
            entries.append(TableEntry(m, cert))
    return PingPongTable(tuple(entries), place)


@dataclass(frozen=True)
class Word:
    """Word in the table generators: letters (index, sign)."""

    letters: tuple[tuple[int, int], ...]
    reduced: bool = field(default=False)

    @staticmethod
    def of(letters) -> "Word":
        w = Word(tuple((int(i), int(s)) for i, s in letters))
        return w.reduce()

    def reduce(self) -> "Word":
        out: list[tuple[int, int]] = []
        for i, s in self.letters:
            if s not in (1, -1):
                raise ValueError("letter signs must be +-1")
            if out and out[-1][0] == i and out[-1][1] == -s:
                out.pop()
            else:
                out.append((i, s))
        return Word(tuple(out), True)

    def inverse(self) -> "Word":
        return Word(tuple((i, -s) for i, s in reversed(self.letters)),
                    self.reduced)

    def __mul__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters).reduce()

    def __len__(self):
        return len(self.letters)


def eval_word(word: Word, table: PingPongTable) -> linalg.Mat:
    """Exact left-to-right product of the word over the table generators."""
    gens = table.generators
    if any(i < 0 or i >= len(gens) for i, _ in word.letters):
        raise IndexError("word references a generator outside the table")
    n = len(gens[0]) if gens else 2
    acc = linalg.identity(n)
    inverses: dict[int, linalg.Mat] = {}
    for i, s in word.letters:
        if s > 0:
            acc = linalg.mat_mul(acc, gens[i])
        else:
            if i not in inverses:
                inverses[i] = linalg.mat_inv(gens[i])
            acc = linalg.mat_mul(acc, inverses[i])
    return acc


def is_projective_identity(m: linalg.Mat) -> bool:
    n = len(m)
    lam = m[0][0]
    if lam == 0:
        return False
    for i in range(n):
        for j in range(n):
            if i == j:
                if m[i][j] != lam:
                    return False
            elif m[i][j] != 0:
                return False
    return True


# ---------------------------------------------------------------------------
# Schottky verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchottkyCertificate:
    table: PingPongTable
    spacious_witness: linalg.Mat | None = None
    witness_cert: VeryProximalCertificate | None = None


def verify_schottky(table: PingPongTable,
                    witness: linalg.Mat | None = None,
                    witness_epsilon_sq_cap=Q(1, 100)) -> SchottkyCertificate:
    """Exact pairwise disjointness: the attracting set of each g_i^{+-1} is
    disjoint from the attracting and repelling sets of g_j^{+-1}, j != i.

    With a witness, the extended table is verified too and the certificate
    records spaciousness.
    """
    place = table.place
    ents = list(table.entries)
    for i, j in itertools.combinations(range(len(ents)), 2):
        _check_pair(place, ents[i].cert, ents[j].cert, i, j)
    witness_cert = None
    if witness is not None:
        witness = linalg.mat(witness)
        witness_cert = certify_very_proximal_auto(
            witness, place, epsilon_sq_cap=as_q(witness_epsilon_sq_cap))
        for k, e in enumerate(ents):
            _check_pair(place, e.cert, witness_cert, k, len(ents))
    return SchottkyCertificate(table, witness, witness_cert)


def _check_pair(place, ci, cj, i, j):
    for si in (1, -1):
        ai = ci.attracting(si)
        for sj in (1, -1):
            for other, kind in ((cj.attracting(sj), "attracting"),
                                (cj.repelling(sj), "repelling")):
                if not balls_disjoint(place, ai, other):
                    gap = center_to_center_distance_sq(place, ai.center,
                                                       other.center)
                    raise SchottkyVerificationError(
                        f"attracting set of generator {i}^{si} meets "
                        f"{kind} set of generator {j}^{sj}; "
                        f"center distance squared {gap}",
                        i=i, j=j, gap_sq=gap)
            aj = cj.attracting(sj)
            for other, kind in ((ci.attracting(si), "attracting"),
                                (ci.repelling(si), "repelling")):
                if not balls_disjoint(place, aj, other):
                    gap = center_to_center_distance_sq(place, aj.center,
                                                       other.center)
                    raise SchottkyVerificationError(
                        f"attracting set of generator {j}^{sj} meets "
                        f"{kind} set of generator {i}^{si}; "
                        f"center distance squared {gap}",
                        i=j, j=i, gap_sq=gap)


def freeness_oracle(table: PingPongTable, max_len: int,
                    budget: int = 10 ** 6) -> bool:
    """True iff no nonempty reduced word of length <= max_len evaluates to
    the (projective) identity, by exhaustive exact enumeration."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    gens = table.generators
    if not gens:
        return True
    n = len(gens[0])
    mats: list[tuple[int, int, linalg.Mat]] = []
    for i, g in enumerate(gens):
        mats.append((i, 1, g))
        mats.append((i, -1, linalg.mat_inv(g)))
    count = 0

    def rec(prod: linalg.Mat, last: tuple[int, int] | None, depth: int) -> bool:
        nonlocal count
        for i, s, m in mats:
            if last is not None and last == (i, -s):
                continue
            count += 1
            if count > budget:
                raise BudgetExceeded(
                    f"word enumeration exceeded budget {budget}")
            nxt = linalg.mat_mul(prod, m)
            if is_projective_identity(nxt):
                return False
            if depth + 1 < max_len and not rec(nxt, (i, s), depth + 1):
                return False
        return True

    return rec(linalg.identity(n), None, 0)


# ---------------------------------------------------------------------------
# conjugated infinite tuples (finite truncations)
# ---------------------------------------------------------------------------

def conjugated_tuple(cert: SchottkyCertificate, words: list[Word],
                     count: int) -> PingPongTable:
    """Assemble the finite truncation {zeta^i w_i zeta^-i : 1 <= i <= count}
    of the conjugated tuple and re-verify it."""
    if cert.spacious_witness is None:
        raise SchottkyVerificationError("certificate carries no witness")
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return PingPongTable((), cert.table.place)
    if len(words) < count:
        raise ValueError("need at least `count` words")
    zeta = cert.spacious_witness
    zeta_inv = linalg.mat_inv(zeta)
    place = cert.table.place
    conjugates = []
    zk = zeta
    zk_inv = zeta_inv
    for i in range(1, count + 1):
        w = words[i - 1]
        if len(w.reduce()) == 0:
            raise ValueError(f"word {i} is trivial")
        m = eval_word(w, cert.table)
        conjugates.append(linalg.mat_mul(linalg.mat_mul(zk, m), zk_inv))
        zk = linalg.mat_mul(zk, zeta)
        zk_inv = linalg.mat_mul(zeta_inv, zk_inv)

    # first pass at the default radius to locate the canonical flags, then a
    # second pass with the radius shrunk below the measured cross distances
    def certify_all(cap):
        out = []
        for i, conj in enumerate(conjugates, start=1):
            try:
                out.append(certify_very_proximal_auto(conj, place,
                                                      epsilon_sq_cap=cap))
            except CertificationError as err:
                raise SchottkyVerificationError(
                    f"conjugate at index {i} failed proximality: {err}", i=i)
        return out

    certs = certify_all(Q(1, 100))
    if count > 1:
        d_min = None
        boxes = []
        for c in certs:
            boxes.append([c.forward.canonical_point_box.center,
                          c.backward.canonical_point_box.center,
                          c.forward.canonical_hyperplane_box.center,
                          c.backward.canonical_hyperplane_box.center])
        for i, j in itertools.combinations(range(count), 2):
            for x in boxes[i]:
                for y in boxes[j]:
                    d = center_to_center_distance_sq(place, x, y)
                    d_min = d if d_min is None else min(d_min, d)
        if d_min == 0:
            raise SchottkyVerificationError(
                "two conjugates share a canonical flag component")
        cap = min(Q(1, 100), d_min / 9)
        certs = certify_all(cap)
    out = PingPongTable(
        tuple(TableEntry(c.g, c) for c in certs), place)
    verify_schottky(out)
    return out


# ---------------------------------------------------------------------------
# general position tuples
# ---------------------------------------------------------------------------

def _flag_boxes(c: VeryProximalCertificate) -> tuple[list[Iv], list[Iv]]:
    """(hyperplane functional intervals of g, point intervals of g^{-1}):
    the M-flag associated with a very proximal element."""
    h = ball_coordinate_intervals(c.forward.canonical_hyperplane_box)
    p = ball_coordinate_intervals(c.backward.canonical_point_box)
    return h, p


def certified_general_position(certs: list[VeryProximalCertificate]) -> bool:
    """Interval-certified general position for the M-flags of the tuple and
    of its inverses: every n-subset of hyperplanes meets trivially and every
    n-subset of points spans, witnessed by interval determinants that exclude
    zero."""
    if not certs:
        return True
    n = len(certs[0].g)
    for inverse in (False, True):
        planes, points = [], []
        for c in certs:
            fwd, bwd = (c.backward, c.forward) if inverse else (c.forward,
                                                                c.backward)
            planes.append(ball_coordinate_intervals(
                fwd.canonical_hyperplane_box))
            points.append(ball_coordinate_intervals(
                bwd.canonical_point_box))
        if len(certs) < n:
            continue
        for subset in itertools.combinations(range(len(certs)), n):
            if iv_det([planes[k] for k in subset]).sign() == 0:
                return False
            if iv_det([points[k] for k in subset]).sign() == 0:
                return False
    return True


def general_position_tuple(seed: VeryProximalCertificate,
                           ambient_gens: list[linalg.Mat], m: int,
                           budget: int = 2000) -> PingPongTable:
    """Build m powered conjugates of the seed forming a Schottky tuple whose
    M-flags are in certified general position.

    Conjugators are enumerated over words in the ambient generators in
    length-lex order; each accepted element is re-certified from scratch.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    place = seed.place
    g = seed.g
    chosen: list[TableEntry] = []
    spent = 0
    for conj in _word_stream(ambient_gens):
        if len(chosen) == m:
            break
        spent += 1
        if spent > budget:
            raise BudgetExceeded("conjugator enumeration budget exhausted")
        cand = linalg.mat_mul(linalg.mat_mul(conj, g), linalg.mat_inv(conj))
        try:
            _, cert = certify_power_auto(cand, max_doublings=8, place=place)
        except CertificationError:
            continue
        trial = chosen + [TableEntry(cert.g, cert)]
        try:
            verify_schottky(PingPongTable(tuple(trial), place))
        except SchottkyVerificationError:
            continue
        if not certified_general_position([e.cert for e in trial]):
            continue
        chosen = trial
    if len(chosen) < m:
        raise BudgetExceeded(
            f"found only {len(chosen)} of {m} general-position conjugates")
    return PingPongTable(tuple(chosen), place)


def _word_stream(gens: list[linalg.Mat]):
    """Deterministic length-lex stream of products over gens and inverses,
    starting with the identity."""
    gens = [linalg.mat(g) for g in gens]
    n = len(gens[0])
    alphabet = []
    for g in gens:
        alphabet.append(g)
        alphabet.append(linalg.mat_inv(g))
    frontier = [linalg.identity(n)]
    seen = {_mat_key(frontier[0])}
    while True:
        nxt = []
        for w in frontier:
            yield w
            for a in alphabet:
                m = linalg.mat_mul(w, a)
                k = _mat_key(m)
                if k not in seen:
                    seen.add(k)
                    nxt.append(m)
        if not nxt:
            return
        frontier = nxt


def _mat_key(m: linalg.Mat):
    return tuple(tuple(x.numerator for x in row) +
                 tuple(x.denominator for x in row) for row in m)


# ---------------------------------------------------------------------------
# hitting cosets of normal subgroups
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalCosetTarget:
    """The coset gamma <<n0>> of the normal closure of n0."""

    gamma: linalg.Mat
    n0: linalg.Mat

    def __post_init__(self):
        if is_projective_identity(self.n0):
            raise ValueError("n0 must be nontrivial")


@dataclass(frozen=True)
class CosetLedger:
    """eta = (product of w n0^s w^{-1} over factors) * gamma, recorded so the
    membership claim can be re-expanded exactly."""

    factors: tuple[tuple[linalg.Mat, int], ...]

    def recompute(self, n0: linalg.Mat, gamma: linalg.Mat) -> linalg.Mat:
        n = len(n0)
        acc = linalg.identity(n)
        n0_inv = linalg.mat_inv(n0)
        for w, s in self.factors:
            core = n0 if s > 0 else n0_inv
            acc = linalg.mat_mul(
                acc, linalg.mat_mul(linalg.mat_mul(w, core), linalg.mat_inv(w)))
        return linalg.mat_mul(acc, gamma)


def _interval_apply(mat: linalg.Mat, box: list[Iv]) -> list[Iv]:
    return [iv_dot([Iv(x) for x in row], box) for row in mat]


def _interval_apply_functional(box: list[Iv], mat_inv: linalg.Mat) -> list[Iv]:
    cols = list(zip(*mat_inv))
    return [iv_dot(box, [Iv(x) for x in col]) for col in cols]


def _avoids(point_box: list[Iv], plane_box: list[Iv]) -> bool:
    """Certified: no point of the point box lies on any plane of the box."""
    return iv_dot(plane_box, point_box).sign() != 0


def hit_normal_coset(cert: SchottkyCertificate, target: NormalCosetTarget,
                     budget: int = 4000, sigma_index: int = 0,
                     ambient_gens: list[linalg.Mat] | None = None,
                     level: int = 1
                     ) -> tuple[linalg.Mat, PingPongTable, CosetLedger]:
    """Construct eta in gamma <<n0>> that extends the table to a larger
    verified Schottky table.

    Follows the conjugation pattern
        eta = z^l s^N n3 s^-N z^-l n2 gamma z^l s^-N n1 s^N z^-l
    with s the designated generator and z the spacious witness; n1, n2, n3
    are found among conjugates of n0^{+-1} by checking the four avoidance
    conditions with certified interval boxes, then N doubles until the
    extended table re-verifies.
    """
    if cert.spacious_witness is None or cert.witness_cert is None:
        raise SchottkyVerificationError("need a spacious certificate")
    table = cert.table
    place = table.place
    zeta = cert.spacious_witness
    zc = cert.witness_cert
    sc = table.entries[sigma_index].cert
    sigma = table.entries[sigma_index].matrix
    gamma, n0 = linalg.mat(target.gamma), linalg.mat(target.n0)
    gamma_inv = linalg.mat_inv(gamma)

    v1p = ball_coordinate_intervals(sc.forward.canonical_point_box)
    v1m = ball_coordinate_intervals(sc.backward.canonical_point_box)
    h1p = ball_coordinate_intervals(sc.forward.canonical_hyperplane_box)
    h1m = ball_coordinate_intervals(sc.backward.canonical_hyperplane_box)
    vzp = ball_coordinate_intervals(zc.forward.canonical_point_box)
    hzm = ball_coordinate_intervals(zc.backward.canonical_hyperplane_box)
    gamma_hzm = _interval_apply_functional(hzm, gamma_inv)

    base = ambient_gens if ambient_gens is not None else table.generators
    candidates = _conjugate_candidates(base, n0, budget)

    def cond_n1(n):
        n_inv = linalg.mat_inv(n)
        return (_avoids(_interval_apply(n, v1p), h1m)
                and _avoids(_interval_apply(n_inv, v1p), h1m))

    def cond_n2(n):
        gv = _interval_apply(linalg.mat_mul(n, gamma), vzp)
        if not _avoids(gv, hzm):
            return False
        return _avoids(_interval_apply(linalg.mat_inv(n), vzp), gamma_hzm)

    def cond_n3(n):
        n_inv = linalg.mat_inv(n)
        return (_avoids(_interval_apply(n, v1m), h1p)
                and _avoids(_interval_apply(n_inv, v1m), h1p))

    n1 = _first(candidates, cond_n1, "n1", budget)
    n2 = _first(candidates, cond_n2, "n2", budget)
    n3 = _first(candidates, cond_n3, "n3", budget)

    for ell in range(level, level + 4):
        zl = linalg.mat_pow(zeta, ell)
        zl_inv = linalg.mat_inv(zl)
        big_n = 1
        for _ in range(10):
            sn = linalg.mat_pow(sigma, big_n)
            sn_inv = linalg.mat_inv(sn)
            a = linalg.mat_mul(zl, sn)
            b = linalg.mat_mul(zl, sn_inv)
            eta = linalg.mat_mul(
                linalg.mat_mul(
                    linalg.mat_mul(a, linalg.mat_mul(n3[0], linalg.mat_inv(a))),
                    linalg.mat_mul(n2[0], gamma)),
                linalg.mat_mul(b, linalg.mat_mul(n1[0], linalg.mat_inv(b))))
            ledger = CosetLedger(
                tuple([(linalg.mat_mul(a, w), s) for w, s in n3[1]]
                      + list(n2[1])
                      + [(linalg.mat_mul(linalg.mat_mul(gamma, b), w), s)
                         for w, s in n1[1]]))
            if not linalg.mat_eq(ledger.recompute(n0, gamma), eta):
                raise AssertionError("coset ledger failed to recompute eta")
            try:
                ec = certify_very_proximal_auto(eta, place)
                new_table = PingPongTable(
                    table.entries + (TableEntry(eta, ec),), place)
                # the witness stays auxiliary: eta's neighborhoods sit inside
                # the witness's zone by construction, so only the table
                # members are required to be mutually disjoint
                verify_schottky(new_table)
                return eta, new_table, ledger
            except (CertificationError, SchottkyVerificationError):
                big_n *= 2
    raise BudgetExceeded("no (level, N) pair certified the coset element")


def _conjugate_candidates(gens, n0, budget):
    """Deterministic list of (conjugate of n0^{+-1}, ledger factors)."""
    out = []
    n0_inv = linalg.mat_inv(n0)
    count = 0
    for w in _word_stream(gens):
        for s, core in ((1, n0), (-1, n0_inv)):
            m = linalg.mat_mul(linalg.mat_mul(w, core), linalg.mat_inv(w))
            out.append((m, ((w, s),)))
            count += 1
        if count >= budget:
            break
    return out


def _first(candidates, pred, label, budget):
    for i, cand in enumerate(candidates):
        if i >= budget:
            break
        if pred(cand[0]):
            return cand
    raise BudgetExceeded(f"escape search for {label} exhausted its budget")
