"""Exact real-root isolation for polynomials with rational coefficients.

Sturm-sequence sign counting plus bisection.  Coefficient lists are ascending
(c[0] + c[1] x + ...).  Used to bracket eigenvalues of small symmetric
matrices with certified rational bounds.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .rat import Q, as_q


def poly_trim(p: Sequence[Q]) -> list[Q]:
    p = [as_q(c) for c in p]
    while p and p[-1] == 0:
        p.pop()
    return p


def poly_eval(p: Sequence[Q], x: Q) -> Q:
    acc = Q(0)
    for c in reversed(list(p)):
        acc = acc * x + c
    return acc


def poly_deriv(p: Sequence[Q]) -> list[Q]:
    return [i * c for i, c in enumerate(p)][1:]


def poly_rem(a: Sequence[Q], b: Sequence[Q]) -> list[Q]:
    a, b = poly_trim(a), poly_trim(b)
    if not b:
        raise ZeroDivisionError("polynomial remainder by zero")
    a = list(a)
    while len(a) >= len(b) and a:
        f = a[-1] / b[-1]
        shift = len(a) - len(b)
        for i, c in enumerate(b):
            a[shift + i] -= f * c
        a = poly_trim(a)
    return a


def poly_gcd(a: Sequence[Q], b: Sequence[Q]) -> list[Q]:
    a, b = poly_trim(a), poly_trim(b)
    while b:
        a, b = b, poly_rem(a, b)
    if a:
        lead = a[-1]
        a = [c / lead for c in a]
    return a


def squarefree_part(p: Sequence[Q]) -> list[Q]:
    p = poly_trim(p)
    g = poly_gcd(p, poly_deriv(p))
    if len(g) <= 1:
        return list(p)
    return poly_div_exact(p, g)


def poly_div_exact(a: Sequence[Q], b: Sequence[Q]) -> list[Q]:
    a, b = poly_trim(a), poly_trim(b)
    out = [Q(0)] * (len(a) - len(b) + 1)
    a = list(a)
    while len(a) >= len(b) and a:
        f = a[-1] / b[-1]
        shift = len(a) - len(b)
        out[shift] = f
        for i, c in enumerate(b):
            a[shift + i] -= f * c
        a = poly_trim(a)
    if a:
        raise ValueError("not an exact division")
    return out


def sturm_chain(p: Sequence[Q]) -> list[list[Q]]:
    chain = [poly_trim(p), poly_deriv(p)]
    while poly_trim(chain[-1]):
        nxt = [-c for c in poly_rem(chain[-2], chain[-1])]
        if not poly_trim(nxt):
            break
        chain.append(nxt)
    return [c for c in chain if poly_trim(c)]


def _sign_changes(chain: list[list[Q]], x: Q) -> int:
    signs = []
    for p in chain:
        v = poly_eval(p, x)
        if v != 0:
            signs.append(1 if v > 0 else -1)
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def count_roots(chain: list[list[Q]], lo: Q, hi: Q) -> int:
    """Number of distinct real roots in (lo, hi]."""
    return _sign_changes(chain, lo) - _sign_changes(chain, hi)


def root_bound(p: Sequence[Q]) -> Q:
    """Cauchy bound: all real roots lie in [-B, B]."""
    p = poly_trim(p)
    lead = abs(p[-1])
    return 1 + max(abs(c) for c in p[:-1]) / lead if len(p) > 1 else Q(1)


def isolate_real_roots(p: Sequence[Q]) -> list[tuple[Q, Q]]:
    """Disjoint isolating intervals (lo, hi], one per distinct real root,
    sorted increasingly."""
    sf = squarefree_part(p)
    if len(sf) <= 1:
        return []
    chain = sturm_chain(sf)
    bound = root_bound(sf)
    total = count_roots(chain, -bound, bound)
    out: list[tuple[Q, Q]] = []

    def split(lo: Q, hi: Q, k: int):
        if k == 0:
            return
        if k == 1:
            out.append((lo, hi))
            return
        mid = (lo + hi) / 2
        while poly_eval(sf, mid) == 0:
            # nudge the split point off a root
            mid = (lo + mid) / 2
        kl = count_roots(chain, lo, mid)
        split(lo, mid, kl)
        split(mid, hi, k - kl)

    split(-bound, bound, total)
    out.sort()
    return out


def rational_roots(p: Sequence[Q], max_trials: int = 10 ** 5) -> list[Q]:
    """Exact rational roots found by the rational-root theorem; gives up and
    returns [] when the divisor enumeration would exceed max_trials."""
    import math
    p = poly_trim(p)
    if len(p) <= 1:
        return []
    den = math.lcm(*(c.denominator for c in p))
    ip = [int(c * den) for c in p]
    shift = 0
    while ip and ip[0] == 0:
        ip = ip[1:]
        shift += 1
    if not ip:
        return []
    a0, an = abs(ip[0]), abs(ip[-1])
    if math.isqrt(a0) > max_trials or math.isqrt(an) > max_trials:
        return []
    roots = [Q(0)] if shift else []
    for qd in _divisors(an):
        for pn in _divisors(a0):
            if math.gcd(pn, qd) != 1:
                continue
            for s in (1, -1):
                cand = Q(s * pn, qd)
                if poly_eval(p, cand) == 0:
                    roots.append(cand)
    return sorted(set(roots))


def _divisors(n: int) -> list[int]:
    n = abs(n)
    out = set()
    f = 1
    while f * f <= n:
        if n % f == 0:
            out.add(f)
            out.add(n // f)
        f += 1
    return sorted(out)


def refine_root(p: Sequence[Q], lo: Q, hi: Q, width: Q) -> tuple[Q, Q]:
    """Shrink an isolating interval (lo, hi] containing exactly one distinct
    root of p until hi - lo <= width.  Exact rational roots collapse to [r, r]."""
    sf = squarefree_part(p)
    if poly_eval(sf, hi) == 0:
        return (hi, hi)
    for r in rational_roots(sf, max_trials=10 ** 4):
        if lo < r <= hi:
            return (r, r)
    chain = sturm_chain(sf)
    while hi - lo > width:
        mid = (lo + hi) / 2
        if poly_eval(sf, mid) == 0:
            return (mid, mid)
        if count_roots(chain, lo, mid) == 1:
            hi = mid
        else:
            lo = mid
    return lo, hi
