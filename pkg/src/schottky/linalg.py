"""Small exact linear algebra layer over `fractions.Fraction`.

Vectors are tuples of Fractions, matrices tuples of row tuples.  Nothing here
is asymptotically clever; dimensions in this package are tiny (2..5) and the
point is exactness, not speed.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterable, Sequence

from .rat import Q, as_q

Vec = tuple[Q, ...]
Mat = tuple[Vec, ...]


def vec(entries: Iterable) -> Vec:
    return tuple(as_q(e) for e in entries)


def mat(rows: Iterable[Iterable]) -> Mat:
    m = tuple(vec(r) for r in rows)
    if m and any(len(r) != len(m[0]) for r in m):
        raise ValueError("ragged matrix")
    return m


def identity(n: int) -> Mat:
    return tuple(tuple(Q(1) if i == j else Q(0) for j in range(n)) for i in range(n))


def transpose(a: Mat) -> Mat:
    return tuple(zip(*a))


def mat_mul(a: Mat, b: Mat) -> Mat:
    bt = tuple(zip(*b))
    return tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a)


def mat_vec(a: Mat, v: Vec) -> Vec:
    return tuple(sum(x * y for x, y in zip(row, v)) for row in a)


def vec_mat(v: Vec, a: Mat) -> Vec:
    return tuple(sum(v[i] * a[i][j] for i in range(len(v))) for j in range(len(a[0])))


def mat_pow(a: Mat, k: int) -> Mat:
    n = len(a)
    if k < 0:
        return mat_pow(mat_inv(a), -k)
    result = identity(n)
    base = a
    while k:
        if k & 1:
            result = mat_mul(result, base)
        base = mat_mul(base, base)
        k >>= 1
    return result


def mat_add(a: Mat, b: Mat) -> Mat:
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub(a: Mat, b: Mat) -> Mat:
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_scale(c, a: Mat) -> Mat:
    c = as_q(c)
    return tuple(tuple(c * x for x in row) for row in a)


def mat_eq(a: Mat, b: Mat) -> bool:
    return all(all(x == y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def dot(u: Vec, v: Vec) -> Q:
    return sum(x * y for x, y in zip(u, v, strict=True))


def det(a: Mat) -> Q:
    """Determinant by fraction-friendly Gaussian elimination."""
    n = len(a)
    rows = [list(r) for r in a]
    d = Q(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if piv is None:
            return Q(0)
        if piv != col:
            rows[col], rows[piv] = rows[piv], rows[col]
            d = -d
        d *= rows[col][col]
        inv = 1 / rows[col][col]
        for r in range(col + 1, n):
            if rows[r][col] != 0:
                f = rows[r][col] * inv
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[col])]
    return d


def rref(a: Sequence[Sequence]) -> tuple[list[list[Q]], list[int]]:
    """Reduced row echelon form; returns (rows, pivot column indices)."""
    rows = [[as_q(x) for x in r] for r in a]
    nrows, ncols = len(rows), len(rows[0]) if rows else 0
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, nrows) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(nrows):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return rows[:r] + [row for row in rows[r:] if any(x != 0 for x in row)], pivots


def rank(a: Sequence[Sequence]) -> int:
    if not a:
        return 0
    return len(rref(a)[1])


def kernel_basis(a: Sequence[Sequence]) -> list[Vec]:
    """Basis of the right kernel {x : a x = 0}."""
    rows, pivots = rref(a)
    ncols = len(a[0])
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        x = [Q(0)] * ncols
        x[fc] = Q(1)
        for r, pc in enumerate(pivots):
            x[pc] = -rows[r][fc]
        basis.append(tuple(x))
    return basis


def mat_inv(a: Mat) -> Mat:
    n = len(a)
    aug = [list(a[i]) + [Q(1) if j == i else Q(0) for j in range(n)] for i in range(n)]
    rows, pivots = rref(aug)
    if pivots[:n] != list(range(n)):
        raise ValueError("singular matrix")
    return tuple(tuple(rows[i][n:]) for i in range(n))


def charpoly(a: Mat) -> list[Q]:
    """Coefficients of det(x I - a), ascending order, via Faddeev-LeVerrier."""
    n = len(a)
    coeffs = [Q(0)] * (n + 1)
    coeffs[n] = Q(1)
    m = identity(n)
    c = Q(1)
    for k in range(1, n + 1):
        m = mat_mul(a, m)
        tr = sum(m[i][i] for i in range(n))
        c = -tr / k
        coeffs[n - k] = c
        m = mat_add(m, mat_scale(c, identity(n)))
    return coeffs


def minors(a: Sequence[Sequence], k: int) -> list[Q]:
    """All k x k minors of the row-matrix a, in lexicographic index order."""
    rows = [list(r) for r in a]
    nrows, ncols = len(rows), len(rows[0])
    if k > nrows or k > ncols:
        return []
    out = []
    for ri in itertools.combinations(range(nrows), k):
        for ci in itertools.combinations(range(ncols), k):
            sub = tuple(tuple(rows[i][j] for j in ci) for i in ri)
            out.append(det(sub))
    return out


def is_integer_matrix(a: Mat) -> bool:
    return all(x.denominator == 1 for row in a for x in row)


def int_matrix(a: Sequence[Sequence[int]]) -> Mat:
    return mat(a)
