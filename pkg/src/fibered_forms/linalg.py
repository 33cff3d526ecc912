"""Exact linear algebra over rationals and over expression rings."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Sequence

__all__ = ["det", "adjugate", "rref", "rank", "nullspace", "solve", "cokernel_certificate"]


def det(matrix: Sequence[Sequence]):
    """Determinant by cofactor expansion with memoised minors.

    Works for any commutative ring elements supporting + - * (rationals or
    ``Expr``); cost is O(2^k k) ring operations for a k x k matrix.
    """
    k = len(matrix)
    if k == 0:
        return 1
    rows = [list(r) for r in matrix]

    @lru_cache(maxsize=None)
    def minor(row: int, cols: frozenset):
        if row == k:
            return None  # empty product marker
        total = None
        for pos, col in enumerate(sorted(cols)):
            entry = rows[row][col]
            if _is_zero(entry):
                continue
            sub = minor(row + 1, cols - {col})
            term = entry if sub is None else entry * sub
            term = term if pos % 2 == 0 else -term
            total = term if total is None else total + term
        if total is None:
            return _zero_like(rows)
        return total

    result = minor(0, frozenset(range(k)))
    return result


def adjugate(matrix: Sequence[Sequence]):
    """Transpose of the cofactor matrix, so that M adj(M) = det(M) I."""
    k = len(matrix)
    if k == 1:
        return [[_one_like(matrix)]]
    adj = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            sub = [[matrix[r][c] for c in range(k) if c != j] for r in range(k) if r != i]
            cof = det(sub)
            adj[j][i] = cof if (i + j) % 2 == 0 else -cof
    return adj


def _is_zero(x) -> bool:
    if hasattr(x, "is_zero"):
        return x.is_zero()
    return x == 0


def _zero_like(rows):
    for r in rows:
        for x in r:
            return x * 0
    return 0


def _one_like(matrix):
    x = matrix[0][0]
    return x * 0 + 1


def rref(matrix: Sequence[Sequence[Fraction]]):
    """Reduced row echelon form; returns (rows, pivot columns)."""
    rows = [[Fraction(x) for x in r] for r in matrix]
    if not rows:
        return rows, []
    ncols = len(rows[0])
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        p = rows[r][c]
        rows[r] = [x / p for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows, pivots


def rank(matrix) -> int:
    return len(rref(matrix)[1])


def nullspace(matrix: Sequence[Sequence[Fraction]], ncols: int | None = None):
    """Basis of {x : M x = 0} as lists of Fractions."""
    if ncols is None:
        ncols = len(matrix[0]) if matrix else 0
    if not matrix:
        return [[Fraction(int(i == j)) for i in range(ncols)] for j in range(ncols)]
    rows, pivots = rref(matrix)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for r, pc in enumerate(pivots):
            v[pc] = -rows[r][f]
        basis.append(v)
    return basis


def solve(matrix, rhs):
    """One exact solution of M x = b, or None if the system is inconsistent."""
    nrows = len(rhs)
    if nrows == 0:
        return []
    ncols = len(matrix[0]) if matrix and matrix[0] is not None else 0
    aug = [list(matrix[i]) + [rhs[i]] for i in range(nrows)]
    rows, pivots = rref(aug)
    if ncols in pivots:
        return None
    x = [Fraction(0)] * ncols
    for r, pc in enumerate(pivots):
        x[pc] = rows[r][ncols]
    return x


def cokernel_certificate(matrix, rhs):
    """A vector y with y^T M = 0 and y . b != 0, or None if b is in the image."""
    nrows = len(rhs)
    ncols = len(matrix[0]) if nrows and matrix[0] else 0
    transpose = [[matrix[i][j] for i in range(nrows)] for j in range(ncols)]
    basis = nullspace(transpose, nrows) if ncols else [
        [Fraction(int(i == j)) for i in range(nrows)] for j in range(nrows)
    ]
    for y in basis:
        if sum(a * b for a, b in zip(y, rhs)) != 0:
            return y
    return None
