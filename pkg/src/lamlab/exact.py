"""Exact rational linear algebra: Gaussian elimination, a small dense
phase-1 simplex for feasibility, and vertex enumeration for tiny polytopes.

Everything here works on ``fractions.Fraction`` end to end so that oracle
paths survive without rounding.
"""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations

ZERO = Fraction(0)
ONE = Fraction(1)


def frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)  # exact binary value
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot convert {type(x)} to Fraction")


def row_reduce(M):
    """Reduced row echelon form. Returns (rref, pivot_columns)."""
    M = [[frac(x) for x in row] for row in M]
    if not M:
        return M, []
    rows, cols = len(M), len(M[0])
    pivots = []
    r = 0
    for c in range(cols):
        pivot = next((i for i in range(r, rows) if M[i][c] != 0), None)
        if pivot is None:
            continue
        M[r], M[pivot] = M[pivot], M[r]
        pv = M[r][c]
        M[r] = [x / pv for x in M[r]]
        for i in range(rows):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return M, pivots


def matrix_rank(M) -> int:
    _, pivots = row_reduce(M)
    return len(pivots)


def solve_unique(A, b):
    """Solve A x = b when the solution is unique; None if inconsistent
    or underdetermined."""
    if not A:
        return []
    n = len(A[0])
    aug = [list(row) + [bi] for row, bi in zip(A, b)]
    R, pivots = row_reduce(aug)
    if n in pivots:  # pivot in rhs column -> inconsistent
        return None
    if len(pivots) < n:
        return None
    x = [ZERO] * n
    for r, c in enumerate(pivots):
        x[c] = R[r][n]
    return x


def find_feasible(A, b):
    """Find t >= 0 with A t = b via phase-1 simplex (Bland's rule).

    Returns a list of Fractions or None when infeasible. Redundant rows
    are fine; the artificial basis absorbs them.
    """
    m = len(A)
    if m == 0:
        return []
    n = len(A[0])
    rows = [[frac(x) for x in row] for row in A]
    rhs = [frac(x) for x in b]
    for i in range(m):
        if rhs[i] < 0:
            rows[i] = [-x for x in rows[i]]
            rhs[i] = -rhs[i]
    # tableau: n structural + m artificial columns + rhs
    T = [rows[i] + [ONE if j == i else ZERO for j in range(m)] + [rhs[i]]
         for i in range(m)]
    basis = [n + i for i in range(m)]
    ncols = n + m
    # reduced-cost row for min(sum of artificials), priced out for the
    # artificial basis: zero on artificial columns, -column-sum elsewhere
    obj = [ZERO] * (ncols + 1)
    for i in range(m):
        for j in range(n):
            obj[j] -= T[i][j]
        obj[ncols] -= T[i][ncols]

    while True:
        # artificials never re-enter
        enter = next((j for j in range(n) if obj[j] < 0), None)
        if enter is None:
            break
        ratio, leave = None, None
        for i in range(m):
            if T[i][enter] > 0:
                r = T[i][ncols] / T[i][enter]
                if ratio is None or r < ratio or (r == ratio and basis[i] < basis[leave]):
                    ratio, leave = r, i
        if leave is None:
            raise ArithmeticError("phase-1 simplex unbounded (should not happen)")
        pv = T[leave][enter]
        T[leave] = [x / pv for x in T[leave]]
        for i in range(m):
            if i != leave and T[i][enter] != 0:
                f = T[i][enter]
                T[i] = [a - f * c for a, c in zip(T[i], T[leave])]
        f = obj[enter]
        if f != 0:
            obj = [a - f * c for a, c in zip(obj, T[leave])]
        basis[leave] = enter

    if -obj[ncols] != 0:  # residual infeasibility mass
        return None
    x = [ZERO] * n
    for i, bi in enumerate(basis):
        if bi < n:
            x[bi] = T[i][ncols]
    # belt and braces: confirm the claimed solution
    for row, c in zip(rows, rhs):
        if sum(a * v for a, v in zip(row, x)) != c:
            return None
    return x


def polytope_vertices(A, b, n):
    """All vertices of {t in R^n : A t = b, t >= 0}, exactly.

    Enumerates zero-sets of size n - rank(A); intended for tiny systems.
    """
    if n == 0:
        return []
    r = matrix_rank(A)
    k = n - r
    verts = []
    seen = set()
    for zero_set in combinations(range(n), k):
        keep = [j for j in range(n) if j not in zero_set]
        sub = [[row[j] for j in keep] for row in A]
        sol = solve_unique(sub, b)
        if sol is None or any(x < 0 for x in sol):
            continue
        v = [ZERO] * n
        for j, x in zip(keep, sol):
            v[j] = x
        key = tuple(v)
        if key not in seen:
            seen.add(key)
            verts.append(v)
    return verts


# -- small exact vector helpers used across modules --

def vec_sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def vec_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def vec_scale(c, a):
    return tuple(c * x for x in a)


def vec_dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def cross_minors(a, b):
    """All 2x2 minors of the 2xN matrix with rows a, b."""
    n = len(a)
    return [a[i] * b[j] - a[j] * b[i] for i in range(n) for j in range(i + 1, n)]


def is_parallel_exact(a, b) -> bool:
    return all(m == 0 for m in cross_minors(a, b))
