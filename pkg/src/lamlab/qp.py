"""Euclidean projection onto {x : A x = b, x >= 0}.

An interior-point solve (cvxopt) locates the projection and its active
bounds; an equality-constrained polish then restores the equality rows to
machine precision. The equality block may be rank-deficient (our
polytopes carry redundant rows), so it is reduced to independent rows
first. Intended for the desk-scale dimensions of this project.
"""
from __future__ import annotations

import numpy as np
from cvxopt import matrix as cvx_matrix, solvers as cvx_solvers
from scipy.linalg import qr
from scipy.optimize import linprog

cvx_solvers.options["show_progress"] = False


class InfeasiblePolytopeError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def independent_rows(A, b, tol=1e-11):
    """Select a maximal independent subset of equality rows."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    if A.size == 0:
        return A, b
    _, R, piv = qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return A[:0], b[:0]
    r = int(np.sum(diag > tol * diag[0]))
    keep = np.sort(piv[:r])
    return A[keep], b[keep]


def feasible_point(A, b, upper=None):
    """Some feasible point of {A x = b, 0 <= x (<= upper)} via linprog."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    n = A.shape[1]
    res = linprog(np.zeros(n), A_eq=A, b_eq=b, bounds=[(0, upper)] * n,
                  method="highs")
    if not res.success:
        raise InfeasiblePolytopeError("no feasible point", residual=res.status)
    return res.x


def random_feasible_point(A, b, rng, upper=None, mixtures: int = 4):
    """Random vertex mixture: optimize random costs, then Dirichlet-mix."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    n = A.shape[1]
    verts = []
    for _ in range(mixtures):
        c = rng.standard_normal(n)
        res = linprog(c, A_eq=A, b_eq=b, bounds=[(0, upper)] * n,
                      method="highs")
        if res.status == 3:  # unbounded: flip the objective
            res = linprog(-c, A_eq=A, b_eq=b, bounds=[(0, upper)] * n,
                          method="highs")
        if res.success:
            verts.append(res.x)
    if not verts:
        raise InfeasiblePolytopeError("no feasible point")
    w = rng.dirichlet(np.ones(len(verts)))
    return np.einsum("i,ij->j", w, np.array(verts))


def _eqp_target(A, b, p, active):
    """Minimizer of ||x - p|| with A x = b and x fixed to 0 on `active`."""
    n = p.size
    target = np.zeros(n)
    free = ~active
    if free.any():
        Af = A[:, free]
        lam, *_ = np.linalg.lstsq(Af @ Af.T, b - Af @ p[free], rcond=None)
        target[free] = p[free] + Af.T @ lam
    return target


def project_onto_polytope(A, b, p, x0=None):
    """argmin ||x - p||^2 subject to A x = b, x >= 0."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    p = np.asarray(p, float)
    n = p.size
    Ar, br = independent_rows(A, b)

    P = cvx_matrix(np.eye(n))
    q = cvx_matrix(-p)
    G = cvx_matrix(-np.eye(n))
    h = cvx_matrix(np.zeros(n))
    init = {}
    if x0 is not None:
        init["x"] = cvx_matrix(np.maximum(np.asarray(x0, float), 1e-12))
    try:
        sol = cvx_solvers.qp(P, q, G, h, cvx_matrix(Ar), cvx_matrix(br),
                             initvals=init or None)
    except (ValueError, ArithmeticError) as exc:
        raise InfeasiblePolytopeError(f"interior-point solve failed: {exc}")
    if sol["status"] not in ("optimal", "unknown"):
        raise InfeasiblePolytopeError(f"projection failed: {sol['status']}")
    x = np.array(sol["x"]).ravel()
    if sol["status"] == "unknown" and np.max(np.abs(Ar @ x - br)) > 1e-6:
        raise InfeasiblePolytopeError("projection did not reach feasibility")

    # polish: fix the (near-)active bounds to zero and solve the equality QP
    active = x < 1e-7
    for _ in range(n + 1):
        target = _eqp_target(Ar, br, p, active)
        neg = (~active) & (target < -1e-12)
        if not neg.any():
            target[active] = 0.0
            target = np.maximum(target, 0.0)
            if np.max(np.abs(Ar @ target - br)) <= 1e-9:
                return target
            break
        active |= neg
    return np.maximum(x, 0.0)
