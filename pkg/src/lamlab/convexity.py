"""Integrand library and Jensen-inequality checks for discrete gradient
measures and laminate certificates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

CLASS_TAGS = ("convex", "polyconvex", "rank-one-convex", "rank-one-affine")


@dataclass
class TestFunction:
    __test__ = False  # not a pytest class despite the name

    name: str
    evaluator: callable          # (2 x N numpy array) -> float
    tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in CLASS_TAGS:
            raise ValueError(f"unknown class tag {self.tag!r}")

    def __call__(self, F) -> float:
        return float(self.evaluator(np.asarray(F, float)))


def _as_matrix(atom):
    u, v = atom
    return np.array([[float(c) for c in u], [float(c) for c in v]])


def jensen_gap(psi: TestFunction, measure) -> float:
    """Sum_i w_i psi(F_i) - psi(mean F); nonnegative for quasiconvex psi
    on measures extracted from periodic maps."""
    mean = np.zeros_like(_as_matrix(measure.atoms[0][1]))
    total = 0.0
    for w, uv in measure.atoms:
        F = _as_matrix(uv)
        total += float(w) * psi(F)
        mean += float(w) * F
    return total - psi(mean)


@dataclass
class ProbeReport:
    samples: int
    violations: int
    worst: float          # most negative second difference (0 if none)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def rank_one_convexity_probe(psi: TestFunction, rng, samples: int = 200,
                             n_cols: int = 2, h: float = 1e-3,
                             tol: float = 1e-9) -> ProbeReport:
    """Convexity of psi along random rank-one segments F + t a (x) n,
    judged by centered second differences."""
    worst = 0.0
    bad = 0
    for _ in range(samples):
        F = rng.standard_normal((2, n_cols))
        a = rng.standard_normal(2)
        n = rng.standard_normal(n_cols)
        a /= np.linalg.norm(a)
        n /= np.linalg.norm(n)
        R = np.outer(a, n)
        d2 = psi(F + h * R) - 2.0 * psi(F) + psi(F - h * R)
        if d2 < worst:
            worst = d2
        if d2 < -tol:
            bad += 1
    return ProbeReport(samples, bad, worst)


def _rank_one_matrix(angles, n_cols):
    """Unit a in R^2 and unit n in R^n_cols from angle coordinates."""
    phi = angles[0]
    a = np.array([np.cos(phi), np.sin(phi)])
    if n_cols == 2:
        th = angles[1]
        n = np.array([np.cos(th), np.sin(th)])
    else:
        th, ps = angles[1], angles[2]
        n = np.array([np.cos(th) * np.cos(ps), np.cos(th) * np.sin(ps),
                      np.sin(th)])
    return np.outer(a, n)


def quadratic_rank_one_test(q: callable, n_cols: int = 2, grid: int = 48,
                            tol: float = 1e-10) -> bool:
    """True iff the quadratic form q is nonnegative on rank-one matrices,
    decided by an angle grid plus local refinement."""
    n_ang = 2 if n_cols == 2 else 3
    axes = [np.linspace(0.0, np.pi, grid, endpoint=False)] * n_ang
    best = (np.inf, None)
    for angles in np.array(np.meshgrid(*axes)).reshape(n_ang, -1).T:
        val = q(_rank_one_matrix(angles, n_cols))
        if val < best[0]:
            best = (val, angles)
    res = minimize(lambda a: q(_rank_one_matrix(a, n_cols)), best[1],
                   method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14})
    lowest = min(best[0], float(res.fun))
    scale = max(1.0, abs(q(np.ones((2, n_cols)))))
    return lowest >= -tol * scale


# -- builtin integrands --

def frobenius_power(p: float) -> TestFunction:
    return TestFunction(f"frobenius^{p}",
                        lambda F: np.linalg.norm(F) ** p,
                        "convex", {"p": p})


def determinant() -> TestFunction:
    """2x2 determinant: a null Lagrangian, affine on rank-one lines."""
    return TestFunction("det", lambda F: np.linalg.det(F), "rank-one-affine")


def minor_2x2(c1: int, c2: int) -> TestFunction:
    """The 2x2 minor on columns (c1, c2) of a 2xN matrix."""
    return TestFunction(f"minor[{c1},{c2}]",
                        lambda F: F[0, c1] * F[1, c2] - F[0, c2] * F[1, c1],
                        "rank-one-affine", {"cols": [c1, c2]})


def _quadratic_from(Q):
    return lambda F: float(F.reshape(-1) @ Q @ F.reshape(-1))


def random_psd_quadratic(rng, n_cols: int = 2) -> TestFunction:
    d = 2 * n_cols
    G = rng.standard_normal((d, d))
    Q = G @ G.T
    return TestFunction("psd-quadratic", _quadratic_from(Q), "convex",
                        {"Q": Q.tolist()})


def psd_plus_minor_quadratic(rng, n_cols: int = 2) -> TestFunction:
    """PSD quadratic plus a multiple of a 2x2 minor: rank-one convex (the
    minor vanishes on rank-one matrices) but indefinite for large factors."""
    d = 2 * n_cols
    G = rng.standard_normal((d, d))
    Q = G @ G.T
    alpha = float(rng.uniform(-3.0, 3.0)) * float(np.trace(Q)) / d
    c2 = int(rng.integers(1, n_cols))
    M = np.zeros((d, d))
    # symmetrized bilinear form of F[0,0]*F[1,c2] - F[0,c2]*F[1,0]
    M[0, n_cols + c2] = M[n_cols + c2, 0] = 0.5
    M[c2, n_cols] = M[n_cols, c2] = -0.5
    return TestFunction("psd+minor", _quadratic_from(Q + alpha * M),
                        "rank-one-convex", {"alpha": alpha})


def random_rank_one_convex_quadratic(rng, n_cols: int = 2,
                                     max_tries: int = 200) -> TestFunction:
    """Random quadratic admitted by the rank-one nonnegativity test."""
    d = 2 * n_cols
    for _ in range(max_tries):
        S = rng.standard_normal((d, d))
        Q = 0.5 * (S + S.T)
        q = _quadratic_from(Q)
        if quadratic_rank_one_test(q, n_cols):
            return TestFunction("random-r1c-quadratic", q,
                                "rank-one-convex", {"Q": Q.tolist()})
    # fall back to a guaranteed member of the class
    return psd_plus_minor_quadratic(rng, n_cols)


def builtin_suite(rng, n_cols: int = 2, random_quadratics: int = 10) -> list:
    fns = [frobenius_power(2), frobenius_power(4)]
    if n_cols == 2:
        fns.append(determinant())
    for c2 in range(1, n_cols):
        fns.append(minor_2x2(0, c2))
    for _ in range(random_quadratics):
        fns.append(random_psd_quadratic(rng, n_cols))
        fns.append(psd_plus_minor_quadratic(rng, n_cols))
    return fns
