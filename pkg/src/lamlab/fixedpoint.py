"""The recursion profile, the set-valued map as a polytope, fixed-point
search, joint-laminate verification, and the direction-preserving refit.

For weights with fixed pair sums the node positions of the recursion are
homogeneous linear functions of the leaf weights; they are represented
here as explicit (N x 2^m) operators so that the parallelism constraints
defining the map's image become linear equality rows in the unknown
weight vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import least_squares

from .config import DEFAULT_TOLERANCES, FixedPointConfig, Tolerances
from .hn import RANK_ONE_CONE, HnCertificate, evaluate_bottom_up, validate_certificate
from .pwa import PeriodicPwaMap, is_parallel
from .qp import (InfeasiblePolytopeError, feasible_point, project_onto_polytope,
                 random_feasible_point)
from .theta import ThetaPolytope, TupleSelection, build_theta, contains, select_tuples


class MembershipError(ValueError):
    pass


# -- linear position/direction operators --

@dataclass
class _Operators:
    pos_x: list   # pos_x[k]: array (2^k, N, 2^m), levels 0..m-1
    pos_y: list
    dir_x: list   # dir_x[k]: array (2^k, N, 2^m), levels 0..m-2
    dir_y: list
    last_dir_x: np.ndarray  # constant level m-1 directions, (2^{m-1}, N)
    last_dir_y: np.ndarray


def _operators(sel: TupleSelection) -> _Operators:
    if getattr(sel, "_ops_cache", None) is not None:
        return sel._ops_cache
    m, size, N = sel.m, sel.size, sel.dim
    X = np.array([[float(c) for c in v] for v in sel.x])
    Y = np.array([[float(c) for c in v] for v in sel.y])
    scale = 2.0 ** (m - 1)

    def build(V):
        lvl = np.zeros((size // 2, N, size))
        for i in range(size // 2):
            lvl[i, :, 2 * i] = scale * V[2 * i]
            lvl[i, :, 2 * i + 1] = scale * V[2 * i + 1]
        pos = [None] * m
        pos[m - 1] = lvl
        for k in range(m - 2, -1, -1):
            pos[k] = 0.5 * (pos[k + 1][0::2] + pos[k + 1][1::2])
        dirs = [pos[k + 1][0::2] - pos[k + 1][1::2] for k in range(m - 1)]
        return pos, dirs

    pos_x, dir_x = build(X)
    pos_y, dir_y = build(Y)
    ops = _Operators(pos_x, pos_y, dir_x, dir_y,
                     X[0::2] - X[1::2], Y[0::2] - Y[1::2])
    sel._ops_cache = ops
    return ops


def theta_of(sel: TupleSelection) -> ThetaPolytope:
    if getattr(sel, "_theta_cache", None) is None:
        sel._theta_cache = build_theta(sel)
    return sel._theta_cache


@dataclass
class HnStructure:
    m: int
    weights: list      # weights[k], arrays of length 2^k, levels 0..m
    rel_weights: list  # levels 0..m-1
    x: list            # x[k]: (2^k, N) arrays, levels 0..m
    y: list
    dir_x: list        # levels 0..m-1
    dir_y: list


def evaluate_profile(t, sel: TupleSelection,
                     tol: Tolerances = DEFAULT_TOLERANCES) -> HnStructure:
    """Full recursion structure for weights t (tolerant Theta membership)."""
    theta = theta_of(sel)
    if not contains(theta, list(np.asarray(t, float))):
        raise MembershipError("weights outside the polytope")
    t = np.asarray(t, float)
    m, size = sel.m, sel.size
    X = np.array([[float(c) for c in v] for v in sel.x])
    Y = np.array([[float(c) for c in v] for v in sel.y])
    weights = [t]
    xs, ys = [X], [Y]
    rels, dxs, dys = [], [], []
    cw, cx, cy = t, X, Y
    for k in range(m - 1, -1, -1):
        pw = cw[0::2] + cw[1::2]
        lam = np.where(pw > 0, np.divide(cw[1::2], np.where(pw > 0, pw, 1.0)), 0.5)
        px = (1 - lam)[:, None] * cx[0::2] + lam[:, None] * cx[1::2]
        py = (1 - lam)[:, None] * cy[0::2] + lam[:, None] * cy[1::2]
        weights.insert(0, pw)
        rels.insert(0, lam)
        xs.insert(0, px)
        ys.insert(0, py)
        dxs.insert(0, cx[0::2] - cx[1::2])
        dys.insert(0, cy[0::2] - cy[1::2])
        cw, cx, cy = pw, px, py
    return HnStructure(m, weights, rels, xs, ys, dxs, dys)


@dataclass
class TPolytope:
    theta: ThetaPolytope
    rows: np.ndarray      # parallelism rows (possibly empty)
    anchors: list         # (k, i) per constrained node
    t: np.ndarray         # the weight vector the image was built at

    def full_system(self):
        A, b = self.theta.as_float()
        if self.rows.size:
            A = np.vstack([A, self.rows])
            b = np.concatenate([b, np.zeros(len(self.rows))])
        return A, b


def build_T(t, sel: TupleSelection,
            tol: Tolerances = DEFAULT_TOLERANCES) -> TPolytope:
    """Image polytope of the set-valued map at t: Theta rows plus, for each
    internal level below the last, rows forcing the second-component
    direction parallel to the first-component direction at t."""
    t = np.asarray(t, float)
    ops = _operators(sel)
    N = sel.dim
    rows, anchors = [], []
    for k in range(sel.m - 1):
        for i in range(2 ** k):
            c = ops.dir_x[k][i] @ t
            if np.max(np.abs(c)) <= tol.zero_direction:
                continue  # zero direction constrains nothing
            D = ops.dir_y[k][i]
            for a in range(N):
                for b_ in range(a + 1, N):
                    row = c[a] * D[b_] - c[b_] * D[a]
                    nrm = np.linalg.norm(row)
                    if nrm > 0:
                        rows.append(row / nrm)
                        anchors.append((k, i))
    rows = np.array(rows) if rows else np.zeros((0, sel.size))
    return TPolytope(theta_of(sel), rows, anchors, t)


def member_T(s, t, sel: TupleSelection,
             tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """True iff s lies in Theta and the directions of s at every internal
    level are parallel to the directions of t."""
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    if s.size != sel.size or t.size != sel.size:
        raise ValueError(f"expected dimension {sel.size}")
    if not contains(theta_of(sel), list(s), tol):
        return False
    ops = _operators(sel)
    for k in range(sel.m - 1):
        for i in range(2 ** k):
            c = ops.dir_x[k][i] @ t
            if np.max(np.abs(c)) <= tol.zero_direction:
                continue
            ys = ops.dir_y[k][i] @ s
            if not is_parallel(tuple(c), tuple(ys), tol.parallel):
                return False
    return True


@dataclass
class FixedPointReport:
    outcome: str                  # converged | depth-escalated | failed
    t_star: np.ndarray = None
    iterations: int = 0
    restarts: int = 0
    escalations: int = 0
    history: list = field(default_factory=list)
    certificate: HnCertificate = None
    certificate_report: object = None
    selection: TupleSelection = None
    failure_reason: str = None


def find_fixed_point(sel: TupleSelection,
                     config: FixedPointConfig = FixedPointConfig()) -> FixedPointReport:
    """Projection iteration t_{n+1} = nearest point of the image at t_n,
    with randomized feasible restarts and depth escalation on stagnation.

    Image infeasibility is surfaced loudly: it contradicts the guaranteed
    non-emptiness for gradient-derived selections.
    """
    tol = config.tolerances
    theta = theta_of(sel)
    rng = np.random.default_rng(config.seed)
    t = np.array([float(v) for v in sel.t_bar])
    history = []
    restarts = 0
    iterations = 0
    while True:
        for _ in range(config.max_iter):
            if member_T(t, t, sel, tol):
                return _finish(sel, t, iterations, restarts, history, tol)
            image = build_T(t, sel, tol)
            A, b = image.full_system()
            try:
                x0 = feasible_point(A, b, upper=float(sel.pair_sum))
            except InfeasiblePolytopeError as exc:
                return FixedPointReport(
                    "failed", t_star=t, iterations=iterations, restarts=restarts,
                    history=history, selection=sel,
                    failure_reason=f"image polytope infeasible at iterate "
                                   f"{iterations}: {exc} -- this contradicts the "
                                   f"non-emptiness guarantee and must be investigated")
            s = project_onto_polytope(A, b, t, x0=x0)
            d = float(np.max(np.abs(s - t)))
            history.append(d)
            t = s
            iterations += 1
            if d <= tol.convergence:
                return _finish(sel, t, iterations, restarts, history, tol)
            if _stagnating(history, config.stagnation_window, tol.convergence):
                break
        if restarts < config.max_restarts:
            restarts += 1
            A, b = theta.as_float()
            t = random_feasible_point(A, b, rng, upper=float(sel.pair_sum))
            continue
        if config.max_depth_escalations > 0 and sel.measure is not None:
            deeper = select_tuples(sel.measure, sel.tri, m=sel.m + 1)
            sub = FixedPointConfig(
                max_iter=config.max_iter, max_restarts=config.max_restarts,
                max_depth_escalations=config.max_depth_escalations - 1,
                seed=config.seed + 1, stagnation_window=config.stagnation_window,
                tolerances=tol)
            inner = find_fixed_point(deeper, sub)
            outcome = "depth-escalated" if inner.outcome in ("converged",
                                                            "depth-escalated") else "failed"
            return FixedPointReport(
                outcome, t_star=inner.t_star, iterations=iterations + inner.iterations,
                restarts=restarts + inner.restarts, escalations=inner.escalations + 1,
                history=history + inner.history, certificate=inner.certificate,
                certificate_report=inner.certificate_report, selection=inner.selection,
                failure_reason=inner.failure_reason)
        return FixedPointReport(
            "failed", t_star=t, iterations=iterations, restarts=restarts,
            history=history, selection=sel,
            failure_reason="iteration budget exhausted without convergence")


def _stagnating(history, window, tol):
    if len(history) < 2 * window:
        return False
    recent = min(history[-window:])
    earlier = min(history[-2 * window:-window])
    return recent > tol and recent > 0.5 * earlier


def _finish(sel, t, iterations, restarts, history, tol):
    cert, report = verify_joint_laminate(t, sel, tol)
    if report.ok:
        return FixedPointReport("converged", t_star=t, iterations=iterations,
                                restarts=restarts, history=history,
                                certificate=cert, certificate_report=report,
                                selection=sel)
    return FixedPointReport("failed", t_star=t, iterations=iterations,
                            restarts=restarts, history=history,
                            certificate_report=report, selection=sel,
                            failure_reason="converged iterate failed certificate "
                                           "validation: " + "; ".join(report.violations))


def verify_joint_laminate(t_star, sel: TupleSelection,
                          tol: Tolerances = DEFAULT_TOLERANCES):
    """Assemble the joint two-row tree at t_star and validate it as a
    rank-one certificate for the underlying measure.

    Returns (certificate, report). With exact rational weights the check
    is exact; with floats the centralized tolerances apply.
    """
    exact = all(isinstance(v, (Fraction, int)) for v in t_star)
    if exact:
        weights = [Fraction(v) for v in t_star]
        mats = [(sel.x[j], sel.y[j]) for j in range(sel.size)]
        target = [(w, m) for m, w in _joint_target_exact(sel)]
        vtol = 0.0
    else:
        weights = [float(v) for v in t_star]
        mats = [(tuple(float(c) for c in sel.x[j]), tuple(float(c) for c in sel.y[j]))
                for j in range(sel.size)]
        target = [(float(w), tuple(tuple(float(c) for c in row) for row in m))
                  for m, w in _joint_target_exact(sel)]
        vtol = max(tol.parallel, 1e-9)
    tree = evaluate_bottom_up(weights, mats, tol=vtol)
    cert = HnCertificate(tree, target)
    report = validate_certificate(cert, RANK_ONE_CONE, tol=vtol)
    return cert, report


def _joint_target_exact(sel: TupleSelection):
    merged = {}
    for w, (u, v) in sel.measure.atoms:
        key = (u, v)
        merged[key] = merged.get(key, Fraction(0)) + w
    return sorted(merged.items())


# -- direction-preserving refit --

@dataclass
class RefitBaseline:
    selection: TupleSelection
    pmap: PeriodicPwaMap
    t: np.ndarray                 # baseline weights
    v_values: np.ndarray          # baseline second-component nodal values
    directions: list              # directions[k][i], levels 0..m-1 (floats)
    layout: list                  # parameter layout entries
    params0: np.ndarray
    grad_solvers: list            # per-element inverted span matrices


@dataclass
class RefitResult:
    success: bool
    s: np.ndarray = None
    params: np.ndarray = None
    residual: float = None
    message: str = ""


def make_refit_baseline(pmap: PeriodicPwaMap, sel: TupleSelection, t=None,
                        tol: Tolerances = DEFAULT_TOLERANCES) -> RefitBaseline:
    """Freeze the decomposition directions of the first component at t and
    express the second-component tree through scalar displacements.

    Nodes whose frozen direction vanishes get an unrestricted displacement
    vector instead of a scalar (any direction is parallel to zero)."""
    if t is None:
        t = np.array([float(v) for v in sel.t_bar])
    t = np.asarray(t, float)
    prof = evaluate_profile(t, sel, tol)
    m, N = sel.m, sel.dim
    tri = sel.tri

    directions = []
    for k in range(m - 1):
        lvl = [prof.dir_x[k][i].copy() for i in range(2 ** k)]
        directions.append(lvl)
    last = []
    for i in range(sel.size // 2):
        itf = tri.interfaces[sel.pair_interface[i]]
        last.append(np.array(itf.unit_normal))
    directions.append(last)

    layout = []
    params = []
    for k in range(m - 1):
        for i in range(2 ** k):
            V = directions[k][i]
            delta = prof.y[k + 1][2 * i + 1] - prof.y[k][i]
            if np.linalg.norm(V) <= tol.zero_direction:
                layout.append(("vec", k, i))
                params.extend(delta)
            else:
                layout.append(("scalar", k, i))
                params.append(float(delta @ V) / float(V @ V))
    for i in range(sel.size // 2):
        V = directions[m - 1][i]
        d_hi = prof.y[m][2 * i + 1] - prof.y[m - 1][i]
        d_lo = prof.y[m][2 * i] - prof.y[m - 1][i]
        layout.append(("pair", m - 1, i))
        params.append(float(d_hi @ V) / float(V @ V))
        params.append(-float(d_lo @ V) / float(V @ V))

    solvers = []
    for e in tri.elements:
        coords = [tri.nodes[p] for p in e.vertices]
        span = np.array([[float(c) - float(c0) for c, c0 in zip(cc, coords[0])]
                         for cc in coords[1:]])
        solvers.append(np.linalg.inv(span))

    v_values = np.array([float(v) for _, v in pmap.values])
    return RefitBaseline(sel, pmap, t, v_values, directions, layout,
                         np.array(params, float), solvers)


def _v_gradients(base: RefitBaseline, v_values):
    tri = base.selection.tri
    out = []
    for solver, e in zip(base.grad_solvers, tri.elements):
        vals = [v_values[tri.node_class[p]] for p in e.vertices]
        rhs = np.array([vals[k + 1] - vals[0] for k in range(len(vals) - 1)])
        out.append(solver @ rhs)
    return out


def _refit_forward(base: RefitBaseline, params):
    sel = base.selection
    m, N = sel.m, sel.dim
    y = [np.zeros((1, N))]
    disp = {}
    pair_pm = {}
    pos = 0
    for entry in base.layout:
        kind, k, i = entry
        if kind == "vec":
            disp[(k, i)] = params[pos:pos + N]
            pos += N
        elif kind == "scalar":
            disp[(k, i)] = params[pos] * base.directions[k][i]
            pos += 1
        else:
            pair_pm[i] = (params[pos], params[pos + 1])
            pos += 2
    for k in range(m - 1):
        cur = y[k]
        nxt = np.zeros((2 ** (k + 1), N))
        for i in range(2 ** k):
            nxt[2 * i] = cur[i] - disp[(k, i)]
            nxt[2 * i + 1] = cur[i] + disp[(k, i)]
        y.append(nxt)
    leaves = np.zeros((sel.size, N))
    lam = np.zeros(sel.size // 2)
    for i in range(sel.size // 2):
        sp, sm = pair_pm[i]
        V = base.directions[m - 1][i]
        leaves[2 * i + 1] = y[m - 1][i] + sp * V
        leaves[2 * i] = y[m - 1][i] - sm * V
        tot = sp + sm
        lam[i] = sm / tot if abs(tot) > 1e-14 else 0.5
    pair_sum = float(sel.pair_sum)
    s = np.zeros(sel.size)
    s[1::2] = pair_sum * lam
    s[0::2] = pair_sum * (1 - lam)
    return leaves, s


def _refit_residual(base: RefitBaseline, params, grads, marginal_rows):
    leaves, s = _refit_forward(base, params)
    sel = base.selection
    res = []
    for j in range(sel.size):
        res.extend(leaves[j] - grads[sel.element_of[j]])
    for row, rhs in marginal_rows:
        res.append(float(row @ s - rhs))
    return np.array(res)


def direction_preserving_refit(base: RefitBaseline, perturbed_v_values,
                               residual_tol: float = 1e-8,
                               tol: Tolerances = DEFAULT_TOLERANCES) -> RefitResult:
    """Re-solve the displacement system so the second-component tree
    matches perturbed nodal values while keeping the frozen directions."""
    target = np.asarray(perturbed_v_values, float)
    if target.shape != base.v_values.shape:
        raise ValueError("one nodal value per periodic class expected")
    if np.array_equal(target, base.v_values):
        return RefitResult(True, s=base.t.copy(), params=base.params0.copy(),
                           residual=0.0, message="identity perturbation")
    grads = _v_gradients(base, target)
    theta = theta_of(base.selection)
    A, b = theta.as_float()
    half = base.selection.size // 2
    marginal_rows = [(A[r], b[r]) for r in range(half, len(b))]

    fun = lambda p: _refit_residual(base, p, grads, marginal_rows)
    sol = least_squares(fun, base.params0, method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    resid = float(np.max(np.abs(sol.fun)))
    leaves, s = _refit_forward(base, sol.x)
    if resid > residual_tol:
        return RefitResult(False, s=s, params=sol.x, residual=resid,
                           message=f"residual {resid:.3e} above {residual_tol:.1e}")
    if np.min(s) < -tol.nonneg:
        return RefitResult(False, s=s, params=sol.x, residual=resid,
                           message="induced weights leave the polytope")
    return RefitResult(True, s=s, params=sol.x, residual=resid)
