"""Tuple selections and the weight polytope.

A selection places, for every periodic node class, a block of adjacent
pairs drawn from the interfaces of that node's star. The polytope
constrains leaf weights to fixed pair sums together with reproduction of
the first-component marginal; its reference point ``t_bar`` is computed
by an exact phase-1 simplex against the stronger per-element marginal,
which makes the second-component marginal identity hold exactly as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .exact import find_feasible, frac, polytope_vertices
from .geometry import Triangulation, node_star
from .pwa import GradientMeasure
from .qp import project_onto_polytope


class DepthError(ValueError):
    def __init__(self, message, minimal_m=None):
        super().__init__(message)
        self.minimal_m = minimal_m


class MeshStructureError(ValueError):
    pass


class SelectionInfeasibleError(RuntimeError):
    pass


@dataclass
class TupleSelection:
    m: int
    dim: int                  # ambient space dimension N
    x: list                   # 2^m first-component vectors (Fraction tuples)
    y: list                   # 2^m second-component vectors
    element_of: list          # slot -> element id
    pair_interface: list      # pair -> interface id
    node_blocks: list         # per node class, list of slot indices
    t_bar: list               # exact feasible reference weights
    minimal_m: int
    tri: Triangulation = field(repr=False, default=None)
    measure: GradientMeasure = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return 2 ** self.m

    @property
    def pair_sum(self) -> Fraction:
        return Fraction(2) ** (1 - self.m)


def _star_interfaces(tri):
    stars = []
    for p in range(tri.n_classes):
        els, itfs = node_star(tri, p)
        if not itfs:
            raise MeshStructureError(f"node class {p} has no incident interfaces")
        stars.append(sorted(itfs))
    return stars


def _layout(tri, stars, m, n):
    """Slot layout: blocks of cyclically repeated interface pairs."""
    pairs_per_block = 2 ** (m - n - 1)
    element_of = []
    pair_interface = []
    node_blocks = []
    for p, star in enumerate(stars):
        base = len(element_of)
        for k in range(pairs_per_block):
            f = star[k % len(star)]
            itf = tri.interfaces[f]
            pair_interface.append(f)
            # first slot of the pair takes the higher element id
            element_of.append(itf.right)
            element_of.append(itf.left)
        node_blocks.append(list(range(base, base + 2 * pairs_per_block)))
    return element_of, pair_interface, node_blocks


def _t_bar_lp(tri, element_of, m):
    """Exact feasible weights: pair sums 2^(1-m), per-element mass lambda_i."""
    size = 2 ** m
    pair_sum = Fraction(2) ** (1 - m)
    rows, rhs = [], []
    for k in range(size // 2):
        row = [Fraction(0)] * size
        row[2 * k] = row[2 * k + 1] = Fraction(1)
        rows.append(row)
        rhs.append(pair_sum)
    for i, e in enumerate(tri.elements):
        row = [Fraction(0)] * size
        hit = False
        for j, el in enumerate(element_of):
            if el == i:
                row[j] = Fraction(1)
                hit = True
        if not hit:
            return None
        rows.append(row)
        rhs.append(e.volume)
    return find_feasible(rows, rhs)


def select_tuples(measure: GradientMeasure, tri: Triangulation,
                  m=None, max_escalation: int = 3) -> TupleSelection:
    """Build the pair selection at depth m (or the minimal feasible depth)."""
    n_classes = tri.n_classes
    n = n_classes.bit_length() - 1
    if 2 ** n != n_classes:
        raise MeshStructureError("node class count is not a power of 2")
    stars = _star_interfaces(tri)
    covered = set()
    for p in range(n_classes):
        covered.update(node_star(tri, p)[0])
    if covered != set(range(len(tri.elements))):
        raise MeshStructureError("node stars do not cover all elements")

    max_star = max(len(s) for s in stars)
    m0 = n + 1
    while 2 ** (m0 - n - 1) < max_star:
        m0 += 1

    minimal = None
    chosen = None
    for m_try in range(m0, m0 + max_escalation + 1):
        element_of, pair_interface, node_blocks = _layout(tri, stars, m_try, n)
        t_bar = _t_bar_lp(tri, element_of, m_try)
        if t_bar is not None:
            minimal = m_try
            chosen = (element_of, pair_interface, node_blocks, t_bar)
            break
    if minimal is None:
        raise SelectionInfeasibleError(
            f"no feasible weight assignment up to depth {m0 + max_escalation}")

    if m is None:
        m = minimal
    elif m < minimal:
        raise DepthError(f"depth {m} below minimal feasible depth {minimal}",
                         minimal_m=minimal)
    if m != minimal:
        element_of, pair_interface, node_blocks = _layout(tri, stars, m, n)
        t_bar = _t_bar_lp(tri, element_of, m)
        if t_bar is None:
            raise SelectionInfeasibleError(f"depth {m} layout infeasible")
    else:
        element_of, pair_interface, node_blocks, t_bar = chosen

    atoms = measure.atoms
    x = [atoms[e][1][0] for e in element_of]
    y = [atoms[e][1][1] for e in element_of]
    return TupleSelection(m, tri.dim, x, y, element_of, pair_interface,
                          node_blocks, t_bar, minimal, tri, measure)


@dataclass
class ThetaPolytope:
    m: int
    rows: list      # exact equality rows
    rhs: list
    t_bar: list
    support: list   # distinct first-component support vectors, row order
    _np_cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return 2 ** self.m

    def as_float(self):
        if "A" not in self._np_cache:
            self._np_cache["A"] = np.array([[float(x) for x in r] for r in self.rows])
            self._np_cache["b"] = np.array([float(x) for x in self.rhs])
        return self._np_cache["A"], self._np_cache["b"]


def build_theta(selection: TupleSelection, nu_u=None) -> ThetaPolytope:
    """Equality description: pair sums plus first-marginal matching rows."""
    size = selection.size
    if nu_u is None:
        nu_u = selection.measure.marginal_u
    rows, rhs = [], []
    for k in range(size // 2):
        row = [Fraction(0)] * size
        row[2 * k] = row[2 * k + 1] = Fraction(1)
        rows.append(row)
        rhs.append(selection.pair_sum)
    support = sorted(nu_u)
    for w in support:
        row = [Fraction(1) if selection.x[j] == w else Fraction(0)
               for j in range(size)]
        rows.append(row)
        rhs.append(nu_u[w])
    theta = ThetaPolytope(selection.m, rows, rhs, list(selection.t_bar), support)
    if not contains(theta, selection.t_bar):
        raise SelectionInfeasibleError("reference weights violate the polytope")
    return theta


def contains(theta: ThetaPolytope, t, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    t = list(t)
    if len(t) != theta.size:
        raise ValueError(f"expected dimension {theta.size}, got {len(t)}")
    if all(isinstance(v, (Fraction, int)) for v in t):
        if any(v < 0 for v in t):
            return False
        return all(sum(r * v for r, v in zip(row, t)) == c
                   for row, c in zip(theta.rows, theta.rhs))
    A, b = theta.as_float()
    tv = np.asarray(t, float)
    if np.min(tv) < -tol.nonneg:
        return False
    return bool(np.max(np.abs(A @ tv - b)) <= tol.membership)


def project(theta: ThetaPolytope, point):
    """Euclidean projection onto the polytope."""
    point = np.asarray(point, float)
    if point.size != theta.size:
        raise ValueError(f"expected dimension {theta.size}, got {point.size}")
    A, b = theta.as_float()
    x0 = np.array([float(v) for v in theta.t_bar])
    return project_onto_polytope(A, b, point, x0=x0)


def enumerate_vertices(theta: ThetaPolytope, cap: int = 16):
    """Exact vertex enumeration (tiny instances only)."""
    if theta.size > cap:
        raise ValueError(f"dimension {theta.size} exceeds vertex cap {cap}")
    return polytope_vertices(theta.rows, theta.rhs, theta.size)


def selection_to_json(sel: TupleSelection) -> dict:
    return {
        "m": sel.m,
        "X": [[str(c) for c in v] for v in sel.x],
        "Y": [[str(c) for c in v] for v in sel.y],
        "element_of": list(sel.element_of),
        "pair_interface": list(sel.pair_interface),
        "node_blocks": [list(b) for b in sel.node_blocks],
        "t_bar": [str(t) for t in sel.t_bar],
        "minimal_m": sel.minimal_m,
    }


def selection_from_json(data: dict, tri=None, measure=None) -> TupleSelection:
    return TupleSelection(
        data["m"],
        len(data["X"][0]),
        [tuple(frac(c) for c in v) for v in data["X"]],
        [tuple(frac(c) for c in v) for v in data["Y"]],
        list(data["element_of"]),
        list(data["pair_interface"]),
        [list(b) for b in data["node_blocks"]],
        [frac(t) for t in data["t_bar"]],
        data["minimal_m"],
        tri, measure,
    )
