"""Q-periodic two-component piecewise-affine maps and their discrete
gradient measures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .config import DEFAULT_TOLERANCES
from .exact import frac, solve_unique, vec_sub, cross_minors
from .geometry import Triangulation


class DegenerateSimplexError(ValueError):
    pass


@dataclass
class PeriodicPwaMap:
    tri: Triangulation
    values: list  # per periodic node class: (u, v), exact rationals

    def __post_init__(self):
        if len(self.values) != self.tri.n_classes:
            raise ValueError("one (u, v) value pair per periodic node class")
        self.values = [(frac(u), frac(v)) for u, v in self.values]

    @property
    def q(self) -> int:
        """Independent nodal degrees of freedom per component."""
        return self.tri.n_classes


@dataclass
class GradientMeasure:
    atoms: list  # (weight, (u_row, v_row)); weights exact, rows Fraction tuples

    @property
    def barycenter(self):
        n = len(self.atoms[0][1][0])
        bu = [Fraction(0)] * n
        bv = [Fraction(0)] * n
        for w, (u, v) in self.atoms:
            for d in range(n):
                bu[d] += w * u[d]
                bv[d] += w * v[d]
        return tuple(bu), tuple(bv)

    @property
    def marginal_u(self):
        out = {}
        for w, (u, _) in self.atoms:
            out[u] = out.get(u, Fraction(0)) + w
        return out

    @property
    def marginal_v(self):
        out = {}
        for w, (_, v) in self.atoms:
            out[v] = out.get(v, Fraction(0)) + w
        return out

    @property
    def support_u(self):
        return sorted(self.marginal_u)

    @property
    def support_v(self):
        return sorted(self.marginal_v)

    def merged(self):
        """Atoms merged by equal (u, v) matrix, for reporting."""
        out = {}
        for w, uv in self.atoms:
            out[uv] = out.get(uv, Fraction(0)) + w
        return sorted(out.items(), key=lambda kv: kv[0])


def gradient_per_element(pmap: PeriodicPwaMap):
    """One 2xN matrix (u-row, v-row) per element, exact."""
    tri = pmap.tri
    out = []
    for e in tri.elements:
        coords = [tri.nodes[p] for p in e.vertices]
        vals = [pmap.values[tri.node_class[p]] for p in e.vertices]
        span = [vec_sub(c, coords[0]) for c in coords[1:]]
        rows = []
        for comp in range(2):
            rhs = [vals[k + 1][comp] - vals[0][comp] for k in range(len(span))]
            g = solve_unique(span, rhs)
            if g is None:
                raise DegenerateSimplexError(f"degenerate simplex {e.vertices}")
            rows.append(tuple(g))
        out.append((rows[0], rows[1]))
    return out


def extract_measure(pmap: PeriodicPwaMap) -> GradientMeasure:
    """Discrete gradient measure; element identity kept (no merging)."""
    grads = gradient_per_element(pmap)
    atoms = [(e.volume, g) for e, g in zip(pmap.tri.elements, grads)]
    return GradientMeasure(atoms)


def is_parallel(a, b, tol=DEFAULT_TOLERANCES.parallel) -> bool:
    """Scale-free parallelism; the zero vector is parallel to everything."""
    if all(isinstance(x, (Fraction, int)) for x in tuple(a) + tuple(b)):
        return all(m == 0 for m in cross_minors(a, b))
    na = math.sqrt(sum(float(x) ** 2 for x in a))
    nb = math.sqrt(sum(float(x) ** 2 for x in b))
    scale = max(1.0, na * nb)
    dot = abs(sum(float(x) * float(y) for x, y in zip(a, b)))
    if na * nb - dot > tol * scale:
        return False
    return all(abs(float(m)) <= tol * scale for m in cross_minors(
        tuple(float(x) for x in a), tuple(float(y) for y in b)))


@dataclass
class JumpReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def check_jump_compatibility(measure: GradientMeasure, tri: Triangulation,
                             tol=DEFAULT_TOLERANCES.parallel) -> JumpReport:
    """Across each interface the u- and v-jumps must be parallel to the
    interface normal."""
    v = []
    atoms = measure.atoms
    for k, itf in enumerate(tri.interfaces):
        _, (ui, vi) = atoms[itf.left]
        _, (uj, vj) = atoms[itf.right]
        n = itf.direction
        if not is_parallel(vec_sub(ui, uj), n, tol):
            v.append(f"interface {k}: u-jump not along normal")
        if not is_parallel(vec_sub(vi, vj), n, tol):
            v.append(f"interface {k}: v-jump not along normal")
    return JumpReport(v)


def random_map(tri: Triangulation, rng, K: int = 5) -> PeriodicPwaMap:
    """Random integer nodal values in [-K, K]; exact-rational friendly."""
    vals = [(int(rng.integers(-K, K + 1)), int(rng.integers(-K, K + 1)))
            for _ in range(tri.n_classes)]
    return PeriodicPwaMap(tri, vals)


def equal_components_map(tri: Triangulation, rng, K: int = 5) -> PeriodicPwaMap:
    vals = []
    for _ in range(tri.n_classes):
        u = int(rng.integers(-K, K + 1))
        vals.append((u, u))
    return PeriodicPwaMap(tri, vals)


def scaled_components_map(tri: Triangulation, rng, K: int = 5,
                          alpha: Fraction = Fraction(2)) -> PeriodicPwaMap:
    vals = []
    for _ in range(tri.n_classes):
        u = int(rng.integers(-K, K + 1))
        vals.append((u, alpha * u))
    return PeriodicPwaMap(tri, vals)


# -- JSON schemas --

def map_to_json(pmap: PeriodicPwaMap) -> dict:
    return {"nodal_values": [[str(u), str(v)] for u, v in pmap.values]}


def map_from_json(data: dict, tri: Triangulation) -> PeriodicPwaMap:
    return PeriodicPwaMap(tri, [(frac(u), frac(v)) for u, v in data["nodal_values"]])


def measure_to_json(measure: GradientMeasure) -> dict:
    bu, bv = measure.barycenter
    return {
        "atoms": [{"w": str(w), "u": [str(x) for x in u], "v": [str(x) for x in v]}
                  for w, (u, v) in measure.atoms],
        "barycenter": {"u": [str(x) for x in bu], "v": [str(x) for x in bv]},
    }


def measure_from_json(data: dict) -> GradientMeasure:
    atoms = [(frac(a["w"]),
              (tuple(frac(x) for x in a["u"]), tuple(frac(x) for x in a["v"])))
             for a in data["atoms"]]
    return GradientMeasure(atoms)
