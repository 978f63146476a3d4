"""Periodic simplicial triangulations of the unit cube.

The N=2 construction cuts a uniform grid of subsquares along one fixed
diagonal, which realizes exactly three interface normal directions. The
N=3 construction applies the Kuhn subdivision (six tetrahedra per
subcube). Node coordinates and volumes are exact rationals; interface
normals are stored as primitive integer direction vectors (up to sign)
together with float unit normals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, permutations

from .exact import frac, solve_unique, vec_sub

D_OF_N = {2: 3, 3: 7}

MAX_ELEMENTS_DEFAULT = 4096


class UnsupportedDimensionError(ValueError):
    pass


class MeshSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Simplex:
    vertices: tuple  # geometric node ids
    volume: Fraction


@dataclass(frozen=True)
class Interface:
    left: int            # element id
    right: int           # element id
    direction: tuple     # primitive integer normal direction (up to sign)
    nodes: tuple         # periodic node classes of the facet vertices
    measure: float       # (N-1)-dimensional facet measure

    @property
    def unit_normal(self):
        nrm = math.sqrt(sum(float(c) ** 2 for c in self.direction))
        return tuple(float(c) / nrm for c in self.direction)


@dataclass
class Triangulation:
    dim: int
    refinement: int
    nodes: list            # geometric node coordinates, Fraction tuples
    node_class: list       # geometric node id -> periodic class id
    classes: list          # class id -> list of geometric node ids
    elements: list         # list[Simplex]
    interfaces: list       # list[Interface]
    normal_family: list    # primitive integer directions, up to sign

    _stars: dict = field(default_factory=dict, repr=False)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_point(self, p):
        """Representative coordinates of periodic class p (the copy in [0,1)^N)."""
        for g in self.classes[p]:
            if all(c < 1 for c in self.nodes[g]):
                return self.nodes[g]
        return self.nodes[self.classes[p][0]]

    def element_classes(self, i):
        return tuple(self.node_class[v] for v in self.elements[i].vertices)


def _primitive_direction(v):
    """Clear denominators and common factors; canonical sign."""
    dens = [x.denominator for x in v]
    l = 1
    for d in dens:
        l = l * d // math.gcd(l, d)
    ints = [int(x * l) for x in v]
    g = 0
    for x in ints:
        g = math.gcd(g, abs(x))
    ints = [x // g for x in ints]
    lead = next(x for x in ints if x != 0)
    if lead < 0:
        ints = [-x for x in ints]
    return tuple(ints)


def _facet_normal(coords):
    """Exact normal of the hyperplane through the facet vertices."""
    p0 = coords[0]
    span = [vec_sub(c, p0) for c in coords[1:]]
    n = len(p0)
    if n == 2:
        (vx, vy), = span
        normal = (vy, -vx)
    else:
        (a, b) = span
        normal = (a[1] * b[2] - a[2] * b[1],
                  a[2] * b[0] - a[0] * b[2],
                  a[0] * b[1] - a[1] * b[0])
    return _primitive_direction(normal)


def _facet_measure(coords):
    p0 = [float(x) for x in coords[0]]
    span = [[float(x) - y for x, y in zip(c, p0)] for c in coords[1:]]
    if len(coords[0]) == 2:
        return math.hypot(*span[0])
    a, b = span
    cx = (a[1] * b[2] - a[2] * b[1],
          a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0])
    return 0.5 * math.sqrt(sum(c * c for c in cx))


def _simplex_volume(coords):
    p0 = coords[0]
    span = [vec_sub(c, p0) for c in coords[1:]]
    n = len(p0)
    if n == 2:
        det = span[0][0] * span[1][1] - span[0][1] * span[1][0]
    else:
        a, b, c = span
        det = (a[0] * (b[1] * c[2] - b[2] * c[1])
               - a[1] * (b[0] * c[2] - b[2] * c[0])
               + a[2] * (b[0] * c[1] - b[1] * c[0]))
    return abs(det) / math.factorial(n)


def build_unit_cube_triangulation(N: int, refinement: int,
                                  max_elements: int = MAX_ELEMENTS_DEFAULT) -> Triangulation:
    """Build the periodic mesh at the given refinement level.

    N=2: 2*4^r triangles of equal area, one diagonal direction.
    N=3: 6*8^r Kuhn tetrahedra.
    """
    if N not in (2, 3):
        raise UnsupportedDimensionError(f"N must be 2 or 3, got {N}")
    if refinement < 0:
        raise MeshSizeError("refinement must be nonnegative")
    s = 2 ** refinement
    n_elem = 2 * 4 ** refinement if N == 2 else 6 * 8 ** refinement
    if n_elem > max_elements:
        raise MeshSizeError(f"{n_elem} elements exceeds cap {max_elements}")

    # geometric grid nodes, including the far faces
    grid = {}
    nodes = []
    ranges = [range(s + 1)] * N
    from itertools import product
    for idx in product(*ranges):
        grid[idx] = len(nodes)
        nodes.append(tuple(Fraction(i, s) for i in idx))
    node_class = []
    class_of = {}
    classes = []
    for idx in product(*ranges):
        key = tuple(i % s for i in idx)
        if key not in class_of:
            class_of[key] = len(classes)
            classes.append([])
        c = class_of[key]
        node_class.append(c)
        classes[c].append(grid[idx])

    elements = []
    if N == 2:
        vol = Fraction(1, 2 * s * s)
        for i in range(s):
            for j in range(s):
                a = grid[(i, j)]
                b = grid[(i + 1, j)]
                c = grid[(i + 1, j + 1)]
                d = grid[(i, j + 1)]
                elements.append(Simplex((a, b, c), vol))
                elements.append(Simplex((a, c, d), vol))
    else:
        vol = Fraction(1, 6 * s ** 3)
        for cell in product(range(s), repeat=3):
            for perm in permutations(range(3)):
                verts = []
                pos = list(cell)
                verts.append(grid[tuple(pos)])
                for axis in perm:
                    pos[axis] += 1
                    verts.append(grid[tuple(pos)])
                elements.append(Simplex(tuple(verts), vol))

    # deterministic element order: lexicographic by vertex tuples
    elements.sort(key=lambda e: tuple(sorted(e.vertices)))

    interfaces, family = _build_interfaces(N, nodes, node_class, elements)
    return Triangulation(N, refinement, nodes, node_class, classes,
                         elements, interfaces, family)


def _facet_key(coords):
    """Canonical key identifying a facet up to periodic translation."""
    shifted = []
    n = len(coords[0])
    shift = [Fraction(1) if min(c[d] for c in coords) >= 1 else Fraction(0)
             for d in range(n)]
    for c in coords:
        shifted.append(tuple(x - s for x, s in zip(c, shift)))
    return tuple(sorted(shifted))


def _build_interfaces(N, nodes, node_class, elements):
    coord_to_node = {tuple(c): i for i, c in enumerate(nodes)}
    facets = {}
    for ei, el in enumerate(elements):
        for fv in combinations(el.vertices, N):
            coords = [nodes[v] for v in fv]
            facets.setdefault(_facet_key(coords), []).append((ei, fv))
    interfaces = []
    family = []
    fam_seen = set()
    for key in sorted(facets):
        members = facets[key]
        if len(members) != 2:
            raise MeshSizeError(f"facet shared by {len(members)} elements")
        (ei, fvi), (ej, fvj) = sorted(members)
        coords = list(key)
        direction = _facet_normal(coords)
        if direction not in fam_seen:
            fam_seen.add(direction)
            family.append(direction)
        cls = tuple(sorted(node_class[coord_to_node[c]] for c in coords))
        interfaces.append(Interface(ei, ej, direction, cls, _facet_measure(coords)))
    return interfaces, sorted(family)


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(tri: Triangulation) -> ValidationReport:
    """Check the triangulation invariants; failures go into the report."""
    v = []
    total = sum(e.volume for e in tri.elements)
    if total != 1:
        v.append(f"volumes sum != 1 (got {total})")
    for i, e in enumerate(tri.elements):
        if e.volume <= 0:
            v.append(f"element {i}: nonpositive volume")
        coords = [tri.nodes[p] for p in e.vertices]
        if _simplex_volume(coords) != e.volume:
            v.append(f"element {i}: stored volume mismatches geometry")
    d = D_OF_N[tri.dim]
    if len(tri.normal_family) > d:
        v.append(f"normal family size {len(tri.normal_family)} exceeds d(N)={d}")
    fam = set(tri.normal_family)
    for k, itf in enumerate(tri.interfaces):
        pos = itf.direction
        neg = tuple(-x for x in pos)
        if pos not in fam and neg not in fam:
            v.append(f"interface {k}: normal outside family")
    # every facet shared by exactly two elements (incl. periodic matching)
    facets = {}
    for ei, e in enumerate(tri.elements):
        for fv in combinations(e.vertices, tri.dim):
            coords = [tri.nodes[p] for p in fv]
            facets.setdefault(_facet_key(coords), []).append(ei)
    for key, els in facets.items():
        if len(els) != 2:
            v.append(f"facet {key} shared by {len(els)} elements")
    n = len(tri.classes)
    if n & (n - 1):
        v.append(f"node class count {n} is not a power of 2")
    return ValidationReport(v)


def node_star(tri: Triangulation, p: int):
    """(element ids, interface ids) incident to periodic node class p."""
    if not 0 <= p < tri.n_classes:
        raise IndexError(f"node class {p} out of range")
    if p not in tri._stars:
        els = [i for i in range(len(tri.elements))
               if p in tri.element_classes(i)]
        itfs = [k for k, itf in enumerate(tri.interfaces) if p in itf.nodes]
        tri._stars[p] = (els, itfs)
    return tri._stars[p]


# -- JSON schema --

def to_json(tri: Triangulation) -> dict:
    return {
        "N": tri.dim,
        "refinement": tri.refinement,
        "nodes": [[str(c) for c in nd] for nd in tri.nodes],
        "periodic_classes": [list(c) for c in tri.classes],
        "elements": [{"verts": list(e.vertices), "volume": str(e.volume)}
                     for e in tri.elements],
        "interfaces": [{"i": f.left, "j": f.right,
                        "normal": list(f.direction),
                        "nodes": list(f.nodes)}
                       for f in tri.interfaces],
    }


def from_json(data: dict) -> Triangulation:
    nodes = [tuple(frac(c) for c in nd) for nd in data["nodes"]]
    classes = [list(c) for c in data["periodic_classes"]]
    node_class = [0] * len(nodes)
    for ci, members in enumerate(classes):
        for g in members:
            node_class[g] = ci
    elements = [Simplex(tuple(e["verts"]), frac(e["volume"]))
                for e in data["elements"]]
    interfaces = []
    fam = []
    seen = set()
    coord_to_node = {tuple(c): i for i, c in enumerate(nodes)}
    for f in data["interfaces"]:
        direction = tuple(int(x) for x in f["normal"])
        # recompute facet measure from any matching geometric facet
        interfaces.append(Interface(f["i"], f["j"], direction,
                                    tuple(f["nodes"]), 0.0))
        if direction not in seen:
            seen.add(direction)
            fam.append(direction)
    tri = Triangulation(data["N"], data.get("refinement", 0), nodes, node_class,
                        classes, elements, interfaces, sorted(fam))
    return tri
