"""Recursive split/merge engine for laminate-style decompositions of
discrete matrix measures.

A tree of depth m stores, for every level k = 0..m and node i = 0..2^k-1
(0-based), an absolute weight s and a matrix u (tuple of row tuples, so
the engine is generic over the number of rows). An internal node carries
a relative weight t in [0, 1] (the weight fraction of its *right* child)
and a decomposition direction U with

    left  child (2i):   weight s*(1-t),  matrix u - t*U
    right child (2i+1): weight s*t,      matrix u + (1-t)*U

so that the parent is always the weighted average of its children and
the sibling difference equals U.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .config import DEFAULT_TOLERANCES
from .exact import frac, find_feasible


# -- matrix helpers (tuples of row tuples; Fraction or float entries) --

def mat_add(a, b):
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub(a, b):
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_scale(c, a):
    return tuple(tuple(c * x for x in ra) for ra in a)


def mat_zero_like(a):
    return tuple(tuple(0 * x for x in ra) for ra in a)


def mat_minors_2x2(a):
    """All 2x2 minors over all row pairs and column pairs."""
    rows = len(a)
    cols = len(a[0])
    out = []
    for r1 in range(rows):
        for r2 in range(r1 + 1, rows):
            for c1 in range(cols):
                for c2 in range(c1 + 1, cols):
                    out.append(a[r1][c1] * a[r2][c2] - a[r1][c2] * a[r2][c1])
    return out


def mat_close(a, b, tol):
    if tol == 0:
        return a == b
    return all(abs(float(x) - float(y)) <= tol
               for ra, rb in zip(a, b) for x, y in zip(ra, rb))


def mat_norm(a) -> float:
    return max((abs(float(x)) for ra in a for x in ra), default=0.0)


# -- cones of admissible decomposition directions --

@dataclass(frozen=True)
class Cone:
    name: str
    predicate: Callable  # (matrix, tol) -> bool

    def contains(self, mat, tol=0.0) -> bool:
        return self.predicate(mat, tol)


def _rank_le_one(mat, tol):
    scale = max(1.0, mat_norm(mat) ** 2)
    if tol == 0:
        return all(m == 0 for m in mat_minors_2x2(mat))
    return all(abs(float(m)) <= tol * scale for m in mat_minors_2x2(mat))


RANK_ONE_CONE = Cone("rank-one", _rank_le_one)
FULL_CONE = Cone("all-directions", lambda mat, tol: True)


class ConeViolationError(ValueError):
    pass


class NormalizationError(ValueError):
    pass


@dataclass
class HnTree:
    depth: int
    weights: list    # weights[k][i], levels 0..depth
    matrices: list   # matrices[k][i]
    rel_weights: list  # rel_weights[k][i], levels 0..depth-1
    directions: list   # directions[k][i] = right - left sibling difference

    @property
    def root_matrix(self):
        return self.matrices[0][0]

    def leaves(self):
        return list(zip(self.weights[self.depth], self.matrices[self.depth]))

    def leaf_measure(self):
        """Leaf atoms merged over equal matrices."""
        out = {}
        for w, m in self.leaves():
            if w != 0:
                out[m] = out.get(m, 0 * w) + w
        return sorted(out.items())


class HnTreeBuilder:
    """Top-down construction: split every node of the deepest complete
    level, in any order, until the target depth is reached."""

    def __init__(self, root_matrix, depth: int, cone: Cone = FULL_CONE):
        self.depth = depth
        self.cone = cone
        self.weights = [[frac_or_float(1)]]
        self.matrices = [[root_matrix]]
        self.rel_weights = []
        self.directions = []
        self._pending = None  # partial next level

    def _ensure_level(self, k):
        if len(self.weights) != k + 1:
            raise ValueError(f"level {k} is not the current frontier")

    def split(self, k: int, i: int, direction, t):
        """Split node (k, i); children land at (k+1, 2i) and (k+1, 2i+1)."""
        self._ensure_level(k)
        if k >= self.depth:
            raise ValueError("tree already at target depth")
        if not (0 <= float(t) <= 1):
            raise ValueError("relative weight must lie in [0, 1]")
        u = self.matrices[k][i]
        if direction is None:
            direction = mat_zero_like(u)
        if mat_norm(direction) > 0 and not self.cone.contains(direction):
            raise ConeViolationError("direction outside admissible cone")
        if self._pending is None:
            n = 2 ** (k + 1)
            self._pending = {"w": [None] * n, "m": [None] * n,
                             "t": [None] * (n // 2), "d": [None] * (n // 2)}
        p = self._pending
        if p["t"][i] is not None:
            raise ValueError(f"node ({k}, {i}) already split")
        s = self.weights[k][i]
        p["w"][2 * i] = s * (1 - t)
        p["m"][2 * i] = mat_sub(u, mat_scale(t, direction))
        p["w"][2 * i + 1] = s * t
        p["m"][2 * i + 1] = mat_add(u, mat_scale(1 - t, direction))
        p["t"][i] = t
        p["d"][i] = direction
        if all(x is not None for x in p["t"]):
            self.weights.append(p["w"])
            self.matrices.append(p["m"])
            self.rel_weights.append(p["t"])
            self.directions.append(p["d"])
            self._pending = None
        return self

    def passthrough(self, k: int, i: int):
        """Zero-direction split: both children equal the parent."""
        u = self.matrices[k][i]
        return self.split(k, i, mat_zero_like(u), frac_or_float(1) / 2)

    def tree(self) -> HnTree:
        if len(self.weights) != self.depth + 1 or self._pending is not None:
            raise ValueError("tree construction incomplete")
        return HnTree(self.depth, self.weights, self.matrices,
                      self.rel_weights, self.directions)


def frac_or_float(x):
    return Fraction(x)


def evaluate_bottom_up(leaf_weights, leaf_matrices, tol=0.0) -> HnTree:
    """Reconstruct the full tree from the final level.

    Zero-weight parents sit at the midpoint of their children and carry
    relative weight 1/2.
    """
    n = len(leaf_weights)
    m = n.bit_length() - 1
    if 2 ** m != n:
        raise NormalizationError(f"{n} leaves is not a power of 2")
    total = sum(leaf_weights)
    exact = all(isinstance(w, (Fraction, int)) for w in leaf_weights)
    if (exact and total != 1) or (not exact and abs(float(total) - 1) > max(tol, 1e-9)):
        raise NormalizationError(f"leaf weights sum to {total}, not 1")
    if any(float(w) < -max(tol, 0.0) for w in leaf_weights):
        raise NormalizationError("negative leaf weight")

    weights = [list(leaf_weights)]
    matrices = [list(leaf_matrices)]
    rels = []
    dirs = []
    while len(weights[0]) > 1:
        cw, cm = weights[0], matrices[0]
        pw, pm, pt, pd = [], [], [], []
        for i in range(len(cw) // 2):
            wl, wr = cw[2 * i], cw[2 * i + 1]
            ml, mr = cm[2 * i], cm[2 * i + 1]
            s = wl + wr
            pw.append(s)
            if (exact and s != 0) or (not exact and float(s) > 0):
                pm.append(mat_add(mat_scale(wl / s, ml), mat_scale(wr / s, mr)))
                pt.append(wr / s)
            else:
                half = Fraction(1, 2) if exact else 0.5
                pm.append(mat_scale(half, mat_add(ml, mr)))
                pt.append(half)
            pd.append(mat_sub(mr, ml))
        weights.insert(0, pw)
        matrices.insert(0, pm)
        rels.insert(0, pt)
        dirs.insert(0, pd)
    return HnTree(m, weights, matrices, rels, dirs)


@dataclass
class HnCertificate:
    tree: HnTree
    target: list  # [(weight, matrix)] of the measure being certified


@dataclass
class CertificateReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def _merge_atoms(atoms, tol):
    if tol == 0:
        out = {}
        for w, m in atoms:
            if w != 0:
                out[m] = out.get(m, 0 * w) + w
        return sorted(out.items())
    # tolerant clustering against the first occurrence of each matrix
    reps = []
    sums = []
    for w, m in atoms:
        if float(w) == 0:
            continue
        for idx, r in enumerate(reps):
            if mat_close(m, r, tol):
                sums[idx] += float(w)
                break
        else:
            reps.append(m)
            sums.append(float(w))
    order = sorted(range(len(reps)), key=lambda i: tuple(
        tuple(float(x) for x in row) for row in reps[i]))
    return [(reps[i], sums[i]) for i in order]


def validate_certificate(cert: HnCertificate, cone: Cone,
                         tol: float = 0.0) -> CertificateReport:
    """Check weight consistency, merge formulas, cone membership of every
    sibling difference, and leaf-measure equality to the target."""
    v = []
    tree = cert.tree
    wtol = tol if tol else 0.0
    root_w = tree.weights[0][0]
    if (tol == 0 and root_w != 1) or (tol and abs(float(root_w) - 1) > tol):
        v.append(f"root weight {root_w} != 1")
    for k in range(tree.depth):
        for i in range(2 ** k):
            s = tree.weights[k][i]
            wl = tree.weights[k + 1][2 * i]
            wr = tree.weights[k + 1][2 * i + 1]
            bad = (wl + wr != s) if tol == 0 else abs(float(wl + wr) - float(s)) > tol
            if bad:
                v.append(f"node ({k},{i}): sibling weights do not sum to parent")
            if float(wl) < -wtol or float(wr) < -wtol:
                v.append(f"node ({k},{i}): negative child weight")
            u = tree.matrices[k][i]
            ml = tree.matrices[k + 1][2 * i]
            mr = tree.matrices[k + 1][2 * i + 1]
            tot = wl + wr
            if (tol == 0 and tot != 0) or (tol and float(tot) > tol):
                merged = mat_add(mat_scale(wl / tot, ml), mat_scale(wr / tot, mr))
                scale = max(1.0, mat_norm(u))
                if not mat_close(u, merged, tol * scale if tol else 0):
                    v.append(f"node ({k},{i}): parent is not the weighted "
                             f"average of its children")
            diff = mat_sub(mr, ml)
            if not cone.contains(diff, tol):
                v.append(f"node ({k},{i}): sibling difference outside "
                         f"{cone.name} cone")
    got = _merge_atoms(tree.leaves(), tol)
    want = _merge_atoms(cert.target, tol)
    if tol == 0:
        if got != want:
            v.append("leaf measure does not equal target measure")
    else:
        if len(got) != len(want):
            v.append("leaf measure support size mismatches target")
        else:
            for (gm, gw), (tm, tw) in zip(got, want):
                if not mat_close(gm, tm, tol) or abs(float(gw) - float(tw)) > max(tol, 1e-8):
                    v.append("leaf measure does not equal target measure")
                    break
    return CertificateReport(v)


def convex_hull_check(tree: HnTree) -> bool:
    """Every node matrix is a convex combination of the leaf matrices
    (exact path only)."""
    leaves = [m for w, m in tree.leaves() if w != 0]
    cols = [[x for row in m for x in row] for m in leaves]
    dim = len(cols[0])
    for k in range(tree.depth + 1):
        for i in range(2 ** k):
            if tree.weights[k][i] == 0:
                continue
            target = [x for row in tree.matrices[k][i] for x in row]
            A = [[cols[j][d] for j in range(len(leaves))] for d in range(dim)]
            A.append([Fraction(1)] * len(leaves))
            b = [frac(x) for x in target] + [Fraction(1)]
            if find_feasible(A, b) is None:
                return False
    return True


def sub_measure(tree: HnTree, k: int, i: int):
    """Probability measure on the leaves below node (k, i), barycenter
    equal to the node matrix."""
    s = tree.weights[k][i]
    if (isinstance(s, Fraction) and s == 0) or float(s) == 0:
        raise ZeroDivisionError(f"node ({k},{i}) carries zero weight")
    span = 2 ** (tree.depth - k)
    lo = i * span
    atoms = [(tree.weights[tree.depth][j] / s, tree.matrices[tree.depth][j])
             for j in range(lo, lo + span)]
    out = {}
    for w, m in atoms:
        if w != 0:
            out[m] = out.get(m, 0 * w) + w
    return sorted(out.items())


# -- brute-force laminate search (oracle) --

class SearchSizeError(ValueError):
    pass


def _barycenter(atoms):
    total = sum(w for w, _ in atoms)
    acc = mat_zero_like(atoms[0][1])
    for w, m in atoms:
        acc = mat_add(acc, mat_scale(w / total, m))
    return acc, total


def _direction_ok(diff, cone, directions):
    if not cone.contains(diff, 0.0):
        return False
    if directions is None:
        return True
    flat = [x for row in diff for x in row]
    for d in directions:
        dflat = [x for row in d for x in row] if isinstance(d[0], tuple) else list(d)
        # diff parallel to candidate direction: all 2x2 minors vanish
        n = len(flat)
        if len(dflat) != n:
            continue
        if all(flat[a] * dflat[b] - flat[b] * dflat[a] == 0
               for a in range(n) for b in range(a + 1, n)):
            return True
    return False


def _search_split(atoms, d, cone, directions):
    """Return a nested ('split', t, left, right) structure or ('leaf', m)
    realizing the normalized atom list within depth d."""
    merged = {}
    for w, m in atoms:
        if w != 0:
            merged[m] = merged.get(m, 0 * w) + w
    atoms = sorted(((w, m) for m, w in merged.items()), key=lambda wm: wm[1])
    if len(atoms) == 1:
        return ("leaf", atoms[0][1])
    if d == 0:
        return None
    n = len(atoms)
    # bipartitions; atom 0 pinned to the left side to kill the symmetry
    for mask in range(1, 2 ** (n - 1)):
        left = [atoms[j] for j in range(n) if not (mask >> j) & 1]
        right = [atoms[j] for j in range(n) if (mask >> j) & 1]
        bl, wl = _barycenter(left)
        br, wr = _barycenter(right)
        diff = mat_sub(br, bl)
        if not _direction_ok(diff, cone, directions):
            continue
        sl = _search_split(left, d - 1, cone, directions)
        if sl is None:
            continue
        sr = _search_split(right, d - 1, cone, directions)
        if sr is None:
            continue
        t = wr / (wl + wr)
        return ("split", t, sl, sr)
    return None


def _emit_side(node, weight, depth):
    """Flatten a nested search result into 2^depth weighted leaves,
    padding early leaves with zero-direction splits."""
    if node[0] == "leaf":
        slots = 2 ** depth
        return [(weight / slots, node[1])] * slots
    _, t, sl, sr = node
    return (_emit_side(sl, weight * (1 - t), depth - 1)
            + _emit_side(sr, weight * t, depth - 1))


def brute_force_laminate_search(atoms, max_depth: int = 4, directions=None,
                                cone: Cone = RANK_ONE_CONE) -> Optional[HnCertificate]:
    """Exhaustive backtracking search for a laminate certificate.

    `atoms` is a list of (weight, matrix) with exact rational entries.
    The search partitions the (merged) support recursively; each split
    must have a barycenter difference inside the cone (and, when a
    direction set is supplied, parallel to one of its members). Returns
    the certificate of minimal depth, or None.
    """
    merged = {}
    for w, m in atoms:
        w = frac(w)
        if w != 0:
            merged[m] = merged.get(m, Fraction(0)) + w
    support = sorted(merged.items())
    if len(support) > 6:
        raise SearchSizeError(f"support size {len(support)} exceeds oracle cap 6")
    if max_depth > 4:
        raise SearchSizeError("max depth exceeds oracle cap 4")
    norm_atoms = [(w, m) for m, w in support]
    total = sum(w for w, _ in norm_atoms)
    if total != 1:
        raise NormalizationError("measure weights must sum to 1")
    for d in range(0, max_depth + 1):
        found = _search_split(norm_atoms, d, cone, directions)
        if found is not None:
            leaves = _emit_side(found, Fraction(1), d)
            tree = evaluate_bottom_up([w for w, _ in leaves],
                                      [m for _, m in leaves])
            cert = HnCertificate(tree, [(w, m) for w, m in norm_atoms])
            return cert
    return None


# -- JSON schema --

def certificate_to_json(cert: HnCertificate) -> dict:
    def num(x):
        return str(x)

    def mat(m):
        return [[num(x) for x in row] for row in m]

    return {
        "depth": cert.tree.depth,
        "levels": [[{"w": num(w), "matrix": mat(m)}
                    for w, m in zip(ws, ms)]
                   for ws, ms in zip(cert.tree.weights, cert.tree.matrices)],
        "directions": [[mat(d) for d in lvl] for lvl in cert.tree.directions],
        "target_measure": [{"w": num(w), "matrix": mat(m)}
                           for w, m in cert.target],
    }


def certificate_from_json(data: dict) -> HnCertificate:
    def num(x):
        f = frac(x)
        return f

    def mat(m):
        return tuple(tuple(num(x) for x in row) for row in m)

    weights = [[num(e["w"]) for e in lvl] for lvl in data["levels"]]
    matrices = [[mat(e["matrix"]) for e in lvl] for lvl in data["levels"]]
    directions = [[mat(d) for d in lvl] for lvl in data["directions"]]
    rels = []
    for k in range(len(weights) - 1):
        row = []
        for i in range(2 ** k):
            s = weights[k][i]
            row.append(weights[k + 1][2 * i + 1] / s if s != 0 else Fraction(1, 2))
        rels.append(row)
    tree = HnTree(data["depth"], weights, matrices, rels, directions)
    target = [(num(e["w"]), mat(e["matrix"])) for e in data["target_measure"]]
    return HnCertificate(tree, target)
