from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lamlab.hn import (FULL_CONE, RANK_ONE_CONE, ConeViolationError,
                       HnCertificate, HnTreeBuilder, NormalizationError,
                       SearchSizeError, brute_force_laminate_search,
                       certificate_from_json, certificate_to_json,
                       convex_hull_check, evaluate_bottom_up, sub_measure,
                       validate_certificate)

F = Fraction

Z = ((F(0), F(0)),)          # 1xN zero matrix
R1 = ((F(1), F(0)),)


def rank_one_2x2(a, n):
    return tuple(tuple(ai * nj for nj in n) for ai in a)


def test_builder_simple_split():
    b = HnTreeBuilder(Z, 1, FULL_CONE)
    b.split(0, 0, R1, F(1, 3))
    tree = b.tree()
    (wl, ml), (wr, mr) = tree.leaves()
    assert wl == F(2, 3) and wr == F(1, 3)
    assert ml == ((F(-1, 3), F(0)),)
    assert mr == ((F(2, 3), F(0)),)
    # parent is the weighted average of its children
    assert tree.matrices[0][0] == Z


def test_builder_enforces_cone():
    bad = ((F(1), F(0)), (F(0), F(1)))  # rank two
    b = HnTreeBuilder(((F(0), F(0)), (F(0), F(0))), 1, RANK_ONE_CONE)
    with pytest.raises(ConeViolationError):
        b.split(0, 0, bad, F(1, 2))


def test_builder_frontier_protocol():
    b = HnTreeBuilder(Z, 2)
    b.split(0, 0, R1, F(1, 2))
    with pytest.raises(ValueError):
        b.split(0, 0, R1, F(1, 2))  # level 0 no longer the frontier
    b.split(1, 0, R1, F(1, 2))
    b.passthrough(1, 1)
    tree = b.tree()
    assert tree.depth == 2
    assert sum(w for w, _ in tree.leaves()) == 1


def test_bottom_up_round_trip_exact():
    b = HnTreeBuilder(Z, 2)
    b.split(0, 0, R1, F(2, 5))
    b.split(1, 0, ((F(0), F(3)),), F(1, 4))
    b.split(1, 1, R1, F(1, 2))
    tree = b.tree()
    back = evaluate_bottom_up(tree.weights[2], tree.matrices[2])
    assert back.weights == tree.weights
    assert back.matrices == tree.matrices
    assert back.rel_weights == tree.rel_weights


def test_bottom_up_rejects_bad_weights():
    with pytest.raises(NormalizationError):
        evaluate_bottom_up([F(1, 2), F(1, 4)], [Z, Z])
    with pytest.raises(NormalizationError):
        evaluate_bottom_up([F(1, 2), F(1, 2), F(0)], [Z, Z, Z])


def test_zero_weight_parent_midpoint_convention():
    tree = evaluate_bottom_up([F(0), F(0), F(1, 2), F(1, 2)],
                              [R1, ((F(3), F(0)),), Z, Z])
    assert tree.weights[1][0] == 0
    assert tree.matrices[1][0] == ((F(2), F(0)),)
    assert tree.rel_weights[1][0] == F(1, 2)


def test_validate_certificate_ok_and_violations():
    b = HnTreeBuilder(Z, 1, RANK_ONE_CONE)
    b.split(0, 0, R1, F(1, 2))
    tree = b.tree()
    target = [(w, m) for w, m in tree.leaves()]
    assert validate_certificate(HnCertificate(tree, target), RANK_ONE_CONE).ok
    # wrong target measure
    bad = validate_certificate(HnCertificate(tree, [(F(1), Z)]), RANK_ONE_CONE)
    assert not bad.ok
    # fabricated rank violation: 2-row tree whose sibling difference has
    # independent rows
    leaves = [F(1, 2), F(1, 2)]
    mats = [((F(1), F(0)), (F(0), F(1))), ((F(-1), F(0)), (F(0), F(-1)))]
    tree2 = evaluate_bottom_up(leaves, mats)
    rep = validate_certificate(
        HnCertificate(tree2, [(w, m) for w, m in tree2.leaves()]),
        RANK_ONE_CONE)
    assert any("cone" in v for v in rep.violations)


def test_convex_hull_check_and_sub_measure():
    b = HnTreeBuilder(Z, 2)
    b.split(0, 0, R1, F(1, 2))
    b.split(1, 0, ((F(0), F(1)),), F(1, 2))
    b.passthrough(1, 1)
    tree = b.tree()
    assert convex_hull_check(tree)
    atoms = sub_measure(tree, 1, 0)
    assert sum(w for _, w in atoms) == 1
    with pytest.raises(ZeroDivisionError):
        sub_measure(evaluate_bottom_up([F(0), F(1)], [Z, Z]), 1, 0)


def test_brute_force_finds_simple_laminate():
    # two atoms differing by a rank-one matrix
    a = ((F(1), F(0)), (F(2), F(0)))
    bm = ((F(-1), F(0)), (F(-2), F(0)))
    cert = brute_force_laminate_search([(F(1, 2), a), (F(1, 2), bm)])
    assert cert is not None and cert.tree.depth == 1
    assert validate_certificate(cert, RANK_ONE_CONE).ok


def test_brute_force_rejects_non_laminate_pair():
    # two atoms differing by a rank-two matrix cannot split at any depth
    a = ((F(1), F(0)), (F(0), F(1)))
    bm = ((F(-1), F(0)), (F(0), F(-1)))
    assert brute_force_laminate_search([(F(1, 2), a), (F(1, 2), bm)]) is None


def test_brute_force_direction_restriction():
    a = ((F(1), F(0)), (F(2), F(0)))
    bm = ((F(-1), F(0)), (F(-2), F(0)))
    good = [((F(1), F(0)), (F(2), F(0)))]
    off = [((F(0), F(1)), (F(0), F(1)))]
    assert brute_force_laminate_search([(F(1, 2), a), (F(1, 2), bm)],
                                       directions=good) is not None
    assert brute_force_laminate_search([(F(1, 2), a), (F(1, 2), bm)],
                                       directions=off) is None


def test_brute_force_caps():
    atoms = [(F(1, 7), ((F(i), F(0)),)) for i in range(7)]
    with pytest.raises(SearchSizeError):
        brute_force_laminate_search(atoms)
    with pytest.raises(SearchSizeError):
        brute_force_laminate_search([(F(1), Z)], max_depth=5)


def test_certificate_json_round_trip():
    b = HnTreeBuilder(Z, 2)
    b.split(0, 0, R1, F(1, 3))
    b.split(1, 0, ((F(0), F(2)),), F(1, 2))
    b.passthrough(1, 1)
    tree = b.tree()
    cert = HnCertificate(tree, [(w, m) for w, m in tree.leaves()])
    cert2 = certificate_from_json(certificate_to_json(cert))
    assert cert2.tree.weights == cert.tree.weights
    assert cert2.tree.matrices == cert.tree.matrices
    assert cert2.target == cert.target


@st.composite
def split_plan(draw):
    depth = draw(st.integers(1, 4))
    plan = []
    for k in range(depth):
        level = []
        for _ in range(2 ** k):
            t = F(draw(st.integers(0, 8)), 8)
            d = (F(draw(st.integers(-3, 3))), F(draw(st.integers(-3, 3))))
            level.append((t, d))
        plan.append(level)
    return depth, plan


@settings(max_examples=60, deadline=None)
@given(split_plan())
def test_random_split_sequences_round_trip(plan):
    depth, levels = plan
    b = HnTreeBuilder(Z, depth)
    for k, level in enumerate(levels):
        for i, (t, d) in enumerate(level):
            b.split(k, i, (d,), t)
    tree = b.tree()
    back = evaluate_bottom_up(tree.weights[depth], tree.matrices[depth])
    # weights always reconstruct; matrices reconstruct wherever weight > 0
    assert back.weights == tree.weights
    for k in range(depth + 1):
        for i in range(2 ** k):
            if tree.weights[k][i] > 0:
                assert back.matrices[k][i] == tree.matrices[k][i]
    # barycenter conservation at every level
    for k in range(depth + 1):
        total = sum((w * m[0][0] for w, m in zip(tree.weights[k],
                                                 tree.matrices[k])), F(0))
        assert total == tree.matrices[0][0][0][0]
