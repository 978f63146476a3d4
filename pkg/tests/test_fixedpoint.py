import numpy as np
import pytest

from lamlab.config import FixedPointConfig
from lamlab.fixedpoint import (MembershipError, build_T, direction_preserving_refit,
                               evaluate_profile, find_fixed_point,
                               make_refit_baseline, member_T, theta_of,
                               verify_joint_laminate)
from lamlab.geometry import build_unit_cube_triangulation
from lamlab.hn import RANK_ONE_CONE, validate_certificate
from lamlab.pwa import (equal_components_map, extract_measure, is_parallel,
                        random_map, scaled_components_map)
from lamlab.qp import feasible_point, project_onto_polytope, random_feasible_point
from lamlab.theta import select_tuples


@pytest.fixture(scope="module")
def vu1():
    tri = build_unit_cube_triangulation(2, 1)
    pmap = equal_components_map(tri, np.random.default_rng(0))
    mu = extract_measure(pmap)
    return tri, pmap, mu, select_tuples(mu, tri)


@pytest.fixture(scope="module")
def rand1():
    tri = build_unit_cube_triangulation(2, 1)
    pmap = random_map(tri, np.random.default_rng(0))
    mu = extract_measure(pmap)
    return tri, pmap, mu, select_tuples(mu, tri)


def t_bar_float(sel):
    return np.array([float(v) for v in sel.t_bar])


def test_profile_membership_guard(rand1):
    sel = rand1[3]
    with pytest.raises(MembershipError):
        evaluate_profile(np.zeros(sel.size), sel)


def test_profile_structure(rand1):
    sel = rand1[3]
    theta = theta_of(sel)
    A, b = theta.as_float()
    rng = np.random.default_rng(1)
    t = random_feasible_point(A, b, rng, upper=float(sel.pair_sum))
    prof = evaluate_profile(t, sel)
    m = sel.m
    # weights merge upward, relative weights 1/2 above the last level
    for k in range(m):
        assert np.allclose(prof.weights[k],
                           prof.weights[k + 1][0::2] + prof.weights[k + 1][1::2])
        if k <= m - 2:
            assert np.allclose(prof.rel_weights[k], 0.5, atol=1e-12)
    # level m-1 direction pairs are parallel (interface structure)
    for i in range(sel.size // 2):
        assert is_parallel(tuple(prof.dir_x[m - 1][i]),
                           tuple(prof.dir_y[m - 1][i]), 1e-10)
    # barycenter conservation at every level
    for k in range(m + 1):
        bx = prof.weights[k] @ prof.x[k]
        by = prof.weights[k] @ prof.y[k]
        assert np.max(np.abs(np.concatenate([bx, by]))) <= 1e-10


def test_profile_equal_components(vu1):
    sel = vu1[3]
    prof = evaluate_profile(t_bar_float(sel), sel)
    for k in range(sel.m):
        assert np.allclose(prof.dir_x[k], prof.dir_y[k], atol=1e-14)


def test_direction_linearity(rand1):
    """Directions at a convex combination of weights are the convex
    combination of the directions, to 1e-12."""
    sel = rand1[3]
    theta = theta_of(sel)
    A, b = theta.as_float()
    rng = np.random.default_rng(2)
    for _ in range(10):
        s0 = random_feasible_point(A, b, rng, upper=float(sel.pair_sum))
        s1 = random_feasible_point(A, b, rng, upper=float(sel.pair_sum))
        r = rng.uniform()
        pm = evaluate_profile(r * s1 + (1 - r) * s0, sel)
        p0 = evaluate_profile(s0, sel)
        p1 = evaluate_profile(s1, sel)
        for k in range(sel.m - 1):
            mix = r * np.asarray(p1.dir_y[k]) + (1 - r) * np.asarray(p0.dir_y[k])
            assert np.max(np.abs(np.asarray(pm.dir_y[k]) - mix)) <= 1e-12


def test_build_T_row_count(rand1):
    sel = rand1[3]
    image = build_T(t_bar_float(sel), sel)
    # N=2: at most one minor row per internal node above the last level
    assert len(image.rows) <= 2 ** (sel.m - 1) - 1
    assert len(image.rows) == len(image.anchors)


def test_member_T_basics(vu1, rand1):
    sel = vu1[3]
    tb = t_bar_float(sel)
    assert member_T(tb, tb, sel)
    with pytest.raises(ValueError):
        member_T(tb[:-1], tb, sel)
    # for the generic map the reference weights are not a fixed point
    rsel = rand1[3]
    assert not member_T(t_bar_float(rsel), t_bar_float(rsel), rsel)


def test_member_midpoint_closure(vu1):
    sel = vu1[3]
    tb = t_bar_float(sel)
    image = build_T(tb, sel)
    A, b = image.full_system()
    rng = np.random.default_rng(3)
    for _ in range(10):
        s1 = project_onto_polytope(A, b, rng.standard_normal(sel.size),
                                   x0=feasible_point(A, b))
        s2 = project_onto_polytope(A, b, rng.standard_normal(sel.size),
                                   x0=feasible_point(A, b))
        assert member_T(s1, tb, sel) and member_T(s2, tb, sel)
        assert member_T(0.5 * (s1 + s2), tb, sel)


def test_upper_semicontinuity_probe(vu1):
    """Members along convergent weight sequences approach the limit image:
    dist(s_j, T(t)) stays bounded by the weight gap and shrinks with it."""
    sel = vu1[3]
    theta = theta_of(sel)
    A, b = theta.as_float()
    rng = np.random.default_rng(4)
    t_lim = t_bar_float(sel)
    other = random_feasible_point(A, b, rng, upper=float(sel.pair_sum))
    A0, b0 = build_T(t_lim, sel).full_system()
    dists = []
    for j in (8, 32, 128):
        t_j = t_lim + (other - t_lim) / j
        image = build_T(t_j, sel)
        Af, bf = image.full_system()
        s_j = project_onto_polytope(Af, bf, t_lim, x0=feasible_point(Af, bf))
        assert member_T(s_j, t_j, sel)
        nearest = project_onto_polytope(A0, b0, s_j, x0=feasible_point(A0, b0))
        gap = np.linalg.norm(t_j - t_lim)
        d = np.linalg.norm(s_j - nearest)
        assert d <= 2 * gap + 1e-9
        dists.append(d)
    assert dists[2] < dists[0]


def test_fixed_point_v_equals_u(vu1):
    sel = vu1[3]
    rep = find_fixed_point(sel, FixedPointConfig(seed=0))
    assert rep.outcome == "converged"
    assert rep.iterations == 0
    assert np.max(np.abs(rep.t_star - t_bar_float(sel))) == 0
    assert rep.certificate_report.ok


def test_fixed_point_scaled_components():
    tri = build_unit_cube_triangulation(2, 1)
    mu = extract_measure(scaled_components_map(tri, np.random.default_rng(5)))
    sel = select_tuples(mu, tri)
    rep = find_fixed_point(sel, FixedPointConfig(seed=5))
    assert rep.outcome == "converged" and rep.iterations == 0
    assert rep.certificate_report.ok


def test_fixed_point_constant_maps_refine0():
    tri = build_unit_cube_triangulation(2, 0)
    for seed in range(5):
        mu = extract_measure(random_map(tri, np.random.default_rng(seed)))
        sel = select_tuples(mu, tri)
        rep = find_fixed_point(sel, FixedPointConfig(seed=seed))
        assert rep.outcome == "converged"
        assert validate_certificate(rep.certificate, RANK_ONE_CONE,
                                    tol=1e-9).ok


def test_generic_map_image_emptiness_is_reported(rand1):
    """Measured behavior on generic refine-1 maps: the image polytope at
    the reference weights is empty (confirmed in exact arithmetic), so the
    search must fail loudly rather than fabricate a certificate."""
    sel = rand1[3]
    rep = find_fixed_point(sel, FixedPointConfig(seed=0,
                                                 max_depth_escalations=0))
    assert rep.outcome == "failed"
    assert rep.certificate is None
    assert "infeasible" in rep.failure_reason


def test_verify_joint_laminate_exact_and_fabricated(vu1):
    sel = vu1[3]
    cert, report = verify_joint_laminate(list(sel.t_bar), sel)
    assert report.ok
    assert validate_certificate(cert, RANK_ONE_CONE).ok
    # fabricated weights: uniform over slots generally breaks the measure
    bad = np.full(sel.size, 1.0 / sel.size)
    _, rep2 = verify_joint_laminate(bad, sel)
    assert not rep2.ok


def test_refit_identity_and_refine0():
    tri = build_unit_cube_triangulation(2, 0)
    pmap = equal_components_map(tri, np.random.default_rng(6))
    sel = select_tuples(extract_measure(pmap), tri)
    base = make_refit_baseline(pmap, sel)
    same = direction_preserving_refit(base, base.v_values)
    assert same.success and same.residual == 0.0
    assert np.array_equal(same.s, base.t)
    for delta in (1e-4, -1e-4, 3e-5):
        pv = base.v_values.copy()
        pv[0] += delta
        res = direction_preserving_refit(base, pv)
        assert res.success and res.residual <= 1e-8


def test_refit_forward_is_affine_per_parameter(vu1):
    """Leaf positions are affine in each displacement variable (the
    multilinear structure of the displacement system)."""
    from lamlab.fixedpoint import _refit_forward
    tri, pmap, mu, sel = vu1
    base = make_refit_baseline(pmap, sel)
    rng = np.random.default_rng(7)
    p0 = base.params0
    for idx in rng.integers(0, p0.size, 5):
        h = 1e-3
        e = np.zeros_like(p0)
        e[idx] = h
        l0, _ = _refit_forward(base, p0)
        l1, _ = _refit_forward(base, p0 + e)
        l2, _ = _refit_forward(base, p0 + 2 * e)
        assert np.max(np.abs(l2 - 2 * l1 + l0)) <= 1e-10


def test_refit_residual_floor_on_generic_refine1(rand1):
    """Measured behavior: on generic refine-1 maps the strict slot-wise
    system is overdetermined and the best residual scales with the
    perturbation instead of vanishing."""
    tri = build_unit_cube_triangulation(2, 1)
    pmap = equal_components_map(tri, np.random.default_rng(3))
    sel = select_tuples(extract_measure(pmap), tri)
    base = make_refit_baseline(pmap, sel)
    pv = base.v_values.copy()
    pv[1] += 1e-4
    res = direction_preserving_refit(base, pv)
    assert not res.success
    assert 0 < res.residual < 1e-4
