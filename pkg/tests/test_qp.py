import numpy as np
import pytest

from lamlab.qp import (InfeasiblePolytopeError, feasible_point,
                       independent_rows, project_onto_polytope,
                       random_feasible_point)


def simplex_system(n):
    return np.ones((1, n)), np.ones(1)


def test_independent_rows_drops_duplicates():
    A = np.array([[1.0, 1.0], [2.0, 2.0], [1.0, 0.0]])
    b = np.array([1.0, 2.0, 0.5])
    Ar, br = independent_rows(A, b)
    assert Ar.shape[0] == 2


def test_feasible_point_simplex():
    A, b = simplex_system(5)
    x = feasible_point(A, b)
    assert abs(x.sum() - 1) < 1e-9 and x.min() >= -1e-12


def test_feasible_point_infeasible():
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0])
    with pytest.raises(InfeasiblePolytopeError):
        feasible_point(A, b)


def test_random_feasible_points_differ():
    A, b = simplex_system(6)
    rng = np.random.default_rng(0)
    xs = [random_feasible_point(A, b, rng) for _ in range(3)]
    for x in xs:
        assert abs(x.sum() - 1) < 1e-9 and x.min() >= -1e-12
    assert not np.allclose(xs[0], xs[1])


def test_projection_onto_simplex_known_answer():
    A, b = simplex_system(3)
    # projecting the barycenter onto the simplex is the identity
    p = np.full(3, 1 / 3)
    assert np.max(np.abs(project_onto_polytope(A, b, p) - p)) < 1e-10
    # a point dominated in one coordinate projects to a vertex
    x = project_onto_polytope(A, b, np.array([10.0, 0.0, 0.0]))
    assert np.max(np.abs(x - np.array([1.0, 0.0, 0.0]))) < 1e-8


def test_projection_feasibility_and_optimality():
    rng = np.random.default_rng(1)
    n = 12
    A = rng.standard_normal((3, n))
    x0 = rng.dirichlet(np.ones(n))
    b = A @ x0  # feasible by construction
    for _ in range(20):
        p = rng.standard_normal(n)
        x = project_onto_polytope(A, b, p, x0=x0)
        assert np.max(np.abs(A @ x - b)) < 1e-9
        assert x.min() >= -1e-12
        # no feasible direction improves the distance (spot check vs mixtures)
        for _ in range(10):
            y = 0.9 * x + 0.1 * random_feasible_point(A, b, rng, upper=50.0)
            assert np.linalg.norm(x - p) <= np.linalg.norm(y - p) + 1e-9
