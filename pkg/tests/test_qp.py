import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terrainopt.errors import ProjectionInfeasible
from terrainopt.oracle import brute_force_projection
from terrainopt.planner import project
from terrainopt.qp import kkt_residuals, solve_projection
from terrainopt.trajectory import TrajectoryParams, assemble_constraints, build_basis, inscribed_box


def planning_constraints():
    b = build_basis()
    return assemble_constraints([-3, -2, 0.6, 0.4, 0, 0], [3, 2, 0.6, 0.4, 0, 0], inscribed_box((0, 0), 7), b)


def reduced_instance(seed):
    """Single axis, 6 coefficients, pinned endpoints and a tight position box."""
    rng = np.random.default_rng(seed)
    b = build_basis(8, 1.0, 5, "monomial")
    E = np.vstack([b.W[0], b.W[-1]])
    e = rng.uniform(-0.4, 0.4, size=2)
    A = np.vstack([b.W, -b.W])
    bb = np.full(16, 0.5)
    xi_bar = rng.normal(scale=3.0, size=6)
    return xi_bar, E, e, A, bb


def test_feasible_point_unchanged():
    c = planning_constraints()
    x0 = solve_projection(np.zeros(22), c.A_eq, c.b_eq, c.A, c.b).x
    again = solve_projection(x0, c.A_eq, c.b_eq, c.A, c.b)
    assert np.abs(again.x - x0).max() <= 1e-10


def test_equality_only_closed_form():
    rng = np.random.default_rng(2)
    E = rng.normal(size=(4, 9))
    e = rng.normal(size=4)
    xb = rng.normal(size=9)
    res = solve_projection(xb, E, e, np.zeros((0, 9)), np.zeros(0))
    closed = xb - E.T @ np.linalg.solve(E @ E.T, E @ xb - e)
    assert np.allclose(res.x, closed, atol=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_matches_brute_force(seed):
    xi_bar, E, e, A, b = reduced_instance(seed)
    ref, active = brute_force_projection(xi_bar, E, e, A, b)
    res = solve_projection(xi_bar, E, e, A, b)
    assert ref is not None
    assert np.abs(res.x - ref).max() <= 1e-8
    assert set(res.active) == set(active)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 30.0))
@settings(max_examples=40, deadline=None)
def test_kkt_conditions(seed, scale):
    c = planning_constraints()
    xb = np.random.default_rng(seed).normal(scale=scale, size=22)
    res = solve_projection(xb, c.A_eq, c.b_eq, c.A, c.b)
    k = kkt_residuals(res, xb, c.A_eq, c.b_eq, c.A, c.b)
    assert max(k.values()) <= 1e-8, k


def test_inconsistent_equalities():
    E = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ProjectionInfeasible):
        solve_projection(np.zeros(2), E, np.array([0.0, 1.0]), np.zeros((0, 2)), np.zeros(0))


def test_empty_feasible_set():
    A = np.array([[1.0, 0.0], [-1.0, 0.0]])
    b = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
    with pytest.raises(ProjectionInfeasible):
        solve_projection(np.zeros(2), np.zeros((0, 2)), np.zeros(0), A, b)


def test_redundant_equalities_are_tolerated():
    E = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
    e = np.array([1.0, 2.0])
    res = solve_projection(np.array([3.0, 0.0, 1.0]), E, e, np.zeros((0, 3)), np.zeros(0))
    assert np.allclose(E @ res.x, e)
    assert np.allclose(res.x, [2.0, -1.0, 1.0])


def test_project_keeps_type():
    c = planning_constraints()
    p = project(TrajectoryParams.from_xi(np.ones(22)), c)
    assert isinstance(p, TrajectoryParams)
    assert c.feasible(p.xi)
