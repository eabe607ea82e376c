import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terrainopt import kinematics as kin
from terrainopt.errors import NonFinite, SingularHessian
from terrainopt.kinematics import (PoseSolution, VehicleGeometry, implicit_jacobian, implicit_jacobian_batch,
                                   loop_closure_residuals, objective_hessians_batch, objective_hessians_dual,
                                   rotation, solve_pose, solve_pose_batch)
from terrainopt.oracle import finite_diff_jacobian
from terrainopt.terrain import PlaneTerrain, TerrainModel

angles = st.floats(-np.pi, np.pi)
tilts = st.floats(-1.4, 1.4)


def flat_pose(geom, leg):
    b = geom.body_offsets
    contacts = b.copy()
    contacts[:, 2] = 0.0
    return np.concatenate([[leg, 0.0, 0.0], contacts.ravel()])


@given(angles, tilts, tilts)
@settings(max_examples=100, deadline=None)
def test_rotation_orthonormal(a, b, g):
    R = rotation(a, b, g)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(R), 1.0, atol=1e-12)


def test_rotation_derivatives_match_finite_differences():
    a, b, g = 0.3, -0.2, 0.4
    _, first, sec = kin.rotation_derivatives(a, b, g, second=True)
    h = 1e-6
    for key, idx in (("a", 0), ("b", 1), ("g", 2)):
        e = np.zeros(3)
        e[idx] = h
        fd = (rotation(*(np.array([a, b, g]) + e)) - rotation(*(np.array([a, b, g]) - e))) / (2 * h)
        assert np.allclose(first[key], fd, atol=1e-8)
    e = np.array([0, h, 0])
    fd = (kin.rotation_derivatives(a, b + h, g)[1]["g"] - kin.rotation_derivatives(a, b - h, g)[1]["g"]) / (2 * h)
    assert np.allclose(sec["bg"], fd, atol=1e-8)


def test_sign_tables():
    assert np.array_equal(kin.DELTA, [1, -1, -1, 1])
    assert np.array_equal(kin.R_SIGN, [1, 1, -1, -1])


def test_flat_closure_is_exact(geom, flat):
    u = flat_pose(geom, 0.165)
    assert np.abs(loop_closure_residuals((0, 0, 0), u, geom, flat)).max() <= 1e-12


def test_vertical_offset_shows_in_vertical_rows(geom, flat):
    u = flat_pose(geom, 0.165)
    u[0] += 0.1
    g = loop_closure_residuals((0, 0, 0), u, geom, flat)
    assert np.allclose(g[[2, 5, 8, 11]], 0.1)
    assert np.allclose(np.delete(g, [2, 5, 8, 11]), 0.0)
    assert len(g) == 16 and len(u) == 15


def test_non_finite_state_rejected(geom, flat):
    with pytest.raises(NonFinite):
        loop_closure_residuals((np.nan, 0, 0), flat_pose(geom, 0.165), geom, flat)


@given(st.floats(-3, 3), st.floats(-3, 3), angles)
@settings(max_examples=30, deadline=None)
def test_flat_pose_any_state(x, y, a):
    geom = VehicleGeometry(legs=(0.3,) * 4)
    sol = solve_pose((x, y, a), geom, PlaneTerrain())
    assert abs(sol.z - 0.3) < 1e-10 and abs(sol.beta) < 1e-10 and abs(sol.gamma) < 1e-10
    assert sol.residual_norm <= 1e-10


def test_incline_pitch(geom):
    sol = solve_pose((0.5, -0.3, 0.0), geom, PlaneTerrain(0.2, 0.0, 0.0))
    assert abs(sol.gamma + np.arctan(0.2)) < 1e-6
    assert abs(sol.beta) < 1e-6


def twisted_step(height=0.15, period=4.0, harmonics=8):
    """``height * sq(x) * sq(y)`` from truncated square waves, as cosine terms."""
    k = 2 * np.pi / period
    n = np.arange(1, 2 * harmonics, 2)
    b = 4 / (np.pi * n)
    freqs, weights = [], []
    for i, ni in enumerate(n):
        for j, nj in enumerate(n):
            c = 0.5 * height * b[i] * b[j]
            freqs += [[ni * k, -nj * k, 0, 0], [ni * k, nj * k, 0, 0]]
            weights += [[c, 0], [-c, 0]]
    return TerrainModel(np.array(freqs), np.array(weights))


def test_step_terrain_flags_contact_infeasibility(geom, flat):
    # diagonal wheels sit on opposite sides of a step: no rigid stance touches all four
    step = twisted_step()
    sol_step = solve_pose((0.0, 0.0, 0.0), geom, step)
    sol_flat = solve_pose((0.0, 0.0, 0.0), geom, flat)
    assert sol_step.converged
    assert sol_step.residual_norm > 0.01
    assert sol_step.residual_norm >= 1e3 * max(sol_flat.residual_norm, 1e-12)


def test_warm_start_consistency(geom, wavy, rng):
    states = np.column_stack([rng.uniform(-3, 3, 20), rng.uniform(-3, 3, 20), rng.uniform(-np.pi, np.pi, 20)])
    cold = solve_pose_batch(states, geom, wavy)
    warm = solve_pose_batch(states + [0.01, 0.0, 0.01], geom, wavy, cold.U)
    again = solve_pose_batch(states, geom, wavy, warm.U)
    assert np.allclose(cold.residual_norm**2, again.residual_norm**2, atol=1e-8)


def test_batch_matches_single(geom, wavy):
    states = np.array([[0.1, 0.2, 0.3], [-1.0, 2.0, -2.0]])
    batch = solve_pose_batch(states, geom, wavy)
    for k in range(2):
        single = solve_pose(states[k], geom, wavy)
        assert np.allclose(single.vector(), batch.U[k], atol=1e-10)


def test_exact_hessian_matches_dual_numbers(geom, wavy):
    state = np.array([0.4, -0.7, 0.9])
    u = solve_pose(state, geom, wavy).vector() + 0.01
    H, B = objective_hessians_batch(state[None], u[None], geom, wavy, mode="exact")
    Hd, Bd = objective_hessians_dual(state, u, geom, wavy)
    assert np.allclose(H[0], Hd, atol=1e-10)
    assert np.allclose(B[0], Bd, atol=1e-10)


def test_flat_jacobian_pose_rows_vanish(geom, flat):
    sol = solve_pose((0.2, 0.1, 0.5), geom, flat)
    jac = implicit_jacobian((0.2, 0.1, 0.5), sol, geom, flat)
    assert np.allclose(jac.pose_block, 0.0, atol=1e-12)
    assert np.all(np.isfinite(jac.matrix))


def test_incline_height_derivative(geom):
    plane = PlaneTerrain(0.2, 0.0, 0.0)
    sol = solve_pose((0.0, 0.0, 0.0), geom, plane)
    D = implicit_jacobian((0.0, 0.0, 0.0), sol, geom, plane).matrix
    assert abs(D[0, 0] - 0.2) < 1e-6
    assert abs(D[0, 1]) < 1e-6


def test_implicit_jacobian_matches_finite_differences(geom, wavy, rng):
    for _ in range(5):
        s = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-np.pi, np.pi)])
        sol = solve_pose(s, geom, wavy)
        D = implicit_jacobian(s, sol, geom, wavy).matrix
        fd = finite_diff_jacobian(lambda x: solve_pose(x, geom, wavy, warm_start=sol).vector(), s, 1e-5)
        assert np.all(np.abs(D - fd) <= np.maximum(1e-4, 1e-3 * np.abs(fd)))


def test_batch_jacobian_and_condition(geom, wavy):
    states = np.array([[0.0, 0.0, 0.0], [1.0, -1.0, 0.5]])
    res = solve_pose_batch(states, geom, wavy)
    D, cond = implicit_jacobian_batch(states, res.U, geom, wavy)
    assert D.shape == (2, 15, 3) and np.all(cond < 1e12)


def test_singular_hessian_raised(geom, flat):
    sol = solve_pose((0, 0, 0), geom, flat)
    with pytest.raises(SingularHessian):
        implicit_jacobian((0, 0, 0), sol, geom, flat, cond_max=1.0)


def test_pose_json_round_trip(geom, wavy):
    sol = solve_pose((0.3, 0.3, 0.3), geom, wavy)
    back = PoseSolution.from_dict(json.loads(sol.to_json()))
    assert np.array_equal(back.vector(), sol.vector())
    assert set(json.loads(sol.to_json())) == {"z", "beta", "gamma", "contacts", "residual_norm",
                                              "converged", "iterations"}


def test_geometry_validation():
    with pytest.raises(ValueError):
        VehicleGeometry(h=-1.0)
    with pytest.raises(ValueError):
        VehicleGeometry.from_dict({"h": 0.3, "w": 0.3, "legs": [0.2] * 4, "mass": 40, "colour": "red"})
    g = VehicleGeometry.from_dict(VehicleGeometry().to_dict())
    assert g == VehicleGeometry()
