import json

import numpy as np
import pytest

from terrainopt import kinematics as kin
from terrainopt.errors import InnerSolverFailure, ProjectionInfeasible
from terrainopt.kinematics import VehicleGeometry
from terrainopt.oracle import min_accel_spline, tipover_angle_2d
from terrainopt.planner import (PlannerConfig, Problem, check_feasible, plan, project, read_cost_trace_csv,
                                read_trajectory_csv, write_cost_trace_csv, write_plot_data, write_summary_json,
                                write_trajectory_csv)
from terrainopt.stability import StabilityConfig
from terrainopt.trajectory import (ConstraintSet, CostConfig, TrajectoryParams, assemble_constraints, build_basis,
                                   inscribed_box, smoothness_cost, straight_line_init)

BOX = inscribed_box((0.0, 0.0), 7.0)


def _instance(start, goal, n_steps=20, horizon=10.0):
    basis = build_basis(n_steps, horizon, 10)
    return basis, assemble_constraints(start, goal, BOX, basis)


@pytest.fixture(scope="module")
def diagonal():
    return _instance([-3, -3, 0.6, 0.6, 0, 0], [3, 3, 0.6, 0.6, 0, 0])


@pytest.fixture(scope="module")
def wavy_plan(wavy, geom, diagonal):
    basis, cons = diagonal
    return plan(wavy, geom, cons, basis, PlannerConfig(max_iters=25))


def test_flat_straight_line_is_stationary(flat, diagonal):
    square = VehicleGeometry(h=0.3, w=0.3)
    basis, cons = diagonal
    res = plan(flat, square, cons, basis, PlannerConfig(stability=StabilityConfig.gravity(square.mass)))
    xy = res.states[:, :2]
    s = basis.times / basis.horizon
    line = np.column_stack([-3 + 6 * s, -3 + 6 * s])
    assert np.abs(xy - line).max() < 1e-6
    # square chassis on level ground: all four angles equal the planar edge angle
    expected = tipover_angle_2d(0.0, 0.3, res.final.U[0, 0] - flat.height(0.0, 0.0))
    assert np.allclose(res.final.theta_min, expected, atol=1e-8)
    assert res.final.cost_s == pytest.approx(0.0, abs=1e-12)
    assert np.abs(res.final.grad).max() < 1e-6
    assert res.converged


def test_flat_matches_min_accel_spline(flat):
    # non-trivial boundary accelerations, no curvature term, no stability term
    basis, cons = _instance([-3, 1, 0.5, 0.1, 0.2, -0.1], [3, -1, 0.5, 0.0, -0.1, 0.1])
    cfg = PlannerConfig(use_stability=False, cost=CostConfig(w_curv=0.0), max_iters=2000, tol=1e-10)
    res = plan(flat, VehicleGeometry(), cons, basis, cfg)
    ref = min_accel_spline(basis, cons)
    ref_cost, _ = smoothness_cost(basis, ref, CostConfig(w_curv=0.0))
    assert res.final.cost_r == pytest.approx(ref_cost, abs=1e-6)


def test_all_iterates_feasible(wavy_plan, diagonal):
    _, cons = diagonal
    assert len(wavy_plan.iterates) == wavy_plan.iterations + 1 or wavy_plan.converged
    for xi in wavy_plan.iterates:
        assert cons.feasible(xi, tol=1e-8)


def test_final_poses_solved(wavy_plan):
    # overdetermined contact problem: small but nonzero residual on curved ground
    assert np.max(wavy_plan.final.residual_norm) < 0.05
    assert np.all(wavy_plan.final.status == kin.CONVERGED)
    assert np.all(np.isfinite(wavy_plan.final.U))
    assert len(wavy_plan.poses) == len(wavy_plan.times) == len(wavy_plan.reports)


def test_cost_never_increases(wavy_plan):
    totals = [row["total"] for row in wavy_plan.cost_trace]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(totals, totals[1:]))
    assert totals[-1] < totals[0]


def test_descent_without_momentum(wavy, geom, diagonal):
    basis, cons = diagonal
    res = plan(wavy, geom, cons, basis, PlannerConfig(momentum=0.0, max_iters=10))
    totals = [row["total"] for row in res.cost_trace]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(totals, totals[1:]))


def test_infeasible_init_is_projected(wavy, geom, diagonal):
    basis, cons = diagonal
    bad = np.full(cons.n_vars, 50.0)
    assert not cons.feasible(bad)
    res = plan(wavy, geom, cons, basis, PlannerConfig(max_iters=3), init=bad)
    assert cons.feasible(res.iterates[0])
    assert cons.feasible(res.params.xi)


def test_project_keeps_type(diagonal):
    _, cons = diagonal
    x = np.zeros(cons.n_vars)
    assert isinstance(project(x, cons), np.ndarray)
    assert isinstance(project(TrajectoryParams.from_xi(x), cons), TrajectoryParams)


def test_empty_constraint_set_detected():
    A_eq = np.array([[1.0, 0.0]])
    cons = ConstraintSet(A_eq, np.array([2.0]), np.array([[1.0, 0.0]]), np.array([1.0]))
    with pytest.raises(ProjectionInfeasible):
        check_feasible(cons)


def test_full_gradient_matches_finite_differences(wavy, geom, diagonal, rng):
    """Stability + smoothness gradient through the pose solver at perturbed iterates."""
    basis, cons = diagonal
    prob = Problem(wavy, geom, basis)
    base = project(_straight(basis, cons), cons)
    h = 1e-6
    for _ in range(10):
        xi = project(base + 0.05 * rng.standard_normal(len(base)), cons)
        ev = prob.evaluate(xi)
        # directional checks along a few random directions
        for _ in range(3):
            d = rng.standard_normal(len(xi))
            d /= np.linalg.norm(d)
            fd = (prob.total_cost(xi + h * d, ev.U) - prob.total_cost(xi - h * d, ev.U)) / (2 * h)
            an = ev.grad @ d
            assert abs(fd - an) <= max(1e-3 * abs(fd), 1e-4)


def _straight(basis, cons):
    b = cons.b_eq
    return straight_line_init(basis, cons, (b[0], b[6]), (b[3], b[9])).xi


def test_nls_calls_counted(wavy_plan):
    # at least one solve per step for every evaluation recorded in the trace
    assert wavy_plan.nls_calls >= len(wavy_plan.times) * len(wavy_plan.cost_trace)


def test_inner_failure_raises(wavy, geom, diagonal, monkeypatch):
    basis, cons = diagonal
    real = kin.solve_pose_batch

    def broken(states, geom, terrain, warm=None, **kw):
        batch = real(states, geom, terrain, warm, **kw)
        batch.status[:] = kin.GIMBAL
        return batch

    monkeypatch.setattr(kin, "solve_pose_batch", broken)
    with pytest.raises(InnerSolverFailure):
        plan(wavy, geom, cons, basis, PlannerConfig(max_iters=2))


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(eta=0.0)
    with pytest.raises(ValueError):
        PlannerConfig(momentum=1.0)
    with pytest.raises(ValueError):
        PlannerConfig(max_iters=0)


def test_output_round_trip(wavy_plan, tmp_path):
    write_trajectory_csv(wavy_plan, tmp_path / "traj.csv")
    cols = read_trajectory_csv(tmp_path / "traj.csv")
    assert np.array_equal(cols["x"], wavy_plan.states[:, 0])
    assert np.array_equal(cols["z"], wavy_plan.final.U[:, 0])
    assert np.array_equal(cols["theta_min"], wavy_plan.final.theta_min)

    write_cost_trace_csv(wavy_plan, tmp_path / "trace.csv")
    trace = read_cost_trace_csv(tmp_path / "trace.csv")
    assert [r["total"] for r in trace] == [r["total"] for r in wavy_plan.cost_trace]

    summary = write_summary_json(wavy_plan, tmp_path / "summary.json", {"terrain": "wavy"})
    loaded = json.loads((tmp_path / "summary.json").read_text())
    assert loaded == json.loads(json.dumps(summary))
    assert np.array_equal(loaded["coefficients"]["cx"], wavy_plan.params.cx)
    assert loaded["terrain"] == "wavy"

    write_plot_data(wavy_plan, tmp_path / "plot.csv")
    lines = (tmp_path / "plot.csv").read_text().splitlines()
    assert lines[0] == "series,t,value"
    assert len(lines) == 1 + 8 * len(wavy_plan.times) + len(wavy_plan.cost_trace)


def test_read_trajectory_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(p)
