"""Bi-level trajectory optimisation: projected gradient descent over the
polynomial coefficients, with the NLS pose predictor in the inner layer.

The stability gradient is assembled as a chain of small vector-Jacobian
products: per step ``d c_s / d(com, contacts)`` from forward-mode duals, then
the (15, 3) implicit Jacobian of the pose, then the flat-output map from
``(x, y, alpha)`` to the coefficients. The (15 K, 2 n) Jacobian of the whole
pose trajectory is never formed.
"""

import csv
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin
from .errors import InnerSolverFailure, ProjectionInfeasible
from .qp import solve_projection
from .stability import StabilityConfig, stability_cost_batch, stability_cost_gradient_batch, stability_report
from .trajectory import CostConfig, TrajectoryParams, flat_outputs, smoothness_cost, straight_line_init

log = logging.getLogger(__name__)

# inner solves that stop on the iteration cap are still usable when their
# gradient is this small
GRAD_ACCEPT = 1e-6


@dataclass(frozen=True)
class PlannerConfig:
    eta: float = 0.05
    max_iters: int = 100
    momentum: float = 0.9
    tol: float = 1e-6
    max_halvings: int = 10
    use_stability: bool = True
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    jacobian_mode: str = "exact"

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.tol <= 0 or self.max_halvings < 0:
            raise ValueError("tol must be positive and max_halvings non-negative")


@dataclass(frozen=True)
class Evaluation:
    """Everything computed at one coefficient vector."""

    xi: np.ndarray
    total: float
    cost_r: float
    cost_s: float
    states: np.ndarray  # (K, 3)
    U: np.ndarray  # (K, 15)
    residual_norm: np.ndarray
    iterations: np.ndarray
    status: np.ndarray
    step_cost_s: np.ndarray  # (K,)
    theta_min: np.ndarray  # (K,)
    grad: np.ndarray = None


@dataclass
class PlanResult:
    params: TrajectoryParams
    times: np.ndarray
    states: np.ndarray
    poses: list
    reports: list
    cost_trace: list  # dicts with iteration, total, cost_r, cost_s, eta
    wall_time: float
    converged: bool
    iterations: int
    nls_calls: int
    method: str = "gradient"
    final: Evaluation = None
    iterates: list = field(default_factory=list)  # accepted coefficient vectors, in order

    @property
    def cost_total(self):
        return self.final.total

    @property
    def min_tipover_angle(self):
        return float(np.min(self.final.theta_min))

    def summary(self):
        return {
            "method": self.method,
            "cost_total": float(self.final.total),
            "cost_r": float(self.final.cost_r),
            "cost_s_total": float(np.sum(self.final.step_cost_s)),
            "min_tipover_angle": self.min_tipover_angle,
            "mean_tipover_margin": float(np.mean(self.final.theta_min)),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "wall_time": float(self.wall_time),
            "nls_calls": int(self.nls_calls),
            "max_residual_norm": float(np.max(self.final.residual_norm)),
        }


def project(xi_bar, constraints):
    """Euclidean projection onto the constraint set; keeps the input's type."""
    typed = isinstance(xi_bar, TrajectoryParams)
    v = xi_bar.xi if typed else np.asarray(xi_bar, dtype=float)
    res = solve_projection(v, constraints.A_eq, constraints.b_eq, constraints.A, constraints.b)
    return TrajectoryParams.from_xi(res.x) if typed else res.x


def check_feasible(constraints):
    """Projects the zero vector; raises ProjectionInfeasible if the set is empty."""
    x = project(np.zeros(constraints.n_vars), constraints)
    eq, ineq = constraints.residuals(x)
    if eq > 1e-8 or ineq > 1e-8:
        raise ProjectionInfeasible(f"projection left residuals eq={eq:.2e} ineq={ineq:.2e}")
    return x


def _failed(batch):
    bad = ~np.all(np.isfinite(batch.U), axis=1) | (batch.status == kin.GIMBAL)
    bad |= (batch.status != kin.CONVERGED) & ~(batch.grad_norm <= GRAD_ACCEPT)
    return bad


class Problem:
    """Bi-level objective on a fixed terrain/vehicle/constraint instance.

    Counts inner pose solves in ``nls_calls`` (one per time step per solve,
    retries included).
    """

    def __init__(self, terrain, geom, basis, stability=None, cost=None, use_stability=True,
                 jacobian_mode="exact"):
        self.terrain, self.geom, self.basis = terrain, geom, basis
        self.stability = stability or StabilityConfig.gravity(geom.mass)
        self.cost = cost or CostConfig()
        self.use_stability = use_stability
        self.jacobian_mode = jacobian_mode
        self.nls_calls = 0

    def solve_poses(self, states, warm=None):
        batch = kin.solve_pose_batch(states, self.geom, self.terrain, warm)
        self.nls_calls += len(states)
        bad = _failed(batch)
        if bad.any():
            idx = np.flatnonzero(bad)
            retry = kin.solve_pose_batch(states[idx], self.geom, self.terrain, None)
            self.nls_calls += len(idx)
            if _failed(retry).any():
                k = idx[np.flatnonzero(_failed(retry))[0]]
                raise InnerSolverFailure(f"pose solver failed at step {k}, state {states[k]}")
            for name in ("U", "residual_norm", "grad_norm", "iterations", "status"):
                getattr(batch, name)[idx] = getattr(retry, name)
        return batch

    def evaluate(self, xi, warm=None, need_grad=True):
        xi = np.asarray(xi, dtype=float)
        fo = flat_outputs(self.basis, xi)
        states = fo.states
        batch = self.solve_poses(states, warm)
        U = batch.U
        K = len(states)
        contacts = U[:, 3:].reshape(K, 4, 3)
        com = np.column_stack([states[:, 0], states[:, 1], U[:, 0]])
        cost_r, grad_r = smoothness_cost(self.basis, xi, self.cost)
        step_cs, theta_min = stability_cost_batch(contacts, com, self.stability)
        cost_s = float(np.sum(step_cs)) if self.use_stability else 0.0
        grad = None
        if need_grad:
            grad = grad_r
            if self.use_stability:
                grad = grad + self.stability_gradient(fo, U)
        return Evaluation(xi, cost_r + cost_s, cost_r, cost_s, states, U, batch.residual_norm,
                          batch.iterations, batch.status, step_cs, theta_min, grad)

    def stability_gradient(self, fo, U):
        """d(sum_k c_s,k)/d xi through the implicit pose Jacobians."""
        states = fo.states
        K = len(states)
        D, _ = kin.implicit_jacobian_batch(states, U, self.geom, self.terrain, self.jacobian_mode)
        contacts = U[:, 3:].reshape(K, 4, 3)
        com = np.column_stack([states[:, 0], states[:, 1], U[:, 0]])
        g = stability_cost_gradient_batch(contacts, com, D, self.stability)  # (K, 3)
        v2 = fo.xd**2 + fo.yd**2
        safe = np.where(fo.zero_velocity, 1.0, v2)
        ga = np.where(fo.zero_velocity, 0.0, g[:, 2])
        W, Wd = self.basis.W, self.basis.Wd
        gx = W.T @ g[:, 0] + Wd.T @ (ga * -fo.yd / safe)
        gy = W.T @ g[:, 1] + Wd.T @ (ga * fo.xd / safe)
        return np.concatenate([gx, gy])

    def total_cost(self, xi, warm=None):
        return self.evaluate(xi, warm, need_grad=False).total


def _trace_entry(it, ev, eta):
    return {"iteration": it, "total": ev.total, "cost_r": ev.cost_r, "cost_s": ev.cost_s, "eta": eta}


def build_result(problem, ev, trace, t0, converged, iterations, method, iterates=None):
    poses = [kin.PoseSolution.from_vector(u, r, n, s == kin.CONVERGED)
             for u, r, n, s in zip(ev.U, ev.residual_norm, ev.iterations, ev.status)]
    reports = [stability_report(p.contacts, (st[0], st[1], p.z), problem.stability)
               for p, st in zip(poses, ev.states)]
    return PlanResult(TrajectoryParams.from_xi(ev.xi), problem.basis.times.copy(), ev.states, poses, reports,
                      trace, time.perf_counter() - t0, converged, iterations, problem.nls_calls, method, ev,
                      iterates or [])


def plan(terrain, geom, constraints, basis, config=None, init=None):
    """Projected gradient descent with momentum and backtracking on cost increase."""
    config = config or PlannerConfig()
    t0 = time.perf_counter()
    check_feasible(constraints)
    problem = Problem(terrain, geom, basis, config.stability, config.cost, config.use_stability,
                      config.jacobian_mode)
    if init is None:
        b = constraints.b_eq
        # b_eq holds x-rows then y-rows; positions sit at indices 0, 3 and 6, 9
        init = straight_line_init(basis, constraints, (b[0], b[6]), (b[3], b[9]))
    xi = project(init.xi if isinstance(init, TrajectoryParams) else np.asarray(init, dtype=float), constraints)
    ev = problem.evaluate(xi)
    trace = [_trace_entry(0, ev, config.eta)]
    iterates = [xi]
    eta, m = config.eta, config.momentum
    v = np.zeros_like(xi)
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        accepted = None
        for trial in range(config.max_halvings + 2):
            # Nesterov in lookahead form: the stored iterate is the lookahead point
            v_new = m * v - eta * ev.grad
            step = m * v_new - eta * ev.grad
            xi_new = project(ev.xi + step, constraints)
            cand = problem.evaluate(xi_new, ev.U, need_grad=False)
            if cand.total <= ev.total + 1e-12 * abs(ev.total):
                accepted = cand
                break
            if np.any(v):
                log.debug("iteration %d: cost rose, restarting momentum", it)
                v = np.zeros_like(v)
            else:
                eta *= 0.5
        if accepted is None:
            log.info("no decrease after %d halvings; stopping at iteration %d", config.max_halvings, it)
            converged = True
            break
        dxi = accepted.xi - ev.xi
        v = (dxi + eta * ev.grad) / m if m > 0 else np.zeros_like(v)
        ev = problem.evaluate(accepted.xi, accepted.U)
        trace.append(_trace_entry(it, ev, eta))
        iterates.append(ev.xi)
        if np.abs(dxi).max() <= config.tol:
            converged = True
            break
    return build_result(problem, ev, trace, t0, converged, it, "gradient", iterates)


# -- output files --------------------------------------------------------------

TRAJECTORY_COLUMNS = ["t", "x", "y", "z", "alpha", "beta", "gamma", "c_s", "theta_min"]


def write_trajectory_csv(result, path):
    ev = result.final
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for k, t in enumerate(result.times):
            x, y, a = ev.states[k]
            z, beta, gamma = ev.U[k, :3]
            w.writerow([repr(float(v)) for v in (t, x, y, z, a, beta, gamma, ev.step_cost_s[k], ev.theta_min[k])])


def read_trajectory_csv(path):
    """Columns as a dict of arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRAJECTORY_COLUMNS:
        raise ValueError(f"{path}: unexpected trajectory header")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(TRAJECTORY_COLUMNS))
    return {c: data[:, i] for i, c in enumerate(TRAJECTORY_COLUMNS)}


def write_cost_trace_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["iteration", "total", "cost_r", "cost_s", "eta"])
        w.writeheader()
        for row in result.cost_trace:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_cost_trace_csv(path):
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "iteration" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def write_summary_json(result, path, extra=None):
    summary = result.summary()
    summary["coefficients"] = {"cx": result.params.cx.tolist(), "cy": result.params.cy.tolist()}
    if extra:
        summary.update(extra)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def write_plot_data(result, path):
    """Long-format (series, t, value) rows for external plotting."""
    ev = result.final
    series = {"x": ev.states[:, 0], "y": ev.states[:, 1], "alpha": ev.states[:, 2], "z": ev.U[:, 0],
              "beta": ev.U[:, 1], "gamma": ev.U[:, 2], "c_s": ev.step_cost_s, "theta_min": ev.theta_min}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "t", "value"])
        for name, vals in series.items():
            for t, v in zip(result.times, vals):
                w.writerow([name, repr(float(t)), repr(float(v))])
        for row in result.cost_trace:
            w.writerow(["cost_total", row["iteration"], repr(float(row["total"]))])
