"""Cross-entropy method baseline over the same coefficients, costs and constraints.

Each sample is projected onto the constraint set before evaluation, so every
candidate is feasible. Pose solves are cold-started and batched across all
samples and time steps of an iteration.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from .planner import Problem, _failed, _trace_entry, build_result, check_feasible, project
from .stability import stability_cost_batch
from .trajectory import TrajectoryParams, heading_batch, smoothness_cost_batch, straight_line_init


@dataclass(frozen=True)
class CemConfig:
    batch_size: int = 100
    elite_fraction: float = 0.1
    n_iterations: int = 30
    initial_std: float = 0.5
    seed: int = 0
    use_stability: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.n_iterations < 1:
            raise ValueError("batch_size and n_iterations must be >= 1")
        if not 0 < self.elite_fraction <= 1:
            raise ValueError("elite_fraction must lie in (0, 1]")
        if self.initial_std <= 0:
            raise ValueError("initial_std must be positive")

    @property
    def elite_count(self):
        return max(1, int(round(self.elite_fraction * self.batch_size)))


def batch_costs(problem, XI):
    """Total cost per sample (B,); samples whose pose solve fails cost ``inf``."""
    B = len(XI)
    states = heading_batch(problem.basis, XI)  # (B, K, 3)
    K = states.shape[1]
    flat = states.reshape(B * K, 3)
    res = kin.solve_pose_batch(flat, problem.geom, problem.terrain, None)
    problem.nls_calls += B * K
    bad = _failed(res).reshape(B, K).any(axis=1)
    cost = smoothness_cost_batch(problem.basis, XI, problem.cost)
    if problem.use_stability:
        U = res.U
        contacts = U[:, 3:].reshape(B * K, 4, 3)
        com = np.column_stack([flat[:, 0], flat[:, 1], U[:, 0]])
        ok = np.repeat(~bad, K)
        cs = np.zeros(B * K)
        if ok.any():
            cs[ok] = stability_cost_batch(contacts[ok], com[ok], problem.stability)[0]
        cost = cost + cs.reshape(B, K).sum(axis=1)
    cost = np.where(bad | ~np.isfinite(cost), np.inf, cost)
    return cost


def plan_cem(terrain, geom, constraints, basis, cem_config=None, stability_config=None, cost_config=None,
             init=None):
    config = cem_config or CemConfig()
    t0 = time.perf_counter()
    check_feasible(constraints)
    problem = Problem(terrain, geom, basis, stability_config, cost_config, config.use_stability)
    if init is None:
        b = constraints.b_eq
        init = straight_line_init(basis, constraints, (b[0], b[6]), (b[3], b[9]))
    mean = project(init.xi if isinstance(init, TrajectoryParams) else np.asarray(init, dtype=float), constraints)
    std = np.full_like(mean, config.initial_std)
    rng = np.random.default_rng(config.seed)
    n_elite = config.elite_count

    best_xi = mean.copy()
    best_cost = batch_costs(problem, best_xi[None])[0]
    trace = [{"iteration": 0, "total": float(best_cost), "cost_r": np.nan, "cost_s": np.nan, "eta": 0.0}]
    for it in range(1, config.n_iterations + 1):
        raw = mean + std * rng.standard_normal((config.batch_size, len(mean)))
        XI = np.array([project(x, constraints) for x in raw])
        costs = batch_costs(problem, XI)
        order = np.argsort(costs, kind="stable")
        if np.isfinite(costs[order[0]]) and costs[order[0]] < best_cost:
            best_cost, best_xi = costs[order[0]], XI[order[0]].copy()
        elite = XI[order[:n_elite]][np.isfinite(costs[order[:n_elite]])]
        if len(elite):
            mean = elite.mean(axis=0)
            std = elite.std(axis=0)
        trace.append({"iteration": it, "total": float(best_cost), "cost_r": np.nan, "cost_s": np.nan,
                      "eta": 0.0})
    final = problem.evaluate(best_xi, need_grad=False)
    trace[-1].update(_trace_entry(config.n_iterations, final, 0.0))
    return build_result(problem, final, trace, t0, True, config.n_iterations, f"cem-{config.batch_size}")
