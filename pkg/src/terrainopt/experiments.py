"""Seeded planning instances and the ablation / method-comparison protocols.

An instance is a synthetic terrain sampled on a 7 m patch, refit with the
Fourier model, plus start and goal on opposite sides of the patch with a
constant cruise velocity at both ends.
"""

from dataclasses import dataclass

import numpy as np

from .cem import CemConfig, plan_cem
from .kinematics import VehicleGeometry
from .planner import PlannerConfig, plan
from .stability import StabilityConfig
from .terrain import fit_terrain, synth_terrain
from .trajectory import assemble_constraints, build_basis, inscribed_box

PATCH_RADIUS = 7.0


@dataclass(frozen=True)
class Instance:
    seed: int
    model: object
    basis: object
    constraints: object
    start: np.ndarray  # (6,) x, y, vx, vy, ax, ay
    goal: np.ndarray


def make_instance(seed, kind="hills", amplitude=0.5, wavelength=4.0, n_frequencies=100,
                  n_steps=50, horizon=10.0, order=10, endpoint_radius=4.2, spacing=0.25):
    cloud = synth_terrain(kind, extent=2 * PATCH_RADIUS, sample_spacing=spacing, amplitude=amplitude,
                          wavelength=wavelength, seed=seed)
    model = fit_terrain(cloud, n_frequencies, seed=0)
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 2 * np.pi)
    p0 = endpoint_radius * np.array([np.cos(a), np.sin(a)])
    p1 = -p0
    v = (p1 - p0) / horizon
    start = np.array([*p0, *v, 0.0, 0.0])
    goal = np.array([*p1, *v, 0.0, 0.0])
    basis = build_basis(n_steps, horizon, order)
    constraints = assemble_constraints(start, goal, inscribed_box((0.0, 0.0), PATCH_RADIUS), basis)
    return Instance(seed, model, basis, constraints, start, goal)


def make_instances(n, seed=0, **kwargs):
    return [make_instance(seed + i, **kwargs) for i in range(n)]


def run_ablation(instances, geom=None, w_thetas=(0.05, 0.2), planner_kwargs=None):
    """Worst-case tip-over angle per instance without c_s and for each weight.

    Returns a dict ``label -> (n_instances,) array`` with labels ``"none"`` and
    ``"w=<value>"``.
    """
    geom = geom or VehicleGeometry()
    planner_kwargs = planner_kwargs or {}
    out = {"none": []}
    for w in w_thetas:
        out[f"w={w}"] = []
    for inst in instances:
        cfg = PlannerConfig(use_stability=False, stability=StabilityConfig.gravity(geom.mass), **planner_kwargs)
        out["none"].append(plan(inst.model, geom, inst.constraints, inst.basis, cfg).min_tipover_angle)
        for w in w_thetas:
            cfg = PlannerConfig(stability=StabilityConfig.gravity(geom.mass, w_theta=w), **planner_kwargs)
            out[f"w={w}"].append(plan(inst.model, geom, inst.constraints, inst.basis, cfg).min_tipover_angle)
    return {k: np.array(v) for k, v in out.items()}


def run_comparison(instances, geom=None, batches=(100, 20), stability=None, planner_config=None,
                   cem_iterations=30, cem_std=0.5):
    """Gradient planner vs CEM at each batch size on every instance.

    Returns a list of row dicts (one per method and instance).
    """
    geom = geom or VehicleGeometry()
    stability = stability or StabilityConfig.gravity(geom.mass)
    planner_config = planner_config or PlannerConfig(stability=stability)
    rows = []
    for inst in instances:
        res = plan(inst.model, geom, inst.constraints, inst.basis, planner_config)
        rows.append(_row("gradient", inst.seed, res))
        for B in batches:
            cfg = CemConfig(batch_size=B, n_iterations=cem_iterations, initial_std=cem_std, seed=inst.seed)
            res = plan_cem(inst.model, geom, inst.constraints, inst.basis, cfg, stability)
            rows.append(_row(f"cem-{B}", inst.seed, res))
    return rows


def _row(method, seed, res):
    return {"method": method, "instance": seed, "cost": res.cost_total,
            "min_tipover_angle": res.min_tipover_angle, "wall_time": res.wall_time,
            "nls_calls": res.nls_calls}


def summarize(rows):
    """Per-method means, in first-seen method order."""
    methods = list(dict.fromkeys(r["method"] for r in rows))
    table = []
    for m in methods:
        sel = [r for r in rows if r["method"] == m]
        table.append({
            "method": m,
            "instances": len(sel),
            "mean_cost": float(np.mean([r["cost"] for r in sel])),
            "mean_min_tipover_angle": float(np.mean([r["min_tipover_angle"] for r in sel])),
            "mean_wall_time": float(np.mean([r["wall_time"] for r in sel])),
            "mean_nls_calls": float(np.mean([r["nls_calls"] for r in sel])),
        })
    return table


def format_table(table, timing=True):
    cols = ["method", "instances", "mean_cost", "mean_min_tipover_angle", "mean_nls_calls"]
    if timing:
        cols.append("mean_wall_time")
    lines = ["  ".join(f"{c:>22}" for c in cols)]
    for row in table:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:>22.6g}" if isinstance(v, float) else f"{v!s:>22}")
        lines.append("  ".join(cells))
    return "\n".join(lines)

