"""Command-line entry point.

Subcommands: ``synth``, ``fit``, ``pose``, ``plan`` and ``compare``.
Exit codes: 0 ok, 2 I/O, 3 degenerate input, 4 solver failure,
5 infeasible constraints, 64 usage.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import errors
from .cem import plan_cem
from .config import RunConfig
from .experiments import format_table, make_instances, run_comparison, summarize
from .kinematics import VehicleGeometry, implicit_jacobian, solve_pose
from .planner import plan, write_cost_trace_csv, write_plot_data, write_summary_json, write_trajectory_csv
from .terrain import TerrainModel, fit_terrain, read_cloud_csv, synth_terrain, write_cloud_csv
from .trajectory import assemble_constraints, build_basis, inscribed_box

EXIT_OK, EXIT_IO, EXIT_DEGENERATE, EXIT_SOLVER, EXIT_INFEASIBLE, EXIT_USAGE = 0, 2, 3, 4, 5, 64

# residual above which four-wheel contact is flagged as doubtful
CONTACT_WARN = 1e-3

log = logging.getLogger("terrainopt")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _floats(n):
    def parse(s):
        try:
            vals = [float(p) for p in s.split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {s!r}")
        if len(vals) != n or not np.all(np.isfinite(vals)):
            raise argparse.ArgumentTypeError(f"expected {n} finite comma-separated numbers, got {s!r}")
        return vals
    return parse


def _require_file(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")


def _load_config(args):
    if getattr(args, "config", None):
        _require_file(args.config)
        return RunConfig.load(args.config)
    return RunConfig()


def _load_geometry(args, cfg):
    if getattr(args, "geometry", None):
        _require_file(args.geometry)
        with open(args.geometry) as fh:
            geom = VehicleGeometry.from_dict(json.load(fh))
        cfg = RunConfig(cfg.terrain, geom, cfg.stability, cfg.planner, cfg.cem)
    if getattr(args, "mass", None) is not None:
        cfg = cfg.overlay("vehicle", mass=args.mass)
    return cfg


def _load_terrain(path):
    _require_file(path)
    return TerrainModel.load(path)


# -- subcommands -----------------------------------------------------------------

def cmd_synth(args):
    cloud = synth_terrain(args.kind, extent=args.extent, sample_spacing=args.spacing, slope=args.slope,
                          amplitude=args.amplitude, wavelength=args.wavelength, seed=args.seed)
    write_cloud_csv(cloud, args.out)
    print(f"wrote {len(cloud)} points to {args.out}")
    return EXIT_OK


def cmd_fit(args):
    cfg = _load_config(args).overlay("terrain", n_frequencies=args.n_freq, seed=args.seed,
                                     refine_steps=args.refine)
    _require_file(args.inp)
    center = tuple(args.center) if args.center else None
    cloud = read_cloud_csv(args.inp, center=center, radius=args.radius)
    t0 = time.perf_counter()
    t = cfg.terrain
    model = fit_terrain(cloud, t.n_frequencies, seed=t.seed, ridge=t.ridge, refine_steps=t.refine_steps)
    elapsed = time.perf_counter() - t0
    model.save(args.out)
    print(f"fit_rmse {model.fit_rmse:.6g} m  n_frequencies {model.n}  points {len(cloud)}  time {elapsed:.3f} s")
    return EXIT_OK


def cmd_pose(args):
    cfg = _load_geometry(args, _load_config(args))
    terrain = _load_terrain(args.terrain)
    sol = solve_pose(args.state, cfg.vehicle, terrain)
    out = sol.to_dict()
    if sol.residual_norm > CONTACT_WARN:
        out["warning"] = f"residual_norm {sol.residual_norm:.3g} suggests not all four wheels touch the terrain"
    if args.jacobian:
        jac = implicit_jacobian(args.state, sol, cfg.vehicle, terrain, mode=cfg.planner.jacobian_mode)
        out["jacobian"] = jac.matrix.tolist()
        out["hessian_condition"] = jac.conditioning
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _plan_setup(args):
    cfg = _load_geometry(args, _load_config(args))
    cfg = cfg.overlay("stability", epsilon=args.epsilon, w_theta=args.w_theta)
    cfg = cfg.overlay("planner", eta=args.eta, iters=args.iters, order=args.order, steps=args.steps,
                      horizon=args.horizon, use_stability=False if args.no_stability else None)
    cfg = cfg.overlay("cem", batch_size=args.batch, seed=args.seed, n_iterations=args.cem_iters,
                      use_stability=False if args.no_stability else None)
    return cfg


def cmd_plan(args):
    cfg = _plan_setup(args)
    terrain = _load_terrain(args.terrain)
    p = cfg.planner
    basis = build_basis(p.steps, p.horizon, p.order)
    center = terrain.center
    box = inscribed_box(center, args.patch_radius)
    constraints = assemble_constraints(args.start, args.goal, box, basis)
    if args.method == "cem":
        result = plan_cem(terrain, cfg.vehicle, constraints, basis, cfg.cem, cfg.stability_config(),
                          cfg.cost_config())
    else:
        result = plan(terrain, cfg.vehicle, constraints, basis, cfg.planner_config())
    summary = result.summary()
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        write_trajectory_csv(result, args.out + "_trajectory.csv")
        write_summary_json(result, args.out + "_summary.json")
        write_cost_trace_csv(result, args.out + "_cost_trace.csv")
        if args.emit_plot_data:
            write_plot_data(result, args.out + "_plot.csv")
    elif args.emit_plot_data:
        raise UsageError("--emit-plot-data needs --out")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_compare(args):
    cfg = _plan_setup(args)
    p = cfg.planner
    instances = make_instances(args.instances, seed=args.seed, kind=args.kind, amplitude=args.amplitude,
                               n_steps=p.steps, horizon=p.horizon, order=p.order)
    batches = tuple(args.batches)
    rows = run_comparison(instances, cfg.vehicle, batches, cfg.stability_config(), cfg.planner_config(),
                          cem_iterations=cfg.cem.n_iterations, cem_std=cfg.cem.initial_std)
    table = summarize(rows)
    print(format_table(table, timing=not args.no_timing))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _add_plan_flags(p):
    p.add_argument("--config", help="JSON run config (flags override it)")
    p.add_argument("--geometry", help="vehicle geometry JSON {h, w, legs, mass}")
    p.add_argument("--mass", type=_positive_float)
    p.add_argument("--w-theta", type=float, dest="w_theta")
    p.add_argument("--epsilon", type=_positive_float)
    p.add_argument("--eta", type=_positive_float)
    p.add_argument("--iters", type=_positive_int)
    p.add_argument("--order", type=_positive_int)
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--horizon", type=_positive_float)
    p.add_argument("--no-stability", action="store_true", dest="no_stability",
                   help="drop the stability cost from the objective")
    p.add_argument("--batch", type=_positive_int, help="CEM batch size")
    p.add_argument("--cem-iters", type=_positive_int, dest="cem_iters")
    p.add_argument("--seed", type=int)


def build_parser():
    parser = Parser(prog="terrainopt", description="Terrain-aware trajectory optimisation for wheeled vehicles")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("synth", help="sample a synthetic elevation cloud")
    p.add_argument("--kind", choices=["flat", "incline", "sinusoidal", "hills"], default="hills")
    p.add_argument("--extent", type=_positive_float, default=14.0)
    p.add_argument("--spacing", type=_positive_float, default=0.25)
    p.add_argument("--slope", type=float, default=0.2)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--wavelength", type=_positive_float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a Fourier terrain model to an x,y,z CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-freq", type=_positive_int, dest="n_freq")
    p.add_argument("--seed", type=int)
    p.add_argument("--refine", type=int, help="frequency refinement steps")
    p.add_argument("--center", type=_floats(2))
    p.add_argument("--radius", type=_positive_float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pose", help="solve the vehicle pose at one yaw-plane state")
    p.add_argument("--terrain", required=True)
    p.add_argument("--state", type=_floats(3), required=True, help="x,y,alpha")
    p.add_argument("--geometry")
    p.add_argument("--mass", type=_positive_float)
    p.add_argument("--jacobian", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_pose)

    p = sub.add_parser("plan", help="optimise one trajectory")
    p.add_argument("--terrain", required=True)
    p.add_argument("--start", type=_floats(6), required=True, help="x,y,vx,vy,ax,ay")
    p.add_argument("--goal", type=_floats(6), required=True, help="x,y,vx,vy,ax,ay")
    p.add_argument("--method", choices=["gradient", "cem"], default="gradient")
    p.add_argument("--patch-radius", type=_positive_float, default=7.0, dest="patch_radius")
    p.add_argument("--out", help="output prefix")
    p.add_argument("--emit-plot-data", action="store_true", dest="emit_plot_data")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("compare", help="gradient planner vs CEM on seeded synthetic instances")
    p.add_argument("--instances", type=_positive_int, default=10)
    p.add_argument("--kind", choices=["sinusoidal", "hills"], default="hills")
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--batches", type=_positive_int, nargs="+", default=[100, 20])
    p.add_argument("--no-timing", action="store_true", dest="no_timing",
                   help="omit wall times so repeated runs print identical tables")
    p.add_argument("--out", help="per-instance CSV")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is None and args.command == "compare":
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except errors.InsufficientOrder as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (errors.DegenerateCloud, errors.DegenerateSupportPolygon, errors.ZeroProjectedForce) as exc:
        print(f"degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (errors.ProjectionInfeasible, errors.InfeasibleBox) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (errors.SolverDiverged, errors.SingularJacobian, errors.SingularHessian,
            errors.InnerSolverFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (errors.TerrainOptError, ValueError, KeyError) as exc:
        # malformed file contents or configs
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
