"""Fit time and residual of the Fourier terrain model against dictionary size.

    python3 scripts/fit_timing.py --sizes 25 50 100 200
"""

import argparse
import time

from terrainopt.terrain import fit_terrain, synth_terrain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[25, 50, 100, 200])
    ap.add_argument("--kind", default="hills")
    ap.add_argument("--refine", type=int, default=0, help="frequency refinement steps")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    cloud = synth_terrain(args.kind, extent=14.0, amplitude=0.5, seed=0)
    print(f"{len(cloud)} points")
    print(f"{'N':>5}  {'rmse [m]':>10}  {'time [s]':>9}")
    for n in args.sizes:
        best = float("inf")
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            model = fit_terrain(cloud, n, seed=0, refine_steps=args.refine)
            best = min(best, time.perf_counter() - t0)
        print(f"{n:5d}  {model.fit_rmse:10.4g}  {best:9.3f}")


if __name__ == "__main__":
    main()
