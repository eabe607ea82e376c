"""Worst-case tip-over angle with and without the stability cost.

Plans every seeded hills instance three times (no stability term, w_theta =
0.05, w_theta = 0.2) and prints per-instance and mean worst-case angles.

    python3 scripts/stability_ablation.py --instances 10
"""

import argparse
import time

import numpy as np

from terrainopt.experiments import make_instances, run_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kind", choices=["hills", "sinusoidal"], default="hills")
    ap.add_argument("--amplitude", type=float, default=0.5)
    ap.add_argument("--weights", type=float, nargs="+", default=[0.05, 0.2])
    args = ap.parse_args()

    t0 = time.perf_counter()
    insts = make_instances(args.instances, seed=args.seed, kind=args.kind, amplitude=args.amplitude)
    out = run_ablation(insts, w_thetas=tuple(args.weights))
    labels = list(out)
    print("instance  " + "  ".join(f"{k:>10}" for k in labels))
    for i, inst in enumerate(insts):
        print(f"{inst.seed:8d}  " + "  ".join(f"{out[k][i]:10.5f}" for k in labels))
    print("    mean  " + "  ".join(f"{np.mean(out[k]):10.5f}" for k in labels))
    print(f"angles in rad, {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
