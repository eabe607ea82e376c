"""Gradient planner against CEM at two batch sizes on seeded instances.

    python3 scripts/cem_comparison.py --instances 10 --csv comparison.csv
"""

import argparse
import csv

from terrainopt.experiments import format_table, make_instances, run_comparison, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--batches", type=int, nargs="+", default=[100, 20])
    ap.add_argument("--cem-iters", type=int, default=30)
    ap.add_argument("--csv", help="write per-instance rows here")
    args = ap.parse_args()

    rows = []
    for inst in make_instances(args.instances, seed=args.seed):
        part = run_comparison([inst], batches=tuple(args.batches), cem_iterations=args.cem_iters)
        for r in part:
            print(f"instance {r['instance']:3d}  {r['method']:>9}  cost {r['cost']:.5f}  "
                  f"min angle {r['min_tipover_angle']:.4f}  calls {r['nls_calls']:7d}  {r['wall_time']:.2f} s",
                  flush=True)
        rows += part
    print()
    print(format_table(summarize(rows)))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
