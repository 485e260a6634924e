"""Offset RMSE and placement error against torque-sensor noise.

    python3 scripts/noise_sweep.py --trials 20 --out results/noise_sweep.csv
"""
import argparse
import csv
import os
from pathlib import Path

from wrenchsim.cli import sweep
from wrenchsim.sim import reference_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--param", default="sensor.sigma_tau")
    ap.add_argument("--values", type=float, nargs="+", default=[0.0, 0.001, 0.01, 0.1])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    rows = sweep(reference_scenario(), args.param, args.values, args.trials, args.workers)
    for r in rows:
        print(f"{r['parameter']}={r['value']:<8g} offset RMSE x {r['offset_rmse_x_mm_mean']:.4g} "
              f"+/- {r['offset_rmse_x_mm_std']:.2g} mm   placement error "
              f"{r['placement_error_mm_mean']:.4g} mm   aborted {r['aborted']}")
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
