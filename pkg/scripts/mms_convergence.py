"""Manufactured-solution study: spatial convergence ladder and a long stability run.

    python scripts/mms_convergence.py --out results/mms
"""
import argparse
import time
from pathlib import Path

import numpy as np

from cardiofem.solver import SolverSettings
from cardiofem.verification import MMSParams, mms_ladder, run_mms, tail_is_stable


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--ladder", type=int, nargs="+", default=[13, 25, 50], help="grid nodes per side")
    ap.add_argument("--stability-T", type=float, default=50.0, help="length of the stability run (ms)")
    ap.add_argument("--tolerance", type=float, default=1e-8, help="PCG tolerance for the stability run")
    ap.add_argument("--out", type=Path, default=Path("results/mms"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    ladder = mms_ladder(args.ladder)
    print(ladder.table())
    for n, run in zip(ladder.ns, ladder.runs):
        run.write_csv(args.out / f"ladder_n{n}.csv")

    p = MMSParams(n=50, dt=0.01, T=args.stability_T)
    series = run_mms(p, SolverSettings(args.tolerance, args.tolerance, 1000))
    series.write_csv(args.out / "stability.csv")
    period = 2 * np.pi / p.lam
    stable = tail_is_stable(series.times, series.l2, window=period, floor=args.tolerance)
    print(f"stability run n=50 dt=0.01 T={p.T:g}: final L2 {series.l2[-1]:.3e}, tail stable: {stable}")
    print(f"total {time.perf_counter() - t0:.1f} s; CSVs in {args.out}")


if __name__ == "__main__":
    main()
