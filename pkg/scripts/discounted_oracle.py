"""Self-refined reference for u_delta (pendulum, P = 0) along a tau ladder.

Writes the finest solution to CSV and prints the ladder gaps and the
rate of the first rungs against it.

    python scripts/discounted_oracle.py --delta 0.25 --out u_delta.csv
"""
import argparse

from weakkam import fit_rate, pendulum, reference_discounted_solution, sup_norm_diff
from weakkam.grid import resample, to_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--delta", type=float, default=0.25)
    ap.add_argument("--ladder", type=float, nargs="+", default=[0.08, 0.04, 0.02, 0.01, 0.005])
    ap.add_argument("--tol", type=float, default=1e-9)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    ref = reference_discounted_solution(pendulum(1.0), (0.0,), args.delta, args.ladder, tol=args.tol)
    print("grids:", [s.grid.n for s in ref.solutions])
    print("iterations:", ref.iterations)
    print("Cauchy gaps:", " ".join(f"{g:.2e}" for g in ref.gaps), f"reliable={ref.reliable}")
    rungs = ref.solutions[:-2]
    errs = [sup_norm_diff(u, resample(ref.finest, u.grid)) for u in rungs]
    for t, e in zip(args.ladder, errs):
        print(f"tau {t:g}: error vs finest {e:.3e}")
    if len(errs) >= 3:
        fit = fit_rate(list(zip(args.ladder[:len(errs)], errs)))
        print(f"slope {fit.slope:.3f}  r2 {fit.r2:.4f}")
    if args.out:
        to_csv(ref.finest, args.out)


if __name__ == "__main__":
    main()
