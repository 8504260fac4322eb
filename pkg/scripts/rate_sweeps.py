"""Continuum-limit sweeps of E_tau/tau for the pendulum at P = 0 and P = 0.5.

    python scripts/rate_sweeps.py [--taus 0.2 0.1 0.05 0.025] [--p 0 0.5]
"""
import argparse

from weakkam import continuum_limit_sweep, pendulum


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--taus", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    ap.add_argument("--p", type=float, nargs="+", default=[0.0, 0.5])
    ap.add_argument("--K", type=float, default=1.0)
    args = ap.parse_args()
    model = pendulum(args.K)
    for p in args.p:
        res = continuum_limit_sweep(model, (p,), args.taus)
        print(f"P = {p}: reference H(P) = {res.reference:.10f}")
        print(f"{'tau':>8} {'n':>6} {'E/tau':>14} {'error':>10} {'Lip':>7} {'jump/tau':>9}")
        for e in res.entries:
            err = abs(e.normalized_effective + res.reference)
            print(f"{e.tau:8.4g} {e.n:6d} {e.normalized_effective:14.8f} {err:10.3e} {e.lipschitz:7.4f} {e.max_jump:9.4f}")
        if res.fit is not None:
            print(f"slope {res.fit.slope:.3f}  r2 {res.fit.r2:.4f}")
        else:
            print(f"no fit: {res.fit_error}")
        print("Cauchy gaps:", " ".join(f"{g:.2e}" for g in res.cauchy_gaps))
        print()


if __name__ == "__main__":
    main()
