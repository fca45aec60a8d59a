#!/usr/bin/env python3
"""Time-step refinement sweep at a fixed, well-resolved mesh; the fitted
rate should be 2 (Crank-Nicolson).

Example:
    python scripts/run_dt_convergence.py --preset l1 --out dt_l1.csv
"""

import argparse
import sys

from hdgz.convergence import convergence_study, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="l1")
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--dts", default="0.025,0.0125,0.00625,0.003125")
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--csv", default="dt_convergence.csv")
    args = ap.parse_args()

    dts = tuple(float(s) for s in args.dts.split(","))
    study = convergence_study("dt", args.preset, k=args.k, meshes=(args.n,),
                              dts=dts, T=args.T)
    for r in study.rows:
        print(f"dt={r.dt:g}: e(sigma,psi)={r.err_sigma_psi:.6e} "
              f"e(u,p)={r.err_u_p:.6e}")
    print(f"fitted rates: sigma/psi {study.fitted_rate_sigma_psi:.3f}, "
          f"u/p {study.fitted_rate_u_p:.3f}")
    write_csv(study.rows, args.csv)
    print(f"wrote {args.csv}")
    return 1 if study.failures else 0


if __name__ == "__main__":
    sys.exit(main())
