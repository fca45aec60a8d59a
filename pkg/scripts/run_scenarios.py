#!/usr/bin/env python3
"""Run the two wave-propagation benchmarks and dump lattice snapshots
(legacy VTK) plus the energy time series (CSV).

Examples:
    python scripts/run_scenarios.py --name thermoelastic --out out/thermo
    python scripts/run_scenarios.py --name poroelastic --split --out out/poro
"""

import argparse
import sys

from hdgz.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--name", choices=("thermoelastic", "poroelastic"),
                    default="thermoelastic")
    ap.add_argument("--h", type=float, default=115.5)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--split", action="store_true",
                    help="poroelastic only: viscoelastic left half-space")
    ap.add_argument("--out", default="out/scenario")
    args = ap.parse_args()

    argv = ["scenario", "--name", args.name, "--h", str(args.h),
            "--k", str(args.k), "--dt", str(args.dt), "--out", args.out]
    if args.split:
        argv.append("--split")
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
