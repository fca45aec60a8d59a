#!/usr/bin/env python3
"""Integrate random initial data with no forcing and report the discrete
energy decay and the per-step energy-identity residual.

Example:
    python scripts/run_energy_probe.py --n 4 --steps 500 --out out/probe
"""

import argparse
import sys

from hdgz.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="l1")
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/probe")
    args = ap.parse_args()
    return cli_main(["probe", "--preset", args.preset, "--n", str(args.n),
                     "--k", str(args.k), "--dt", str(args.dt),
                     "--steps", str(args.steps), "--seed", str(args.seed),
                     "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
