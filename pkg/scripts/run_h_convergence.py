#!/usr/bin/env python3
"""Mesh-refinement convergence sweep for the manufactured solution.

Example:
    python scripts/run_h_convergence.py --preset l1 --k 2 --out out/h_l1_k2
"""

import argparse
import sys

from hdgz.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="l1")
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--meshes", default="4,8,16,32")
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--out", default="out/h_convergence")
    args = ap.parse_args()
    return cli_main(["convergence", "--kind", "h", "--preset", args.preset,
                     "--k", str(args.k), "--meshes", args.meshes,
                     "--T", str(args.T), "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
