"""Regenerate every figure preset into one output folder and print the reports.

Usage: python scripts/reproduce_figures.py [OUT] [--seed N]
"""

import argparse
import sys
import time

from emitterlab.cli import main
from emitterlab.presets import PRESETS


def run(out: str, seed: int) -> int:
    status = 0
    for name in sorted(PRESETS):
        t0 = time.perf_counter()
        code = main(["reproduce", name, "--out", f"{out}/{name}", "--seed", str(seed)])
        print(f"[{name}] exit {code} in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
        status = status or code
    return status


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", nargs="?", default="figures")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sys.exit(run(args.out, args.seed))
