"""Time the windowed correlator against tag count, and the brute-force oracle on small inputs.

Usage: python scripts/bench_correlator.py [--max-tags N] [--range PS] [--bin PS]
"""

import argparse
import time

import numpy as np

from emitterlab.correlator import correlate, correlate_brute_force


def _streams(n: int, rate_hz: float, rng):
    span = int(n / 2 / rate_hz * 1e12)
    return (np.sort(rng.integers(0, span, n // 2)), np.sort(rng.integers(0, span, n - n // 2)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-tags", type=float, default=1e7)
    ap.add_argument("--range", type=int, default=500_000, help="half-width of the delay range in ps")
    ap.add_argument("--bin", type=int, default=1000, help="bin width in ps")
    ap.add_argument("--rate", type=float, default=5e6, help="per-channel count rate in Hz")
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print("tags        pairs      seconds   Mtags/s")
    n = 10_000
    while n <= args.max_tags:
        a, b = _streams(n, args.rate, rng)
        t0 = time.perf_counter()
        h = correlate(a, b, args.bin, args.range)
        dt = time.perf_counter() - t0
        print(f"{n:>10d} {int(h.raw.sum()):>10d} {dt:>10.3f} {n / dt / 1e6:>8.2f}")
        n *= 10

    print("\noracle check (2000 tags)")
    a, b = _streams(2000, args.rate, rng)
    t0 = time.perf_counter()
    slow = correlate_brute_force(a, b, args.bin, args.range)
    dt = time.perf_counter() - t0
    same = np.array_equal(slow.raw, correlate(a, b, args.bin, args.range).raw)
    print(f"brute force {dt:.3f} s, bin-exact match: {same}")


if __name__ == "__main__":
    main()
