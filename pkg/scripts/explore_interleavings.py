"""Randomized freshen / invocation interleavings; reports violations per fr_state size."""

import argparse
import sys
import time

from freshen.interleave import run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--schedules", type=int, default=1000, help="schedules per size")
    ap.add_argument("--sizes", default="1-8", help="range such as 1-8, or a comma list")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if "-" in args.sizes:
        lo, hi = map(int, args.sizes.split("-"))
        sizes = range(lo, hi + 1)
    else:
        sizes = [int(s) for s in args.sizes.split(",")]
    bad = 0
    t0 = time.perf_counter()
    print(f"{'size':>4} {'schedules':>9} {'double':>7} {'deadlock':>8} {'mismatch':>8}  branches")
    for size in sizes:
        s = run_suite(size, args.schedules, args.seed)
        branches = " ".join(f"{k}={v}" for k, v in sorted(s.branches.items()))
        print(f"{size:>4} {s.schedules:>9} {s.double_issues:>7} {s.deadlocks:>8} {s.value_mismatches:>8}  {branches}")
        for f in s.failures:
            print(f"     failing case: {f.case}", file=sys.stderr)
        bad += not s.ok
    print(f"elapsed {time.perf_counter() - t0:.1f}s")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
