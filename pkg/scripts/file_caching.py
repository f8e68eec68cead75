"""Prefetch savings for local, on-site and off-site readers across object sizes."""

import argparse
from pathlib import Path

from freshen.harness import run_scenario

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "file_caching.toml"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=None, help="also write the full CSV report here")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    rep = run_scenario(SCENARIO, output_path=args.out, seed=args.seed)
    print(f"{'reader':<14} {'size':>9} {'disabled_ms':>12} {'prefetch_ms':>12} {'saving_ms':>10}")
    for r in rep.rows:
        if r["mode"] != "prefetch-only" or not r["function"].startswith("read_"):
            continue
        base = rep.row(r["function"], "disabled", int(r["object_size"]))
        print(f"{r['function']:<14} {r['object_size']:>9} {base['median_ms']:>12} {r['median_ms']:>12} "
              f"{r['saving_ms']:>10}")


if __name__ == "__main__":
    main()
