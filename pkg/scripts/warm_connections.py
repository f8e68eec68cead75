"""Warm-only improvement over disabled for uploads to an edge and a cloud endpoint."""

import argparse
from pathlib import Path

from freshen.harness import run_scenario

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "warm_cloud_edge.toml"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    rep = run_scenario(SCENARIO, output_path=args.out, seed=args.seed)
    print(f"{'function':<14} {'size':>9} {'disabled_ms':>12} {'warm_ms':>10} {'improvement_%':>14}")
    for r in rep.rows:
        if r["mode"] != "warm-only" or not r["function"].startswith("upload_"):
            continue
        base = rep.row(r["function"], "disabled", int(r["object_size"]))
        print(f"{r['function']:<14} {r['object_size']:>9} {base['median_ms']:>12} {r['median_ms']:>10} "
              f"{r['improvement_pct']:>14}")


if __name__ == "__main__":
    main()
