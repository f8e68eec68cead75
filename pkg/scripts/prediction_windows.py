"""Freshen lead time per trigger type, and along a linear chain of 700 ms functions."""

import argparse

from freshen.predictor import TriggerModel, chain_from_linear, paths_from, predict_path_window, predict_window


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--length", type=int, default=8, help="functions in the linear chain")
    ap.add_argument("--runtime-ms", type=float, default=700.0)
    ap.add_argument("--trigger", default="step-functions")
    args = ap.parse_args()
    table = TriggerModel.measured()
    for trigger in sorted(table.median_delay_ms, key=table.delay):
        chain = chain_from_linear(["a", "b"], trigger)
        print(f"{trigger:<16} {predict_window(chain, chain.edges[0], table):8.0f} ms")
    names = [f"f{i}" for i in range(1, args.length + 1)]
    chain = chain_from_linear(names, args.trigger, runtime_ms=args.runtime_ms)
    print(f"\nlead from the start of {names[0]} ({args.trigger}, {args.runtime_ms:g} ms each):")
    for path in paths_from(chain, names[0], args.length - 1):
        lead = predict_path_window(chain, path, table, include_source_runtime=True)
        print(f"  {path[-1].target:<4} {lead:8.0f} ms")


if __name__ == "__main__":
    main()
