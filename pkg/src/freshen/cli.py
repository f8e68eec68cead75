"""Command line: ``freshen run | validate | report``.

Exit codes: 0 success, 1 scenario validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import ExperimentReport, run_scenario
from .runtime import FreshenMode
from .scenario import ScenarioError, load_scenario, validate_scenario

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _modes(text: str) -> list[FreshenMode]:
    try:
        return [FreshenMode.parse(m.strip()) for m in text.split(",") if m.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freshen", description="Freshen runtime simulator and experiment harness.")
    parser.add_argument("--log-level", default="WARNING", help="logging level for the structured log stream")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write a CSV report")
    p_run.add_argument("--scenario", required=True, type=Path)
    p_run.add_argument("--modes", type=_modes, default=None,
                       help="comma-separated subset of: " + ", ".join(m.value for m in FreshenMode))
    p_run.add_argument("--seed", type=int, default=None, help="overrides FRESHEN_SEED and the file's seed")
    p_run.add_argument("--out", type=Path, default=None, help="CSV path (default: print to stdout)")
    p_run.add_argument("--iterations", type=int, default=None)
    p_run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("--scenario", required=True, type=Path)

    p_rep = sub.add_parser("report", help="summarize a CSV report")
    p_rep.add_argument("csv", type=Path)
    p_rep.add_argument("--out", type=Path, default=None, help="write the summary here instead of stdout")
    return parser


def summarize(report: ExperimentReport) -> str:
    """Median latency and improvement over disabled, one line per row."""
    header = f"{'function':<18} {'mode':<14} {'size':>9} {'median_ms':>11} {'saving_ms':>11} {'improv_%':>9} {'n':>5}"
    lines = [f"scenario: {report.scenario}", header, "-" * len(header)]
    for r in report.rows:
        lines.append(f"{r['function']:<18} {r['mode']:<14} {r['object_size']:>9} {r['median_ms'] or '-':>11} "
                     f"{r['saving_ms'] or '-':>11} {r['improvement_pct'] or '-':>9} {r['samples']:>5}")
    return "\n".join(lines) + "\n"


def _print_diagnostics(diagnostics) -> None:
    for d in diagnostics:
        print(f"error: {d}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s %(message)s")

    if args.command == "validate":
        diagnostics = validate_scenario(args.scenario)
        if diagnostics:
            _print_diagnostics(diagnostics)
            return EXIT_INVALID
        print(f"{args.scenario}: ok")
        return EXIT_OK

    if args.command == "run":
        try:
            scenario = load_scenario(args.scenario)
        except ScenarioError as exc:
            _print_diagnostics(exc.diagnostics)
            return EXIT_INVALID
        try:
            report = run_scenario(scenario, args.modes, args.out, seed=args.seed,
                                  iterations=args.iterations, jobs=args.jobs)
        except Exception as exc:  # noqa: BLE001 - any failure aborts without a report
            print(f"error: run failed: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        if args.out is None:
            sys.stdout.write(report.to_csv())
        else:
            print(f"wrote {len(report.rows)} rows to {args.out}", file=sys.stderr)
        return EXIT_OK

    try:
        report = ExperimentReport.from_csv(args.csv.read_text())
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    text = summarize(report)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
