"""``bench`` command line entry point."""
from __future__ import annotations

import argparse
import sys

from .harness import (
    DEFAULT_TOTAL,
    DEFAULT_US,
    BenchSpec,
    measure_floor,
    report_markdown,
    run_bench,
    sweep_overhead,
    write_reports_csv,
)


def parse_args(argv=None) -> argparse.Namespace:
    p = argparse.ArgumentParser(prog="bench", description="Scheduling-overhead micro-benchmarks.")
    p.add_argument("--mb", type=int, choices=(1, 2, 3, 4), action="append",
                   help="benchmark to run (repeatable; default: all four)")
    p.add_argument("--task-us", type=float, default=DEFAULT_US, help="compute task duration (us)")
    p.add_argument("--total", type=int, default=DEFAULT_TOTAL, help="compute tasks per run")
    p.add_argument("--runs", type=int, default=5, help="runs per benchmark (median reported)")
    p.add_argument("--pin", type=int, default=None, help="CPU to pin the worker to")
    p.add_argument("--csv", default=None, help="write results to this CSV file")
    p.add_argument("--no-timing", action="store_true", help="disable per-task timing")
    p.add_argument("--sweep", type=float, nargs="+", metavar="US",
                   help="overhead sweep over these durations instead of a single run")
    p.add_argument("--floor", action="store_true", help="measure per-class floor costs")
    return p.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    mbs = args.mb or [1, 2, 3, 4]
    if args.floor:
        floor = measure_floor()
        for name, ns in floor.items():
            print(f"{name:8s} {ns:8.1f} ns")
        return 0
    if args.sweep:
        from ..affinity import pin_current_thread

        pin_current_thread(args.pin)
        for mb in mbs:
            curve = sweep_overhead(args.sweep, mb, args.total, args.runs, args.csv)
            for us, pct in curve:
                print(f"MB{mb} {us:8.2f} us  overhead {pct:8.2f} %")
        return 0
    reports = []
    for mb in mbs:
        spec = BenchSpec(mb, args.task_us, args.total)
        reports.append(run_bench(spec, args.runs, timing=not args.no_timing, pin=args.pin))
    theo = reports[0].theoretical_ms
    print(f"{args.total} compute tasks of {args.task_us} us; theoretical time {theo:.2f} ms\n")
    sys.stdout.write(report_markdown(reports))
    if args.csv:
        write_reports_csv(reports, args.csv)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
