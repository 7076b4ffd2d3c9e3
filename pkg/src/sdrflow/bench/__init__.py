"""Micro-benchmarks of the runtime's scheduling overhead."""
from __future__ import annotations

from .harness import (
    C_TAG,
    CLASSES,
    BenchSpec,
    ComputeTask,
    Initializer,
    OverheadReport,
    build_bench,
    clock_read_ns,
    measure_floor,
    report_markdown,
    run_bench,
    sweep_overhead,
    write_reports_csv,
)

__all__ = [
    "C_TAG", "CLASSES", "BenchSpec", "ComputeTask", "Initializer", "OverheadReport",
    "build_bench", "clock_read_ns", "measure_floor", "report_markdown", "run_bench",
    "sweep_overhead", "write_reports_csv",
]
