"""Micro-benchmarks measuring the runtime's own cost.

Each benchmark executes a fixed number of compute tasks (class ``C``) that
actively wait for a configurable duration, wrapped in one of four control
structures:

* MB1: three chained compute tasks;
* MB2: the same chain inside a 10-iteration for loop;
* MB3: the chain inside an inner 5-iteration loop nested in a 2-iteration loop;
* MB4: a 3-way switch with 3, 2 and 1 compute tasks on its paths, driven by a
  cyclic control (two compute tasks per pass on average).

Because the compute work is known exactly, whatever run time exceeds
``count * duration`` is overhead.  It is attributed per task class, and the
remainder (pass loop, stop condition) is reported as "other".
"""
from __future__ import annotations

import csv
import statistics
import timeit
from dataclasses import dataclass, field
from time import perf_counter_ns

import numpy as np

from ..errors import SpecInconsistent
from ..graph import Cloneability, Module, bind
from ..sequence import Sequence
from ..switcher import CTRL_DTYPE, CyclicControl, ForLoopControl, Switcher

C_TAG = "C"
CLASSES = (C_TAG, "select", "commute", "iterate")
DEFAULT_TOTAL = 1_125_000
DEFAULT_US = 4.0


class Initializer(Module):
    """Provides the external frame entering a benchmark sequence."""

    def __init__(self, count: int = 1, name: str = "init"):
        super().__init__(name)
        t = self.create_task("initialize", self._init)
        t.create_output("out", np.uint8, count)

    def _init(self, out):
        out[:] = 0


class ComputeTask(Module):
    """Task that busy-waits ``duration_us`` by polling the monotonic clock."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, duration_us: float, count: int = 1, name: str | None = None):
        super().__init__(name or "compute")
        self.duration_ns = int(round(duration_us * 1000))
        t = self.create_task("compute", self._wait)
        t.create_input("in", np.uint8, count)
        t.create_output("out", np.uint8, count)
        t.tag = C_TAG

    @property
    def task(self):
        return self.tasks["compute"]

    def _wait(self, i, o):
        ns = self.duration_ns
        if ns <= 0:
            return
        now = perf_counter_ns
        end = now() + ns
        while now() < end:
            pass


@dataclass
class BenchSpec:
    benchmark: int
    task_duration_us: float = DEFAULT_US
    total_compute_tasks: int = DEFAULT_TOTAL
    frame_bytes: int = 1

    # compute tasks executed per sequence pass
    @property
    def per_pass(self) -> int:
        return {1: 3, 2: 30, 3: 30, 4: 2}[self.benchmark]

    @property
    def passes(self) -> int:
        self.validate()
        return self.total_compute_tasks // self.per_pass

    def validate(self) -> None:
        if self.benchmark not in (1, 2, 3, 4):
            raise SpecInconsistent(f"unknown benchmark MB{self.benchmark}")
        if self.task_duration_us < 0:
            raise SpecInconsistent("task duration must be >= 0")
        per = self.per_pass
        if self.total_compute_tasks <= 0 or self.total_compute_tasks % per:
            raise SpecInconsistent(f"MB{self.benchmark} runs {per} compute tasks per pass; "
                                   f"{self.total_compute_tasks} is not a multiple")
        # the switch averages 2 tasks per pass only over whole 3-pass cycles
        if self.benchmark == 4 and (self.total_compute_tasks // per) % 3:
            raise SpecInconsistent("MB4 needs a pass count divisible by 3")


@dataclass
class BenchGraph:
    spec: BenchSpec
    sequence: Sequence
    init: Initializer
    modules: list = field(default_factory=list)


def _chain(n: int, us: float, count: int, prefix: str) -> list[ComputeTask]:
    cs = [ComputeTask(us, count, f"{prefix}{i + 1}") for i in range(n)]
    for a, b in zip(cs, cs[1:]):
        bind(b["compute::in"], a["compute::out"])
    return cs


def build_bench(spec: BenchSpec, *, timing: bool = True) -> BenchGraph:
    spec.validate()
    us, n = spec.task_duration_us, spec.frame_bytes
    init = Initializer(n)
    src = init["initialize::out"]
    mods: list = []
    if spec.benchmark == 1:
        cs = _chain(3, us, n, "c")
        bind(cs[0]["compute::in"], src)
        first = [cs[0].task]
        mods += cs
    elif spec.benchmark == 2:
        sw = Switcher(2, np.uint8, n, "loop")
        it = ForLoopControl(10, np.uint8, n, name="iter")
        cs = _chain(3, us, n, "c")
        bind(sw["select::data1"], src)
        bind(it["iterate::in"], sw["select::data"])
        bind(sw["commute::data"], sw["select::data"])
        bind(sw["commute::ctrl"], it["iterate::ctrl"])
        bind(cs[0]["compute::in"], sw["commute::data0"])
        bind(sw["select::data0"], cs[-1]["compute::out"])
        first = [sw.select]
        mods += [sw, it, *cs]
    elif spec.benchmark == 3:
        so = Switcher(2, np.uint8, n, "outer")
        io = ForLoopControl(2, np.uint8, n, name="iter_outer")
        si = Switcher(2, np.uint8, n, "inner")
        ii = ForLoopControl(5, np.uint8, n, name="iter_inner")
        cs = _chain(3, us, n, "c")
        bind(so["select::data1"], src)
        bind(io["iterate::in"], so["select::data"])
        bind(so["commute::data"], so["select::data"])
        bind(so["commute::ctrl"], io["iterate::ctrl"])
        bind(si["select::data1"], so["commute::data0"])
        bind(ii["iterate::in"], si["select::data"])
        bind(si["commute::data"], si["select::data"])
        bind(si["commute::ctrl"], ii["iterate::ctrl"])
        bind(cs[0]["compute::in"], si["commute::data0"])
        bind(si["select::data0"], cs[-1]["compute::out"])
        bind(so["select::data0"], si["commute::data1"])
        first = [so.select]
        mods += [so, io, si, ii, *cs]
    else:
        it = CyclicControl(3, name="iter")
        sw = Switcher(3, np.uint8, n, "switch")
        bind(sw["commute::data"], src)
        bind(sw["commute::ctrl"], it["iterate::ctrl"])
        for p, length in enumerate((3, 2, 1)):
            cs = _chain(length, us, n, f"p{p}c")
            bind(cs[0]["compute::in"], sw[f"commute::data{p}"])
            bind(sw[f"select::data{p}"], cs[-1]["compute::out"])
            mods += cs
        first = [it.task]
        mods += [it, sw]
    init.tasks["initialize"].execute()
    seq = Sequence(first, timing=timing)
    return BenchGraph(spec, seq, init, mods)


@dataclass
class ClassRow:
    name: str
    exec_count: int = 0
    total_ms: float = 0.0
    overhead_ms: float = 0.0


@dataclass
class OverheadReport:
    benchmark: int
    task_duration_us: float
    passes: int
    run_time_ms: float
    theoretical_ms: float
    classes: dict[str, ClassRow]
    runs_ms: list[float] = field(default_factory=list)

    @property
    def other_ms(self) -> float:
        """Residual time not spent inside any task."""
        return self.run_time_ms - sum(r.total_ms for r in self.classes.values())

    @property
    def overhead_pct(self) -> float:
        if self.theoretical_ms <= 0:
            return float("nan")
        return 100.0 * (self.run_time_ms - self.theoretical_ms) / self.theoretical_ms

    def count(self, cls: str) -> int:
        row = self.classes.get(cls)
        return row.exec_count if row else 0


def _collect(seq: Sequence, us: float) -> dict[str, ClassRow]:
    rows: dict[str, ClassRow] = {}
    for t in seq.tasks:
        row = rows.setdefault(t.tag, ClassRow(t.tag))
        row.exec_count += t.n_exec
        row.total_ms += t.duration_ns / 1e6
    for row in rows.values():
        work = row.exec_count * us / 1e3 if row.name == C_TAG else 0.0
        row.overhead_ms = row.total_ms - work
    return rows


def run_bench(spec: BenchSpec, runs: int = 1, *, timing: bool = True, warmup: int = 200,
              pin: int | None = None) -> OverheadReport:
    """Execute the benchmark ``runs`` times; report the median run."""
    from ..affinity import pin_current_thread

    pin_current_thread(pin)
    g = build_bench(spec, timing=timing)
    seq = g.sequence
    passes = spec.passes
    if warmup:
        seq.exec_n(min(warmup, passes))
    samples = []
    for _ in range(max(1, runs)):
        seq.reset_stats()
        t0 = perf_counter_ns()
        seq.exec_n(passes)
        wall = perf_counter_ns() - t0
        samples.append((wall / 1e6, _collect(seq, spec.task_duration_us)))
    ordered = sorted(samples, key=lambda s: s[0])
    run_ms, classes = ordered[len(ordered) // 2]
    theo = spec.total_compute_tasks * spec.task_duration_us / 1e3
    return OverheadReport(spec.benchmark, spec.task_duration_us, passes, run_ms, theo, classes,
                          [s[0] for s in samples])


def sweep_overhead(durations, benchmark: int = 1, total: int = 30_000, runs: int = 5,
                   csv_path=None) -> list[tuple[float, float]]:
    """Median overhead percentage for each compute-task duration."""
    curve = []
    for us in durations:
        spec = BenchSpec(benchmark, float(us), total)
        rep = run_bench(spec, runs)
        pct = statistics.median(
            100.0 * (r - rep.theoretical_ms) / rep.theoretical_ms if rep.theoretical_ms else float("nan")
            for r in rep.runs_ms)
        curve.append((float(us), pct))
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["benchmark", "task_us", "overhead_pct"])
            for us, pct in curve:
                w.writerow([f"MB{benchmark}", us, f"{pct:.4f}"])
    return curve


# -- floor measurements --------------------------------------------------------

def _per_call_ns(fn, n: int, batch: int) -> float:
    batches = max(1, n // batch)
    times = timeit.repeat(fn, number=batch, repeat=batches, timer=timeit.default_timer)
    return statistics.median(times) / batch * 1e9


def clock_read_ns(n: int = 1_000_000, batch: int = 10_000) -> float:
    return _per_call_ns(perf_counter_ns, n, batch)


def floor_graphs(elem_count: int = 1):
    """Stand-alone tasks of every class, bound and ready to be invoked."""
    init = Initializer(elem_count)
    init.tasks["initialize"].execute()
    c = ComputeTask(0.0, elem_count, "c0")
    bind(c["compute::in"], init["initialize::out"])
    sw = Switcher(2, np.uint8, elem_count, "sw")
    ctrl_src = Module("ctrl")
    ct = ctrl_src.create_task("zero", lambda o: None)
    ct.create_output("out", CTRL_DTYPE, 1)
    bind(sw["commute::data"], init["initialize::out"])
    bind(sw["commute::ctrl"], ct.outputs[0])
    bind(sw["select::data0"], sw["commute::data0"])
    bind(sw["select::data1"], init["initialize::out"])
    it = ForLoopControl(10, np.uint8, elem_count, name="it")
    bind(it["iterate::in"], init["initialize::out"])
    return {C_TAG: c.task, "select": sw.select, "commute": sw.commute, "iterate": it.task}


def measure_floor(n: int = 1_000_000, batch: int = 10_000, elem_count: int = 1) -> dict[str, float]:
    """Median per-invocation cost (ns) of each task class with no useful work.

    The compute wrapper runs with a zero duration, so it measures the task
    wrapper alone.  The cost of one clock read is reported as ``clock``.
    """
    tasks = floor_graphs(elem_count)
    tasks["commute"]._run()  # populate the select's loop-back input
    out = {name: _per_call_ns(t._run, n, batch) for name, t in tasks.items()}
    out["clock"] = clock_read_ns(n, batch)
    return out


# -- reporting -------------------------------------------------------------------

def report_markdown(reports: list[OverheadReport]) -> str:
    head = ("| Label | Seq. exec. | Run time (ms) | C exec | C ovh (ms) | sel exec | sel (ms) "
            "| com exec | com (ms) | iter exec | iter (ms) | Other (ms) | Overhead (%) |")
    lines = [head, "|" + "---|" * 13]
    for r in reports:
        cells = [f"MB{r.benchmark}", str(r.passes), f"{r.run_time_ms:.2f}"]
        for cls in CLASSES:
            row = r.classes.get(cls)
            if row is None or row.exec_count == 0:
                cells += ["--", "--"]
            else:
                cells += [str(row.exec_count), f"{row.overhead_ms:.2f}"]
        cells += [f"{r.other_ms:.2f}", f"{r.overhead_pct:.2f}"]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_reports_csv(reports: list[OverheadReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["benchmark", "task_us", "passes", "run_time_ms", "theoretical_ms", "class",
                    "exec_count", "total_ms", "overhead_ms", "other_ms", "overhead_pct"])
        for r in reports:
            for cls in CLASSES:
                row = r.classes.get(cls)
                if row is None:
                    continue
                w.writerow([f"MB{r.benchmark}", r.task_duration_us, r.passes,
                            f"{r.run_time_ms:.4f}", f"{r.theoretical_ms:.4f}", cls, row.exec_count,
                            f"{row.total_ms:.4f}", f"{row.overhead_ms:.4f}", f"{r.other_ms:.4f}",
                            f"{r.overhead_pct:.4f}"])
