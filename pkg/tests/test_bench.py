from __future__ import annotations

import csv
import shutil
import subprocess

import pytest

from sdrflow import SpecInconsistent
from sdrflow.bench import (
    BenchSpec, ComputeTask, build_bench, measure_floor, report_markdown, run_bench,
    sweep_overhead, write_reports_csv,
)
from sdrflow.bench.cli import main as bench_main

# exact counts at 1/100 of the default workload (1,125,000 compute tasks)
CI_COUNTS = {
    1: {"C": 11_250, "select": 0, "commute": 0, "iterate": 0},
    2: {"C": 11_250, "select": 4_125, "commute": 4_125, "iterate": 4_125},
    3: {"C": 11_250, "select": 5_625, "commute": 5_625, "iterate": 5_625},
    4: {"C": 11_250, "select": 5_625, "commute": 5_625, "iterate": 5_625},
}


def test_default_pass_counts():
    assert [BenchSpec(mb).passes for mb in (1, 2, 3, 4)] == [375_000, 37_500, 37_500, 562_500]
    assert BenchSpec(1).task_duration_us == 4.0


@pytest.mark.parametrize("mb", [1, 2, 3, 4])
def test_ci_scale_counts_exact(mb):
    rep = run_bench(BenchSpec(mb, 0.0, 11_250), warmup=0)
    assert {c: rep.count(c) for c in CI_COUNTS[mb]} == CI_COUNTS[mb]
    assert rep.passes == BenchSpec(mb).passes // 100


def test_counts_unaffected_by_warmup_and_runs():
    rep = run_bench(BenchSpec(2, 0.0, 3_000), runs=3, warmup=50)
    assert rep.count("C") == 3_000 and rep.count("select") == 1_100
    assert len(rep.runs_ms) == 3


def test_three_passes_of_zero_duration():
    rep = run_bench(BenchSpec(1, 0.0, 9), warmup=0)
    assert rep.passes == 3 and rep.count("C") == 9
    assert rep.theoretical_ms == 0
    assert rep.run_time_ms > 0


@pytest.mark.parametrize("spec", [
    BenchSpec(1, 4.0, 10),      # not a multiple of 3
    BenchSpec(2, 4.0, 45),      # not a multiple of 30
    BenchSpec(4, 4.0, 4),       # 2 passes: not whole switch cycles
    BenchSpec(5, 4.0, 30),
    BenchSpec(1, -1.0, 30),
    BenchSpec(1, 4.0, 0),
])
def test_inconsistent_specs(spec):
    with pytest.raises(SpecInconsistent):
        spec.validate()
    with pytest.raises(SpecInconsistent):
        run_bench(spec)


def test_time_decomposition():
    rep = run_bench(BenchSpec(4, 2.0, 3_000), warmup=0)
    overheads = sum(r.overhead_ms for r in rep.classes.values())
    assert rep.theoretical_ms + overheads + rep.other_ms == pytest.approx(rep.run_time_ms, rel=1e-9)
    assert rep.other_ms >= 0
    assert rep.classes["C"].overhead_ms >= 0


def test_compute_task_waits_at_least_its_duration():
    rep = run_bench(BenchSpec(1, 50.0, 300), warmup=0)
    c = rep.classes["C"]
    assert c.total_ms / c.exec_count * 1e3 >= 50.0
    assert rep.run_time_ms >= rep.theoretical_ms


def test_compute_task_is_tagged_and_cloneable():
    c = ComputeTask(1.0, name="c")
    assert c.task.tag == "C"
    assert c.clone().duration_ns == 1000


def test_structures():
    kinds = {mb: [ss.kind for ss in build_bench(BenchSpec(mb, 0.0, 3_000)).sequence.subsequences]
             for mb in (1, 2, 3, 4)}
    assert kinds[1] == ["plain"]
    assert kinds[2].count("loop") == 1
    assert kinds[3].count("loop") == 2
    assert kinds[4][0] == "switch" and len(kinds[4]) == 5


def test_report_outputs(tmp_path):
    reps = [run_bench(BenchSpec(mb, 0.0, 300), warmup=0) for mb in (1, 2)]
    md = report_markdown(reps)
    assert md.splitlines()[0].startswith("| Label | Seq. exec.")
    assert "| MB1 | 100 |" in md and "| MB2 | 10 |" in md
    p = tmp_path / "bench.csv"
    write_reports_csv(reps, p)
    rows = list(csv.DictReader(open(p)))
    assert {r["benchmark"] for r in rows} == {"MB1", "MB2"}
    assert int(next(r for r in rows if r["benchmark"] == "MB2" and r["class"] == "select")["exec_count"]) == 110


def test_sweep_csv(tmp_path):
    p = tmp_path / "sweep.csv"
    curve = sweep_overhead([0.5, 8.0], 1, total=600, runs=1, csv_path=p)
    assert [us for us, _ in curve] == [0.5, 8.0]
    assert p.read_text().splitlines()[0] == "benchmark,task_us,overhead_pct"


def test_floor_shape():
    floor = measure_floor(n=20_000, batch=1_000)
    assert set(floor) == {"C", "select", "commute", "iterate", "clock"}
    assert all(v > 0 for v in floor.values())


def test_cli(capsys, tmp_path):
    assert bench_main(["--mb", "1", "--mb", "4", "--total", "300", "--runs", "1",
                       "--task-us", "0", "--csv", str(tmp_path / "b.csv")]) == 0
    out = capsys.readouterr().out
    assert "| MB1 |" in out and "| MB4 |" in out
    assert (tmp_path / "b.csv").exists()


def test_console_script_installed():
    exe = shutil.which("bench")
    assert exe is not None
    res = subprocess.run([exe, "--help"], capture_output=True, text=True, timeout=60)
    assert res.returncode == 0 and "--task-us" in res.stdout
