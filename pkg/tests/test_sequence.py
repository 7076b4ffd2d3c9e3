from __future__ import annotations

import csv
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import Aborter, Counter, Identity, Node, Recorder, Sleeper, countdown
from sdrflow import (
    Cycle, DanglingInput, ForLoopControl, Sequence, Switcher, TaskFailure, Unreachable, bind,
    build_sequence, exec_stats, write_stats_csv,
)


def chain(n, head=None):
    src = head or Counter("t1")
    nodes = [Identity(f"t{i}") for i in range(2, n + 1)]
    prev = src.tasks["gen"]["out"]
    for m in nodes:
        bind(m["run::in"], prev)
        prev = m["run::out"]
    return src, nodes


def fig2b():
    """Two first tasks (t1, t3) and two last tasks (t5, t6) inside a larger graph."""
    before = Counter("t0")
    t1, t2, t3 = Identity("t1"), Identity("t2"), Identity("t3")
    t4 = Node("t4", 2, 1)
    t5, t6 = Identity("t5"), Identity("t6")
    after = Node("t7", 2, 0)
    bind(t1["run::in"], before["gen::out"])
    bind(t3["run::in"], before["gen::out"])
    bind(t2["run::in"], t1["run::out"])
    bind(t4["run::in0"], t2["run::out"])
    bind(t4["run::in1"], t3["run::out"])
    bind(t5["run::in"], t4["run::out0"])
    bind(t6["run::in"], t4["run::out0"])
    bind(after["run::in0"], t5["run::out"])
    bind(after["run::in1"], t6["run::out"])
    return [t1["run"], t3["run"]], [t5["run"], t6["run"]]


def fig3(n_iter=10):
    """while/for loop: t1 -> sel -> t2(ctrl) -> com -> {t3,t4,t5 -> sel | t6}."""
    t1 = Counter("t1")
    sw = Switcher(2, np.int64, 4, "sw")
    ctrl = ForLoopControl(n_iter, np.int64, 4, name="t2")
    t3, t4, t5, t6 = Identity("t3"), Identity("t4"), Identity("t5"), Recorder("t6")
    bind(sw["select::data1"], t1["gen::out"])
    bind(ctrl["iterate::in"], sw["select::data"])
    bind(sw["commute::data"], sw["select::data"])
    bind(sw["commute::ctrl"], ctrl["iterate::ctrl"])
    bind(t3["run::in"], sw["commute::data0"])
    bind(t4["run::in"], t3["run::out"])
    bind(t5["run::in"], t4["run::out"])
    bind(sw["select::data0"], t5["run::out"])
    bind(t6["store::in0"], sw["commute::data1"])
    return t1, sw, ctrl, t6


class TestBuild:
    def test_chain_is_one_plain_subsequence(self):
        src, _ = chain(4)
        seq = Sequence(src["gen"])
        assert seq.schedule == [["t1.gen", "t2.run", "t3.run", "t4.run"]]
        assert seq.subsequences[0].kind == "plain"

    def test_multiple_first_and_last_tasks(self):
        first, last = fig2b()
        seq = Sequence(first, last)
        assert [t.id for t in seq.tasks] == [f"t{i}.run" for i in range(1, 7)]

    def test_first_task_declaration_order_drives_restart(self):
        first, last = fig2b()
        seq = Sequence(first[::-1], last)
        assert [t.id for t in seq.tasks][:2] == ["t3.run", "t1.run"]

    def test_loop_decomposition(self):
        t1, *_ = fig3()
        seq = Sequence(t1["gen"])
        assert seq.schedule == [
            ["t1.gen"],
            ["sw.select", "t2.iterate", "sw.commute"],
            ["t3.run", "t4.run", "t5.run"],
            ["t6.store"],
        ]
        ss0, head, body, tail = seq.subsequences
        assert head.kind == "loop"
        assert ss0.successor_ids() == ["ss1"]
        assert head.successor_ids() == ["ss2", "ss3"]
        assert body.successor_ids() == ["ss1"]
        assert tail.successor_ids() == []

    def test_select_scheduled_on_highest_index_input(self):
        # a feeds data1 and b feeds data0: the select must follow a at once,
        # before b has been visited
        a, b = Counter("a"), Counter("b")
        sw = Switcher(2, np.int64, 4, "sw")
        sink = Recorder("sink")
        bind(sw["select::data1"], a["gen::out"])
        bind(sw["select::data0"], b["gen::out"])
        bind(sink["store::in0"], sw["select::data"])
        seq = Sequence([a["gen"], b["gen"]])
        assert [t.id for t in seq.tasks] == ["a.gen", "sw.select", "sink.store", "b.gen"]

    def test_select_not_ready_on_lower_index_input(self):
        a, b = Counter("a"), Counter("b")
        sw = Switcher(2, np.int64, 4, "sw")
        bind(sw["select::data0"], a["gen::out"])
        bind(sw["select::data1"], b["gen::out"])
        seq = Sequence([a["gen"], b["gen"]])
        assert [t.id for t in seq.tasks] == ["a.gen", "b.gen", "sw.select"]

    def test_deterministic_dumps(self):
        dumps = []
        for _ in range(2):
            t1, *_ = fig3()
            seq = Sequence(t1["gen"])
            dumps.append((seq.describe(), seq.to_dot()))
        assert dumps[0] == dumps[1]
        assert "cluster_ss1" in dumps[0][1] and 'label="path 1"' in dumps[0][1]

    def test_cycle(self):
        a, b = Node("a", 1, 1), Node("b", 1, 1)
        src = Counter("s")
        join = Node("j", 2, 1)
        bind(join["run::in0"], src["gen::out"])
        bind(join["run::in1"], b["run::out0"])
        bind(a["run::in0"], join["run::out0"])
        bind(b["run::in0"], a["run::out0"])
        with pytest.raises(Cycle):
            Sequence(src["gen"])

    def test_dangling_input(self):
        src = Counter("s")
        j = Node("j", 2, 1)
        bind(j["run::in0"], src["gen::out"])
        with pytest.raises(DanglingInput):
            Sequence(src["gen"])

    def test_unreachable_last(self):
        src, _ = chain(3)
        other = Counter("other")
        with pytest.raises(Unreachable):
            Sequence(src["gen"], [other["gen"]])

    def test_last_task_stops_traversal(self):
        src, nodes = chain(5)
        seq = Sequence(src["gen"], nodes[1]["run"])
        assert [t.id for t in seq.tasks] == ["t1.gen", "t2.run", "t3.run"]


class TestExec:
    def test_counts_after_five_passes(self):
        src, nodes = chain(3)
        seq = Sequence(src["gen"])
        st_ = seq.exec(countdown(5))
        assert st_.passes == 5
        assert [r.exec_count for r in exec_stats(seq)] == [5, 5, 5]

    def test_loop_counts_per_pass(self):
        t1, sw, ctrl, t6 = fig3(10)
        seq = Sequence(t1["gen"])
        seq.exec_n(3)
        counts = {r.task: r.exec_count for r in seq.task_stats()}
        assert counts["sw.select"] == 33 and counts["t2.iterate"] == 33
        assert counts["t3.run"] == counts["t5.run"] == 30
        assert counts["t1.gen"] == counts["t6.store"] == 3

    def test_loop_passes_frame_through(self):
        t1, sw, ctrl, t6 = fig3(3)
        Sequence(t1["gen"]).exec_n(4)
        assert [v[0][0] for v in t6.values] == [0, 1, 2, 3]
        assert t6.generations == [0, 1, 2, 3]

    def test_abort_on_odd_frames(self):
        src = Counter("t1")
        t2 = Identity("t2")
        t3 = Aborter("t3", lambda v: v % 2 == 1)
        t4 = Recorder("t4")
        bind(t2["run::in"], src["gen::out"])
        bind(t3["run::in"], t2["run::out"])
        bind(t4["store::in0"], t3["run::out"])
        seq = Sequence(src["gen"])
        st_ = seq.exec(countdown(6))
        assert st_.passes == 6 and st_.aborted == 5
        assert [v[0][0] for v in t4.values] == [0, 2, 4, 6, 8, 10]
        counts = {r.task: r.exec_count for r in exec_stats(seq)}
        assert counts["t1.gen"] == 11 == 2 * counts["t4.store"] - 1

    def test_abort_even_and_odd_balance(self):
        src = Counter("t1")
        t3 = Aborter("t3", lambda v: v % 2 == 1)
        t4 = Recorder("t4")
        bind(t3["run::in"], src["gen::out"])
        bind(t4["store::in0"], t3["run::out"])
        seq = Sequence(src["gen"])
        # drive a fixed number of frames through the source
        for _ in range(20):
            seq.run_pass()
        counts = {r.task: r.exec_count for r in exec_stats(seq)}
        assert counts["t1.gen"] == 20 and counts["t4.store"] == 10
        assert counts["t1.gen"] == 2 * counts["t4.store"]

    def test_abort_log_has_no_downstream_task(self):
        src = Counter("t1")
        t2 = Aborter("t2", lambda v: v % 3 == 0)
        t3 = Recorder("t3")
        bind(t2["run::in"], src["gen::out"])
        bind(t3["store::in0"], t2["run::out"])
        seq = Sequence(src["gen"], log_size=16)
        seq.exec(countdown(4))
        recs = list(seq.log)
        assert any(not r.completed for r in recs)
        for r in recs:
            if r.completed:
                assert r.tasks == ["t1.gen", "t2.run", "t3.store"]
            else:
                assert r.tasks == ["t1.gen", "t2.run"]

    def test_abort_resets_loop_state(self):
        # the loop body aborts mid-loop: the next pass starts a fresh loop
        hits = [0]

        def body(i, o):
            hits[0] += 1
            if hits[0] == 2:
                from sdrflow import Abort
                raise Abort
            o[0][:] = i[0]

        t1 = Counter("t1")
        sw = Switcher(2, np.int64, 4, "sw")
        ctrl = ForLoopControl(3, np.int64, 4, name="ctl")
        b = Node("b", 1, 1, fn=body)
        out = Recorder("out")
        bind(sw["select::data1"], t1["gen::out"])
        bind(ctrl["iterate::in"], sw["select::data"])
        bind(sw["commute::data"], sw["select::data"])
        bind(sw["commute::ctrl"], ctrl["iterate::ctrl"])
        bind(b["run::in0"], sw["commute::data0"])
        bind(sw["select::data0"], b["run::out0"])
        bind(out["store::in0"], sw["commute::data1"])
        seq = Sequence(t1["gen"])
        assert not seq.run_pass()
        assert sw.selected_path == 1 and ctrl.counter == 0
        assert seq.run_pass()
        assert [v[0][0] for v in out.values] == [1]

    def test_task_failure_surfaces(self):
        src = Counter("t1")

        def bad(i, o):
            raise ValueError("nope")

        n = Node("bad", 1, 1, fn=bad)
        bind(n["run::in0"], src["gen::out"])
        with pytest.raises(TaskFailure, match="bad.run"):
            Sequence(src["gen"]).exec(countdown(3))

    def test_stop_exception_propagates(self):
        src, _ = chain(2)

        def stop():
            raise KeyError("stop")

        with pytest.raises(KeyError):
            Sequence(src["gen"]).exec(stop)

    def test_timing_off_still_counts(self):
        src, _ = chain(3)
        seq = Sequence(src["gen"], timing=False)
        seq.exec_n(7)
        assert all(r.exec_count == 7 and r.total_ns == 0 for r in exec_stats(seq))

    def test_durations_sum_close_to_wall(self):
        src = Counter("t1")
        a, b = Sleeper("a", 0.002), Sleeper("b", 0.001)
        bind(a["run::in"], src["gen::out"])
        bind(b["run::in"], a["run::out"])
        seq = Sequence(src["gen"])
        st_ = seq.exec_n(20)
        total = sum(r.total_ns for r in exec_stats(seq))
        assert 0.9 * st_.wall_ns <= total <= st_.wall_ns

    def test_stats_csv(self, tmp_path):
        src, _ = chain(3)
        seq = Sequence(src["gen"])
        seq.exec_n(5)
        p = tmp_path / "stats.csv"
        write_stats_csv(seq.task_stats(), p)
        rows = list(csv.DictReader(open(p)))
        assert list(rows[0]) == ["task", "exec_count", "total_ms", "mean_us", "share_pct"]
        assert [int(r["exec_count"]) for r in rows] == [5, 5, 5]
        assert abs(sum(float(r["share_pct"]) for r in rows) - 100) < 0.01

    def test_build_sequence_alias(self):
        src, _ = chain(2)
        assert build_sequence(src["gen"]).schedule == [["t1.gen", "t2.run"]]


@given(st.sets(st.integers(0, 39), max_size=30), st.integers(1, 10))
def test_stop_called_once_per_completed_pass(abort_frames, n_stop):
    src = Counter("s")
    ab = Aborter("a", lambda v: v in abort_frames)
    bind(ab["run::in"], src["gen::out"])
    seq = Sequence(src["gen"])
    calls = [0]

    def stop():
        calls[0] += 1
        return calls[0] >= n_stop

    stats = seq.exec(stop)
    assert calls[0] == stats.passes == n_stop
    assert stats.aborted == src.k - stats.passes


@st.composite
def random_dags(draw):
    n = draw(st.integers(2, 12))
    preds = [[]]
    for i in range(1, n):
        k = draw(st.integers(1, min(3, i)))
        preds.append(draw(st.lists(st.integers(0, i - 1), min_size=k, max_size=k)))
    return preds


@given(random_dags())
def test_schedule_validity_on_random_dags(preds):
    mods = [Counter("n0")]
    for i in range(1, len(preds)):
        mods.append(Node(f"n{i}", len(preds[i]), 1))
    out = lambda m: m.tasks["gen"]["out"] if isinstance(m, Counter) else m.tasks["run"]["out0"]
    for i in range(1, len(preds)):
        for j, p in enumerate(preds[i]):
            bind(mods[i].tasks["run"][f"in{j}"], out(mods[p]))
    seq = Sequence(mods[0].tasks["gen"])
    pos = {id(t): k for k, t in enumerate(seq.tasks)}
    assert len(seq.tasks) == len(mods) == len(pos)
    for t in seq.tasks:
        for s in t.inputs:
            assert pos[id(s.source.task)] < pos[id(t)]
    again = Sequence(mods[0].tasks["gen"])
    assert again.describe() == seq.describe()
