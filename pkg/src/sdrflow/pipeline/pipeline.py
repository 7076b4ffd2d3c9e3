"""Pipelines: stage sequences on dedicated workers, stitched by adaptors.

Building a pipeline from a plan

1. assigns every task to exactly one stage (forward traversal from each
   stage's first tasks, stopping at its last tasks and at other stages'
   first tasks);
2. inserts one adaptor per stage boundary and re-binds every socket that
   crosses a boundary through it; sockets skipping stages are relayed
   through each intermediate adaptor;
3. builds one sequence per stage (pull task first, push task last) and
   duplicates it when the stage has several workers.

Execution runs every stage replica on its own thread.  The final stage
evaluates the stop condition; once it returns True the first stage stops
producing, the rings drain, and every worker ends when its input lane is
closed and empty.
"""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from time import perf_counter_ns
from typing import Callable

from ..affinity import pin_current_thread, validate_pinning
from ..errors import BadPartition, PlanError, Shutdown
from ..graph import Task, TaskKind, bind, collect_tasks
from ..replication import CloneSpec, check_cloneable, duplicate_sequence
from ..sequence import Sequence, TaskStats
from .adaptor import Adaptor, EndOfStream, Flag, PullEndpoint, PushEndpoint
from .plan import PipelinePlan


@dataclass
class StageStats:
    index: int
    workers: int
    wall_ns: int = 0
    push_wait_ns: int = 0
    pull_wait_ns: int = 0
    push_copy_ns: int = 0
    pull_copy_ns: int = 0
    passes: int = 0
    aborted: int = 0

    @property
    def task_ns(self) -> int:
        other = self.push_wait_ns + self.pull_wait_ns + self.push_copy_ns + self.pull_copy_ns
        return max(0, self.wall_ns - other)

    def shares(self) -> dict[str, float]:
        """Percentage of the stage's worker time spent in each activity."""
        total = self.wall_ns or 1
        return {
            "push_wait": 100.0 * self.push_wait_ns / total,
            "pull_wait": 100.0 * self.pull_wait_ns / total,
            "push_copy": 100.0 * self.push_copy_ns / total,
            "pull_copy": 100.0 * self.pull_copy_ns / total,
            "task_time": 100.0 * self.task_ns / total,
        }


@dataclass
class PipelineStats:
    frames: int
    wall_ns: int
    stages: list[StageStats] = field(default_factory=list)
    bits_per_frame: int | None = None

    @property
    def frames_per_s(self) -> float:
        return self.frames / (self.wall_ns / 1e9) if self.wall_ns else 0.0

    @property
    def mbps(self) -> float | None:
        if self.bits_per_frame is None:
            return None
        return self.frames_per_s * self.bits_per_frame / 1e6

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "workers", "push_wait_pct", "pull_wait_pct", "push_copy_pct",
                        "pull_copy_pct", "task_pct", "passes", "frames_per_s", "mbps"])
            mbps = self.mbps
            for st in self.stages:
                sh = st.shares()
                w.writerow([st.index, st.workers, f"{sh['push_wait']:.3f}", f"{sh['pull_wait']:.3f}",
                            f"{sh['push_copy']:.3f}", f"{sh['pull_copy']:.3f}",
                            f"{sh['task_time']:.3f}", st.passes, f"{self.frames_per_s:.3f}",
                            "" if mbps is None else f"{mbps:.6f}"])


@dataclass
class _Runner:
    seq: Sequence
    push: PushEndpoint | None
    pull: PullEndpoint | None
    cpu: int | None
    wall_ns: int = 0


class Stage:
    def __init__(self, index: int, tasks: list[Task], workers: int):
        self.index = index
        self.tasks = tasks
        self.workers = workers
        self.template: Sequence | None = None
        self.runners: list[_Runner] = []
        self.provenance: list[dict[int, Task]] = []

    def task_stats(self) -> list[TaskStats]:
        rows = {t.id: TaskStats(t.id, t.tag, 0, 0) for t in self.template.tasks}
        for run, prov in zip(self.runners, self.provenance or [None] * len(self.runners)):
            for t in run.seq.tasks:
                orig = prov[id(t)] if prov is not None else t
                row = rows[orig.id]
                row.exec_count += t.n_exec
                row.total_ns += t.duration_ns
        return list(rows.values())


def _stage_region(first: list[Task], last: list[Task], barrier: set[int]) -> list[Task]:
    last_ids = {id(t) for t in last}
    seen: dict[int, Task] = {}
    stack = list(first)[::-1]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen[id(t)] = t
        if id(t) in last_ids:
            continue
        nxt = [k.task for s in t.outputs for k in s.sinks if id(k.task) not in barrier]
        stack.extend(reversed(nxt))
    return list(seen.values())


class Pipeline:
    def __init__(self, plan: PipelinePlan):
        self.plan = plan
        self.flag = Flag()
        self._stopping = False
        self._errors: list[BaseException] = []
        self._lock = threading.Lock()
        specs = plan.stages
        for i, st in enumerate(specs):
            validate_pinning(st.pinning, st.workers)
        if specs[0].workers != 1:
            raise PlanError("the first stage must have a single worker")
        for a, b in zip(specs, specs[1:]):
            if a.workers > 1 and b.workers > 1 and a.workers != b.workers:
                raise PlanError(f"adjacent replicated stages need equal worker counts "
                                f"({a.workers} vs {b.workers})")
        members = self._partition()
        self.stages = [Stage(i, m, specs[i].workers) for i, m in enumerate(members)]
        for stage in self.stages:
            if stage.workers > 1:
                check_cloneable(stage.tasks)
        self.adaptors: list[Adaptor] = []
        self._stitch(members)
        self._build_stages()

    # -- construction --------------------------------------------------------
    def _partition(self) -> list[list[Task]]:
        specs = self.plan.stages
        stage_of: dict[int, int] = {}
        members: list[list[Task]] = []
        for i, st in enumerate(specs):
            barrier = {id(t) for j, s in enumerate(specs) if j != i for t in s.first_tasks}
            region = _stage_region(st.first_tasks, st.last_tasks, barrier)
            for t in region:
                if id(t) in stage_of:
                    raise BadPartition(f"task {t.id} is assigned to stages "
                                       f"{stage_of[id(t)]} and {i}")
                stage_of[id(t)] = i
            members.append(region)
        if stage_of.get(id(self.plan.entry_task)) != 0:
            raise PlanError(f"entry task {self.plan.entry_task.id} is not in the first stage")
        roots = [t for m in members for t in m]
        missing = [t for t in collect_tasks(roots) if id(t) not in stage_of]
        if missing:
            raise BadPartition("tasks not assigned to any stage: "
                               + ", ".join(t.id for t in missing))
        self._stage_of = stage_of
        return members

    def _stitch(self, members: list[list[Task]]) -> None:
        stage_of = self._stage_of
        edges = []  # (consumer socket, source socket, src stage, dst stage)
        for j, tasks in enumerate(members):
            for t in tasks:
                for s in t.inputs:
                    src = s.source
                    if src is None:
                        continue
                    i = stage_of[id(src.task)]
                    if i > j:
                        raise BadPartition(f"{s.id} (stage {j}) is fed by {src.id} from later "
                                           f"stage {i}; feedback across stages is not supported")
                    if i < j:
                        edges.append((s, src, i, j))
        n = len(members)
        specs = self.plan.stages
        pull_out: list[dict[int, object]] = []
        for b in range(n - 1):
            channels = []
            seen = set()
            for _, src, i, j in edges:
                if i <= b < j and id(src) not in seen:
                    seen.add(id(src))
                    channels.append(src)
            ad = Adaptor(b, channels, specs[b].workers, specs[b + 1].workers,
                         self.plan.buffer_capacity, self.plan.wait_mode, self.plan.copy_mode,
                         self.flag)
            for c, src in enumerate(channels):
                feed = src if stage_of[id(src.task)] == b else pull_out[b - 1][id(src)]
                bind(ad.push.task.inputs[c], feed)
            pull_out.append({id(src): ad.pull.task.outputs[c] for c, src in enumerate(channels)})
            self.adaptors.append(ad)
        for s, src, i, j in edges:
            s.unbind()
            bind(s, pull_out[j - 1][id(src)])

    def _build_stages(self) -> None:
        n = len(self.stages)
        specs = self.plan.stages
        for k, stage in enumerate(self.stages):
            pull = self.adaptors[k - 1].pull if k > 0 else None
            push = self.adaptors[k].push if k < n - 1 else None
            first = ([pull.task] if pull else []) + list(specs[k].first_tasks)
            last = [push.task] if push else []
            allowed = {id(t) for t in stage.tasks}
            allowed.update(id(e.task) for e in (pull, push) if e is not None)
            seq = Sequence(first, last, _allowed=allowed)
            stage.template = seq
            if push is not None:
                push.swap_ok = self._swap_flags(seq, push)
            pins = specs[k].pinning
            if stage.workers == 1 and pins is None:
                stage.runners = [_Runner(seq, push, pull, None)]
                self._assign_lanes(k, 0, push, pull)
                continue
            rs = duplicate_sequence(seq, CloneSpec(stage.workers, pins))
            stage.provenance = rs.provenance
            for r, rep in enumerate(rs.replicas):
                rpush = rpull = None
                for t in rep.tasks:
                    if t.kind is TaskKind.PUSH:
                        rpush = t.module
                    elif t.kind is TaskKind.PULL:
                        rpull = t.module
                self._assign_lanes(k, r, rpush, rpull)
                stage.runners.append(_Runner(rep, rpush, rpull, pins[r] if pins else None))

    def _assign_lanes(self, k: int, r: int, push, pull) -> None:
        workers = self.stages[k].workers
        if push is not None:
            push.lane = r if workers > 1 else (None if push.adaptor.n_lanes > 1 else 0)
        if pull is not None:
            pull.lane = r if workers > 1 else (None if pull.adaptor.n_lanes > 1 else 0)
            pull.pair = push

    @staticmethod
    def _swap_flags(seq: Sequence, push: PushEndpoint) -> tuple[bool, ...]:
        """A producer buffer may be swapped out only if no reader in the stage runs after the push."""
        pos = {id(t): i for i, t in enumerate(seq.tasks)}
        me = pos[id(push.task)]
        flags = []
        for sock in push.task.inputs:
            src = sock.source
            ok = all(pos.get(id(k.task), -1) < me for k in src.sinks if k is not sock)
            flags.append(ok)
        return tuple(flags)

    # -- introspection -------------------------------------------------------
    def inserted_tasks(self) -> dict[str, int]:
        """Count of adaptor tasks per role, e.g. ``{"push 1->4": 1, "pull 1->4": 4}``."""
        out: dict[str, int] = {}
        for ad in self.adaptors:
            for role, stage in (("push", ad.index), ("pull", ad.index + 1)):
                key = f"{role} {ad.n_push}->{ad.n_pull}"
                out[key] = out.get(key, 0) + self.stages[stage].workers
        return out

    def describe(self) -> str:
        lines = []
        for st in self.stages:
            lines.append(f"stage {st.index} x{st.workers}: " + " ".join(t.id for t in st.template.tasks))
        for ad in self.adaptors:
            lines.append(f"adaptor {ad.index} {ad.n_push}->{ad.n_pull} capacity={ad.capacity} "
                         f"channels=" + ",".join(s.id for s in ad.channels))
        return "\n".join(lines) + "\n"

    def task_stats(self) -> list[TaskStats]:
        return [row for st in self.stages for row in st.task_stats()]

    # -- execution -----------------------------------------------------------
    def cancel(self) -> None:
        self.flag.down = True
        for ad in self.adaptors:
            for lane in ad.lanes:
                lane.close()

    def _fail(self, exc: BaseException) -> None:
        with self._lock:
            self._errors.append(exc)
        self.cancel()

    def _reset(self) -> None:
        self.flag.down = False
        self._stopping = False
        self._errors = []
        for ad in self.adaptors:
            ad.reset()
        for st in self.stages:
            for run in st.runners:
                for ep in (run.push, run.pull):
                    if ep is not None:
                        ep.reset_counters()
                run.wall_ns = 0
                run.seq.stats.passes = run.seq.stats.aborted = run.seq.stats.wall_ns = 0

    def exec(self, stop: Callable[[], bool] | None = None, *, max_frames: int | None = None,
             timeout: float | None = None, bits_per_frame: int | None = None) -> PipelineStats:
        """Run until ``stop()`` returns True on the final stage (or the frame budget is spent)."""
        self._reset()
        n = len(self.stages)
        threads = []
        for k, st in enumerate(self.stages):
            for r, run in enumerate(st.runners):
                th = threading.Thread(target=self._work, args=(k, run, stop, max_frames),
                                      name=f"stage{k}-{r}", daemon=True)
                threads.append(th)
        t0 = perf_counter_ns()
        for th in threads:
            th.start()
        deadline = None if timeout is None else t0 / 1e9 + timeout
        for th in threads:
            th.join(None if deadline is None else max(0.0, deadline - perf_counter_ns() / 1e9))
            if th.is_alive():
                self.cancel()
                for other in threads:
                    other.join(5.0)
                raise TimeoutError("pipeline did not finish within the timeout")
        wall = perf_counter_ns() - t0
        if self._errors:
            raise self._errors[0]
        return self._stats(wall, bits_per_frame, n)

    def _work(self, k: int, run: _Runner, stop, max_frames) -> None:
        n = len(self.stages)
        seq, push = run.seq, run.push
        t0 = perf_counter_ns()
        try:
            pin_current_thread(run.cpu)
            gate = stop_k = on_abort = None
            if n == 1:
                left = [max_frames]

                def gate_single() -> bool:
                    return not self.flag.down and (left[0] is None or left[0] > 0)

                def stop_single() -> bool:
                    if left[0] is not None:
                        left[0] -= 1
                        if left[0] <= 0:
                            return True
                    return stop is not None and stop()

                gate, stop_k = gate_single, stop_single
            elif k == 0:
                flag = self.flag

                def gate_source() -> bool:
                    return (not flag.down and not self._stopping and
                            (max_frames is None or push.frames < max_frames))

                gate = gate_source
            elif k == n - 1:
                def stop_final() -> bool:
                    if not self._stopping and stop is not None and stop():
                        self._stopping = True
                    return False

                stop_k = stop_final
            if push is not None and self.stages[k].workers > 1:
                def tombstone() -> None:
                    if not push.pushed_this_pass:
                        push.push_tombstone()

                on_abort = tombstone
            seq._drive(stop_k, gate, on_abort)
        except (EndOfStream, Shutdown):
            pass
        except BaseException as exc:
            self._fail(exc)
        finally:
            if push is not None:
                push.close()
            run.wall_ns = perf_counter_ns() - t0

    def _stats(self, wall: int, bits_per_frame: int | None, n: int) -> PipelineStats:
        stages = []
        for st in self.stages:
            ss = StageStats(st.index, st.workers)
            for run in st.runners:
                ss.wall_ns += run.wall_ns
                ss.passes += run.seq.stats.passes
                ss.aborted += run.seq.stats.aborted
                if run.push is not None:
                    ss.push_wait_ns += run.push.wait_ns
                    ss.push_copy_ns += run.push.copy_ns
                if run.pull is not None:
                    ss.pull_wait_ns += run.pull.wait_ns
                    ss.pull_copy_ns += run.pull.copy_ns
            stages.append(ss)
        return PipelineStats(stages[-1].passes, wall, stages, bits_per_frame)


def build_pipeline(plan: PipelinePlan) -> Pipeline:
    return Pipeline(plan)
