"""Static schedules of tasks and their repeated execution.

Building a sequence walks the task graph depth-first from the declared first
tasks.  A task is scheduled as soon as all its input sockets have been
visited; a ``select`` task is scheduled when its highest-index input is
visited, which is what lets loop-back edges exist.  The walk produces an
execution graph of sub-sequences:

* a ``select`` task always opens a new sub-sequence (loop heads and switch
  joins are jump targets);
* a ``commute`` task closes its sub-sequence, whose successors are then
  indexed by path.

Executing a sequence repeats passes over this graph until the stop
condition returns True.  A task raising :class:`~sdrflow.errors.Abort`
ends the pass early; the next pass starts again from the first task and the
stop condition is not consulted for the aborted pass.
"""
from __future__ import annotations

import csv
import threading
from collections import deque
from dataclasses import dataclass, field
from time import perf_counter_ns
from typing import Callable, Iterable, Sequence as Seq

from .errors import Cycle, DanglingInput, SequenceError, Unreachable
from .graph import Module, Socket, Task, TaskKind

StopCondition = Callable[[], bool]


class SubSequence:
    """Control-flow-free run of tasks; node of the execution graph."""

    __slots__ = ("id", "tasks", "kind", "successors", "switcher", "next")

    def __init__(self, ident: int):
        self.id = ident
        self.tasks: list[Task] | tuple[Task, ...] = []
        self.kind = "plain"
        self.successors: list[SubSequence | None] = []
        self.switcher: Module | None = None
        self.next: SubSequence | None = None

    @property
    def name(self) -> str:
        return f"ss{self.id}"

    def successor_ids(self) -> list[str | None]:
        if self.switcher is not None:
            return [s.name if s is not None else None for s in self.successors]
        return [self.next.name] if self.next is not None else []

    def __repr__(self) -> str:
        names = ", ".join(t.id for t in self.tasks)
        return f"<SubSequence {self.name} {self.kind} [{names}] -> {self.successor_ids()}>"


@dataclass
class ExecStats:
    passes: int = 0
    aborted: int = 0
    wall_ns: int = 0


@dataclass
class TaskStats:
    task: str
    tag: str
    exec_count: int
    total_ns: int

    @property
    def mean_ns(self) -> float:
        return self.total_ns / self.exec_count if self.exec_count else 0.0


@dataclass
class PassRecord:
    index: int
    completed: bool
    tasks: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# graph analysis
# ---------------------------------------------------------------------------

def _region(first: Seq[Task], last: Iterable[Task], allowed: set[int] | None) -> list[Task]:
    last_ids = {id(t) for t in last}
    seen: dict[int, Task] = {}
    stack = list(first)[::-1]
    while stack:
        t = stack.pop()
        if id(t) in seen or (allowed is not None and id(t) not in allowed):
            continue
        seen[id(t)] = t
        if id(t) in last_ids:
            continue
        nxt = [k.task for s in t.outputs for k in s.sinks]
        stack.extend(reversed(nxt))
    return list(seen.values())


class _Builder:
    def __init__(self, first: list[Task], last: list[Task], allowed: set[int] | None):
        self.first = first
        self.last_ids = {id(t) for t in last}
        self.region = _region(first, last, allowed)
        self.in_region = {id(t) for t in self.region}
        self.visited: set[int] = set()
        self.added: set[int] = set()
        self.order: list[Task] = []
        self.subs: list[SubSequence] = []
        self.cur: SubSequence | None = None
        self.edge: tuple[SubSequence, int] | None = None
        self.select_ss: dict[int, SubSequence] = {}
        self.pending: dict[int, list] = {}

    # -- checks ------------------------------------------------------------
    def check_inputs(self) -> None:
        for t in self.region:
            if t.kind is TaskKind.SELECT:
                if t.inputs and t.inputs[-1].source is None:
                    raise DanglingInput(f"select {t.id}: highest-index input is unbound")
                continue
            for s in t.inputs:
                if s.source is None:
                    raise DanglingInput(f"{s.id} is unbound")
        for t in self.region:
            for s in t.inputs:
                if s.source is not None and id(s.source.task) not in self.in_region:
                    self.visited.add(id(s))

    # -- positions ---------------------------------------------------------
    def _new_ss(self) -> SubSequence:
        ss = SubSequence(len(self.subs))
        self.subs.append(ss)
        return ss

    def _link_here(self, target: SubSequence) -> None:
        if self.cur is not None:
            cur = self.cur
            if cur.next is not None and cur.next is not target:
                raise SequenceError(f"{cur.name} would need two successors")
            cur.next = target
        elif self.edge is not None:
            pred, idx = self.edge
            pred.successors[idx] = target
        # else: nothing precedes target (it is the root)

    def _here(self) -> SubSequence:
        if self.cur is None:
            ss = self._new_ss()
            self._link_here(ss)
            self.cur = ss
            self.edge = None
        return self.cur

    # -- traversal ---------------------------------------------------------
    def ready(self, t: Task) -> bool:
        if t.kind is TaskKind.SELECT:
            return id(t.inputs[-1]) in self.visited
        return all(id(s) in self.visited for s in t.inputs)

    def add(self, t: Task) -> None:
        self.added.add(id(t))
        self.order.append(t)
        if t.kind is TaskKind.SELECT:
            ss = self._new_ss()
            self._link_here(ss)
            self.cur, self.edge = ss, None
            ss.tasks.append(t)
            self.select_ss[id(t)] = ss
            for pos in self.pending.pop(id(t), []):
                self._attach(pos, ss)
        else:
            self._here().tasks.append(t)
        if id(t) in self.last_ids:
            return
        if t.kind is TaskKind.COMMUTE:
            ss = self.cur
            ss.switcher = t.module
            ss.successors = [None] * len(t.outputs)
            ss.kind = "switch"
            for i, out in enumerate(t.outputs):
                self.cur, self.edge = None, (ss, i)
                self.follow(out)
            return
        for out in t.outputs:
            self.follow(out)

    def _attach(self, pos, target: SubSequence) -> None:
        kind, obj = pos
        if kind == "ss":
            if obj.next is not None and obj.next is not target:
                raise SequenceError(f"{obj.name} would need two successors")
            obj.next = target
        else:
            pred, idx = obj
            pred.successors[idx] = target

    def _position(self):
        if self.cur is not None:
            return ("ss", self.cur)
        return ("edge", self.edge)

    def follow(self, out: Socket) -> None:
        for sink in out.sinks:
            t = sink.task
            if id(t) not in self.in_region:
                continue
            self.visited.add(id(sink))
            if id(t) in self.added:
                if t.kind is TaskKind.SELECT:
                    # loop-back edge into an already scheduled select
                    self._attach(self._position(), self.select_ss[id(t)])
                continue
            if self.ready(t):
                self.add(t)
            elif t.kind is TaskKind.SELECT:
                pos = self._position()
                if pos[1] is not None:
                    self.pending.setdefault(id(t), []).append(pos)
            else:
                self._pull_controls(t)

    def _pull_controls(self, t: Task) -> None:
        # A ready control task feeding t runs right before it, so a loop's
        # control executes once per iteration of that loop.
        for s in t.inputs:
            if id(s) in self.visited or id(t) in self.added:
                continue
            src = s.source.task
            if (src.kind is TaskKind.CONTROL and id(src) in self.in_region
                    and id(src) not in self.added and self.ready(src)):
                self.add(src)

    def run(self) -> None:
        self.check_inputs()
        for f in self.first:
            if id(f) not in self.added and self.ready(f):
                self.add(f)
        missing = [t for t in self.region if id(t) not in self.added]
        if missing:
            raise Cycle("tasks never became ready (non-switcher cycle?): "
                        + ", ".join(t.id for t in missing))
        if self.pending:
            raise Unreachable("select tasks whose highest-index input is never reached")
        for ss in self.subs:
            ss.tasks = tuple(ss.tasks)
            if ss.switcher is not None and ss.tasks and ss.tasks[0].module is ss.switcher:
                ss.kind = "loop"


# ---------------------------------------------------------------------------
# the sequence object
# ---------------------------------------------------------------------------

class Sequence:
    """Statically scheduled, repeatedly executed region of a task graph.

    ``n_threads > 1`` duplicates the whole sequence (see
    :mod:`sdrflow.replication`); :meth:`exec` then runs every replica on its
    own worker thread.
    """

    def __init__(self, first_tasks: Task | Seq[Task], last_tasks: Task | Seq[Task] = (),
                 n_threads: int = 1, pinning: Seq[int] | None = None, *,
                 timing: bool = True, log_size: int = 0, _allowed: set[int] | None = None):
        first = [first_tasks] if isinstance(first_tasks, Task) else list(first_tasks)
        last = [last_tasks] if isinstance(last_tasks, Task) else list(last_tasks)
        if not first:
            raise ValueError("a sequence needs at least one first task")
        b = _Builder(first, last, _allowed)
        b.run()
        for t in last:
            if id(t) not in b.added:
                raise Unreachable(f"last task {t.id} is not reached from the first tasks")
        self.first_tasks = first
        self.last_tasks = last
        self.subsequences: list[SubSequence] = b.subs
        self.tasks: list[Task] = b.order
        self._init_runtime(timing, log_size)
        self.replicas: list[Sequence] = []
        self.provenance: list[dict[int, Task]] = []
        if n_threads > 1 or pinning is not None:
            from .replication import CloneSpec, duplicate_sequence

            rs = duplicate_sequence(self, CloneSpec(n_threads, pinning))
            self.replicas = rs.replicas
            self.provenance = rs.provenance
            self.pinning = rs.pinning
        else:
            self.pinning = None

    def _init_runtime(self, timing: bool, log_size: int) -> None:
        self.root = self.subsequences[0]
        mods: dict[int, Module] = {}
        for t in self.tasks:
            mods.setdefault(id(t.module), t.module)
        self.modules: list[Module] = list(mods.values())
        self._resettable = [m for m in self.modules if m.reset_on_abort]
        self.timing = timing
        self.log: deque[PassRecord] | None = deque(maxlen=log_size) if log_size else None
        self._pass_index = 0
        self.stats = ExecStats()

    def _remapped(self, task_map: dict[int, Task], module_map: dict[int, Module]) -> Sequence:
        """Same schedule over other task objects (used by replication)."""
        new = object.__new__(Sequence)
        nodes = {id(ss): SubSequence(ss.id) for ss in self.subsequences}
        for ss in self.subsequences:
            n = nodes[id(ss)]
            n.kind = ss.kind
            n.tasks = tuple(task_map[id(t)] for t in ss.tasks)
            n.switcher = module_map[id(ss.switcher)] if ss.switcher is not None else None
            n.successors = [nodes[id(s)] if s is not None else None for s in ss.successors]
            n.next = nodes[id(ss.next)] if ss.next is not None else None
        new.first_tasks = [task_map[id(t)] for t in self.first_tasks]
        new.last_tasks = [task_map[id(t)] for t in self.last_tasks]
        new.subsequences = [nodes[id(ss)] for ss in self.subsequences]
        new.tasks = [task_map[id(t)] for t in self.tasks]
        new._init_runtime(self.timing, self.log.maxlen if self.log is not None else 0)
        new.replicas = []
        new.provenance = []
        new.pinning = None
        return new

    # -- introspection -----------------------------------------------------
    @property
    def schedule(self) -> list[list[str]]:
        return [[t.id for t in ss.tasks] for ss in self.subsequences]

    def describe(self) -> str:
        lines = []
        for ss in self.subsequences:
            succ = ", ".join(str(s) for s in ss.successor_ids()) or "end"
            lines.append(f"{ss.name} [{ss.kind}]: {' '.join(t.id for t in ss.tasks)} -> {succ}")
        return "\n".join(lines) + "\n"

    def to_dot(self, name: str = "sequence") -> str:
        """Deterministic DOT rendering of the execution graph and bindings."""
        idx = {id(t): f"n{i}" for i, t in enumerate(self.tasks)}
        lines = [f"digraph {name} {{", "  compound=true;"]
        for ss in self.subsequences:
            lines.append(f"  subgraph cluster_{ss.name} {{")
            lines.append(f'    label="{ss.name} ({ss.kind})";')
            for t in ss.tasks:
                lines.append(f'    {idx[id(t)]} [label="{t.id}"];')
            lines.append("  }")
        for t in self.tasks:
            for s in t.inputs:
                src = s.source
                if src is not None and id(src.task) in idx:
                    lines.append(f'  {idx[id(src.task)]} -> {idx[id(t)]} '
                                 f'[label="{src.name} -> {s.name}"];')
        for ss in self.subsequences:
            if not ss.tasks:
                continue
            tail = idx[id(ss.tasks[-1])]
            succ = ss.successors if ss.switcher is not None else [ss.next]
            for i, nxt in enumerate(succ):
                if nxt is None or not nxt.tasks:
                    continue
                label = f"path {i}" if ss.switcher is not None else "next"
                lines.append(f'  {tail} -> {idx[id(nxt.tasks[0])]} '
                             f'[style=bold, ltail=cluster_{ss.name}, '
                             f'lhead=cluster_{nxt.name}, label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    # -- execution ---------------------------------------------------------
    def _pass_timed(self) -> bool:
        now = perf_counter_ns
        node = self.root
        while node is not None:
            t0 = now()
            for task in node.tasks:
                if task._run():
                    task.duration_ns += now() - t0
                    return False
                t1 = now()
                task.duration_ns += t1 - t0
                t0 = t1
            sw = node.switcher
            node = node.next if sw is None else node.successors[sw.selected_path]
        return True

    def _pass_untimed(self) -> bool:
        node = self.root
        while node is not None:
            for task in node.tasks:
                if task._run():
                    return False
            sw = node.switcher
            node = node.next if sw is None else node.successors[sw.selected_path]
        return True

    def _pass_logged(self) -> bool:
        now = perf_counter_ns
        rec = PassRecord(self._pass_index, False)
        self._pass_index += 1
        self.log.append(rec)
        node = self.root
        while node is not None:
            t0 = now()
            for task in node.tasks:
                rec.tasks.append(task.id)
                aborted = task._run()
                t1 = now()
                task.duration_ns += t1 - t0
                t0 = t1
                if aborted:
                    return False
            sw = node.switcher
            node = node.next if sw is None else node.successors[sw.selected_path]
        rec.completed = True
        return True

    def _runner(self) -> Callable[[], bool]:
        if self.log is not None:
            return self._pass_logged
        return self._pass_timed if self.timing else self._pass_untimed

    def run_pass(self) -> bool:
        """Execute one pass; True if it completed, False if it aborted."""
        ok = self._runner()()
        if not ok:
            self._after_abort()
        return ok

    def _after_abort(self) -> None:
        for m in self._resettable:
            m.reset()

    def _drive(self, stop: StopCondition | None, gate: Callable[[], bool] | None = None,
               on_abort: Callable[[], None] | None = None) -> ExecStats:
        run = self._runner()
        stats = ExecStats()
        t_start = perf_counter_ns()
        try:
            if gate is None:
                while True:
                    if run():
                        stats.passes += 1
                        if stop is not None and stop():
                            break
                    else:
                        stats.aborted += 1
                        self._after_abort()
                        if on_abort is not None:
                            on_abort()
            else:
                while gate():
                    if run():
                        stats.passes += 1
                        if stop is not None and stop():
                            break
                    else:
                        stats.aborted += 1
                        self._after_abort()
                        if on_abort is not None:
                            on_abort()
        finally:
            stats.wall_ns = perf_counter_ns() - t_start
            self.stats.passes += stats.passes
            self.stats.aborted += stats.aborted
            self.stats.wall_ns += stats.wall_ns
        return stats

    def exec(self, stop: StopCondition | None) -> ExecStats:
        """Repeat passes until ``stop()`` returns True after a completed pass.

        With replicas, each replica runs on its own thread and evaluates
        ``stop`` independently (so ``stop`` must be thread-safe).
        """
        if not self.replicas:
            return self._drive(stop)
        return run_replicas(self.replicas, stop, self.pinning)

    def exec_n(self, n_passes: int) -> ExecStats:
        """Run exactly ``n_passes`` completed passes (per replica)."""
        if n_passes <= 0:
            return ExecStats()
        if self.replicas:
            return run_replicas(self.replicas, None, self.pinning, n_passes=n_passes)
        return self._drive(_countdown(n_passes))

    def reset_stats(self) -> None:
        for seq in [self, *self.replicas]:
            for t in seq.tasks:
                t.reset_stats()
            seq.stats = ExecStats()

    def task_stats(self) -> list[TaskStats]:
        return exec_stats(self)


def _countdown(n: int) -> StopCondition:
    left = [n]

    def stop() -> bool:
        left[0] -= 1
        return left[0] <= 0

    return stop


def run_replicas(replicas: list[Sequence], stop: StopCondition | None,
                 pinning: Seq[int] | None = None, n_passes: int | None = None) -> ExecStats:
    from .affinity import pin_current_thread

    errors: list[BaseException] = []
    results: list[ExecStats] = [ExecStats() for _ in replicas]

    def work(i: int) -> None:
        try:
            if pinning is not None:
                pin_current_thread(pinning[i])
            cond = _countdown(n_passes) if n_passes is not None else stop
            results[i] = replicas[i]._drive(cond)
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(i,), name=f"replica-{i}", daemon=True)
               for i in range(len(replicas))]
    t0 = perf_counter_ns()
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    return ExecStats(sum(r.passes for r in results), sum(r.aborted for r in results),
                     perf_counter_ns() - t0)


def build_sequence(first_tasks: Task | Seq[Task], last_tasks: Task | Seq[Task] = (),
                   **kwargs) -> Sequence:
    return Sequence(first_tasks, last_tasks, **kwargs)


def exec_stats(seq: Sequence) -> list[TaskStats]:
    """Per-task execution counts and durations, replicas folded onto originals."""
    rows = [TaskStats(t.id, t.tag, t.n_exec, t.duration_ns) for t in seq.tasks]
    for rep, prov in zip(seq.replicas, seq.provenance):
        pos = {id(t): i for i, t in enumerate(seq.tasks)}
        for t in rep.tasks:
            i = pos[id(prov[id(t)])]
            rows[i].exec_count += t.n_exec
            rows[i].total_ns += t.duration_ns
    return rows


def write_stats_csv(rows: list[TaskStats], path) -> None:
    """CSV with columns task, exec_count, total_ms, mean_us, share_pct."""
    total = sum(r.total_ns for r in rows) or 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "exec_count", "total_ms", "mean_us", "share_pct"])
        for r in rows:
            w.writerow([r.task, r.exec_count, f"{r.total_ns / 1e6:.6f}",
                        f"{r.mean_ns / 1e3:.6f}", f"{100.0 * r.total_ns / total:.4f}"])
