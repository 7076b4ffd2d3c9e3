"""Modules, tasks, sockets and the binding rules that connect them.

A :class:`Module` owns one or more :class:`Task` objects that may share the
module's private state.  Tasks exchange fixed-size frames through typed
:class:`Socket` objects; connecting an input socket to an output socket is
called *binding*.  Every output socket owns a :class:`FrameBuffer`, and bound
input sockets read the very same buffer (no copy).  Task bodies are plain
callables receiving the input arrays (read-only views) followed by the
output arrays (writable), in declaration order.
"""
from __future__ import annotations

import enum
import types
import zlib
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import (
    Abort,
    AlreadyBound,
    BindError,
    SelfBind,
    TaskFailure,
    TypeMismatch,
    UnboundInput,
)


class SocketDir(enum.Enum):
    INPUT = "input"
    OUTPUT = "output"


class TaskKind(enum.Enum):
    STANDARD = "standard"
    COMMUTE = "commute"
    SELECT = "select"
    CONTROL = "control"
    PUSH = "push"
    PULL = "pull"


class TaskStatus(enum.IntEnum):
    OK = 0
    ABORT = 1


class Cloneability(enum.Enum):
    CLONEABLE = "cloneable"
    CLONEABLE_WITH_DEEP_COPY = "cloneable_with_deep_copy"
    SEQUENTIAL_ONLY = "sequential_only"


_ABORT = TaskStatus.ABORT


class FrameBuffer:
    """Contiguous storage for one frame plus its generation index."""

    __slots__ = ("data", "readonly", "generation")

    def __init__(self, dtype: Any, count: int):
        self.data = np.zeros(count, dtype=dtype)
        ro = self.data.view()
        ro.flags.writeable = False
        self.readonly = ro
        self.generation = -1

    @property
    def elem_kind(self) -> str:
        return self.data.dtype.name

    @property
    def elem_count(self) -> int:
        return self.data.shape[0]

    def copy_from(self, other: FrameBuffer) -> None:
        np.copyto(self.data, other.data)
        self.generation = other.generation

    def checksum(self) -> int:
        return zlib.crc32(self.data.tobytes())

    def __repr__(self) -> str:
        return f"FrameBuffer({self.elem_kind}[{self.elem_count}], gen={self.generation})"


class Socket:
    """Typed, directional data port of a task."""

    __slots__ = (
        "name", "task", "direction", "dtype", "count",
        "source", "sinks", "_buffer", "_view", "_forwarded",
    )

    def __init__(self, task: Task, name: str, direction: SocketDir, dtype: Any, count: int):
        count = int(count)
        if count < 1:
            raise ValueError(f"socket {name!r}: elem_count must be positive, got {count}")
        self.name = name
        self.task = task
        self.direction = direction
        self.dtype = np.dtype(dtype)
        self.count = count
        self.source: Socket | None = None
        self.sinks: list[Socket] = []
        self._forwarded = False
        if direction is SocketDir.OUTPUT:
            buf = FrameBuffer(self.dtype, count)
            self._buffer: FrameBuffer | None = buf
            self._view = buf.data
        else:
            self._buffer = None
            self._view = None

    # -- introspection -----------------------------------------------------
    @property
    def id(self) -> str:
        return f"{self.task.id}::{self.name}"

    @property
    def elem_kind(self) -> str:
        return self.dtype.name

    @property
    def elem_count(self) -> int:
        return self.count

    @property
    def is_input(self) -> bool:
        return self.direction is SocketDir.INPUT

    @property
    def buffer(self) -> FrameBuffer | None:
        return self._buffer

    @property
    def data(self) -> np.ndarray | None:
        """Array currently behind this socket (read-only for inputs)."""
        return self._view

    @property
    def generation(self) -> int:
        buf = self._buffer
        return -1 if buf is None else buf.generation

    # -- binding -----------------------------------------------------------
    def bind(self, other: Socket) -> None:
        """Bind this socket to ``other``; one of them must be an input."""
        if self.is_input:
            bind(self, other)
        else:
            bind(other, self)

    def unbind(self) -> None:
        if self.is_input:
            src = self.source
            if src is None:
                return
            src.sinks.remove(self)
            if self.name in self.task._bind_order:
                self.task._bind_order.remove(self.name)
            self.source = None
            self._buffer = None
            self._view = None
            self.task._args = None
        else:
            for s in list(self.sinks):
                s.unbind()

    def _set_buffer(self, buf: FrameBuffer, forwarded: bool = False) -> None:
        """Swap the frame handle behind an output socket (and its sinks)."""
        self._forwarded = forwarded
        if self._buffer is buf:
            return
        self._buffer = buf
        self._view = buf.data
        self.task._args = None
        ro = buf.readonly
        for s in self.sinks:
            s._buffer = buf
            s._view = ro
            s.task._args = None

    def __repr__(self) -> str:
        return f"<Socket {self.id} {self.direction.value} {self.elem_kind}[{self.count}]>"


def bind(in_sock: Socket, out_sock: Socket) -> None:
    """Connect ``in_sock`` to ``out_sock``.

    An input accepts exactly one source; an output may feed any number of
    inputs (kept in binding order).
    """
    if not in_sock.is_input or out_sock.is_input:
        raise BindError(f"bind expects (input, output), got ({in_sock!r}, {out_sock!r})")
    if in_sock.task is out_sock.task:
        raise SelfBind(f"cannot bind {in_sock.id} to a socket of the same task")
    if in_sock.source is not None:
        raise AlreadyBound(f"{in_sock.id} is already bound to {in_sock.source.id}")
    if in_sock.dtype != out_sock.dtype or in_sock.count != out_sock.count:
        raise TypeMismatch(
            f"{out_sock.id} is {out_sock.elem_kind}[{out_sock.count}] but "
            f"{in_sock.id} expects {in_sock.elem_kind}[{in_sock.count}]"
        )
    in_sock.source = out_sock
    out_sock.sinks.append(in_sock)
    in_sock._buffer = out_sock._buffer
    in_sock._view = out_sock._buffer.readonly
    task = in_sock.task
    task._bind_order.append(in_sock.name)
    task._args = None


class Task:
    """Executable work unit owned by a module."""

    __slots__ = (
        "module", "name", "kind", "inputs", "outputs", "_body", "_run", "_custom_run",
        "_args", "_socks", "_ins", "_outs", "_multi_in", "_frames", "_bind_order",
        "n_exec", "duration_ns", "tag", "__weakref__",
    )

    def __init__(self, module: Module, name: str, body: Callable | None = None,
                 kind: TaskKind = TaskKind.STANDARD):
        self.module = module
        self.name = name
        self.kind = kind
        self.inputs: list[Socket] = []
        self.outputs: list[Socket] = []
        self._body = body
        self._run = self._run_standard
        self._custom_run = False
        self._args: tuple | None = None
        self._socks: tuple = ()
        self._ins: tuple = ()
        self._outs: tuple = ()
        self._multi_in = False
        self._frames = 0
        self._bind_order: list[str] = []
        self.n_exec = 0
        self.duration_ns = 0
        # free-form class label used by stats grouping (e.g. "C" in benchmarks)
        self.tag = kind.value

    @property
    def id(self) -> str:
        return f"{self.module.name}.{self.name}"

    @property
    def body(self) -> Callable | None:
        return self._body

    @body.setter
    def body(self, fn: Callable) -> None:
        self._body = fn

    @property
    def binding_order(self) -> list[str]:
        return list(self._bind_order)

    def create_input(self, name: str, dtype: Any, count: int) -> Socket:
        return self._add_socket(name, SocketDir.INPUT, dtype, count)

    def create_output(self, name: str, dtype: Any, count: int) -> Socket:
        return self._add_socket(name, SocketDir.OUTPUT, dtype, count)

    def _add_socket(self, name: str, direction: SocketDir, dtype: Any, count: int) -> Socket:
        if any(s.name == name for s in self.inputs + self.outputs):
            raise ValueError(f"task {self.id} already has a socket named {name!r}")
        sock = Socket(self, name, direction, dtype, count)
        (self.inputs if direction is SocketDir.INPUT else self.outputs).append(sock)
        self._refresh_layout()
        return sock

    def _refresh_layout(self) -> None:
        self._ins = tuple(self.inputs)
        self._outs = tuple(self.outputs)
        self._socks = self._ins + self._outs
        self._multi_in = len(self._ins) > 1
        self._args = None

    def set_runner(self, fn: Callable[[], bool]) -> None:
        """Replace the execution routine (used by control-flow and adaptor tasks).

        ``fn`` takes no argument and returns True when the pass must abort.
        """
        self._run = fn
        self._custom_run = True

    def __getitem__(self, name: str) -> Socket:
        for s in self.inputs:
            if s.name == name:
                return s
        for s in self.outputs:
            if s.name == name:
                return s
        raise KeyError(f"task {self.id} has no socket {name!r}")

    # -- execution ---------------------------------------------------------
    def _refresh_args(self) -> tuple:
        args = tuple(s._view for s in self._socks)
        self._args = args
        return args

    def _run_standard(self) -> bool:
        self.n_exec += 1
        args = self._args
        if args is None:
            args = self._refresh_args()
        try:
            status = self._body(*args)
        except Abort:
            return True
        except Exception as exc:
            raise TaskFailure(self.id, exc) from exc
        outs = self._outs
        if outs:
            ins = self._ins
            if ins:
                if self._multi_in:
                    g = max(s._buffer.generation for s in ins)
                else:
                    g = ins[0]._buffer.generation
            else:
                g = self._frames
                self._frames = g + 1
            for s in outs:
                s._buffer.generation = g
        return status is not None and status == _ABORT

    def execute(self) -> TaskStatus:
        """Run the task once outside of any sequence."""
        if self.kind is not TaskKind.SELECT:
            for s in self.inputs:
                if s.source is None:
                    raise UnboundInput(f"{s.id} is not bound")
        if self._body is None and not self._custom_run:
            raise TaskFailure(self.id, RuntimeError("task has no body"))
        return TaskStatus.ABORT if self._run() else TaskStatus.OK

    def reset_stats(self) -> None:
        self.n_exec = 0
        self.duration_ns = 0

    def __repr__(self) -> str:
        return f"<Task {self.id} ({self.kind.value})>"


def execute_task(task: Task) -> TaskStatus:
    return task.execute()


def _rebind(fn: Any, old: Any, new: Any) -> Any:
    if isinstance(fn, types.MethodType) and fn.__self__ is old:
        return types.MethodType(fn.__func__, new)
    return fn


class Module:
    """Group of tasks sharing private state; the unit of cloning.

    Subclasses create their tasks in ``__init__`` with :meth:`create_task` and
    declare ``cloneability``.  Modules are sequential-only unless they say
    otherwise.
    """

    cloneability = Cloneability.SEQUENTIAL_ONLY
    #: reset() is called when an enclosing sequence restarts after an abort
    reset_on_abort = False

    def __init__(self, name: str | None = None):
        self.name = name or type(self).__name__.lower()
        self.tasks: dict[str, Task] = {}

    def create_task(self, name: str, body: Callable | None = None,
                    kind: TaskKind = TaskKind.STANDARD) -> Task:
        if name in self.tasks:
            raise ValueError(f"module {self.name} already has a task {name!r}")
        task = Task(self, name, body, kind)
        self.tasks[name] = task
        return task

    def __getitem__(self, key: str) -> Task | Socket:
        tname, sep, sname = key.partition("::")
        task = self.tasks[tname]
        return task[sname] if sep else task

    def reset(self) -> None:
        """Restore the initial control state (no-op by default)."""

    # -- cloning -----------------------------------------------------------
    def clone(self) -> Module:
        """Return an independent copy with fresh, unbound tasks and sockets.

        Attributes are shallow-copied, then :meth:`deep_copy` runs when the
        module is declared ``CLONEABLE_WITH_DEEP_COPY``.
        """
        from .errors import NotCloneable

        if self.cloneability is Cloneability.SEQUENTIAL_ONLY:
            raise NotCloneable(self.name)
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        mapping: dict[int, Any] = {}
        new.tasks = {}
        for tname, task in self.tasks.items():
            new.tasks[tname] = _clone_task(task, self, new, mapping)
        for key, value in list(new.__dict__.items()):
            if key != "tasks":
                new.__dict__[key] = _remap(value, mapping)
        if self.cloneability is Cloneability.CLONEABLE_WITH_DEEP_COPY:
            self.deep_copy(new)
        return new

    def deep_copy(self, clone: Module) -> None:
        """Give ``clone`` its own copy of every writable resource.

        The default re-allocates writable numpy arrays, bytearrays, numpy
        random generators and plain containers; read-only arrays stay shared.
        Override for anything else.
        """
        import copy

        for key, value in list(clone.__dict__.items()):
            if key == "tasks":
                continue
            if isinstance(value, np.ndarray):
                if value.flags.writeable:
                    clone.__dict__[key] = value.copy()
            elif isinstance(value, (bytearray, np.random.Generator, list, dict, set)):
                if not _holds_graph_objects(value):
                    clone.__dict__[key] = copy.deepcopy(value)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name!r}>"


def _clone_task(task: Task, old: Module, new: Module, mapping: dict[int, Any]) -> Task:
    t = Task(new, task.name, _rebind(task._body, old, new), task.kind)
    t.tag = task.tag
    for s in task.inputs:
        mapping[id(s)] = t.create_input(s.name, s.dtype, s.count)
    for s in task.outputs:
        mapping[id(s)] = t.create_output(s.name, s.dtype, s.count)
    if task._custom_run:
        t.set_runner(_rebind(task._run, old, new))
    mapping[id(task)] = t
    return t


def _remap(value: Any, mapping: dict[int, Any]) -> Any:
    if isinstance(value, (Task, Socket)):
        return mapping.get(id(value), value)
    if isinstance(value, list) and _holds_graph_objects(value):
        return [_remap(v, mapping) for v in value]
    if isinstance(value, tuple) and _holds_graph_objects(value):
        return tuple(_remap(v, mapping) for v in value)
    if isinstance(value, dict) and _holds_graph_objects(value):
        return {k: _remap(v, mapping) for k, v in value.items()}
    return value


def _holds_graph_objects(value: Any) -> bool:
    items: Iterable = value.values() if isinstance(value, dict) else value
    if isinstance(value, (bytearray, np.random.Generator)):
        return False
    return any(isinstance(v, (Task, Socket)) or
               (isinstance(v, (list, tuple, dict)) and _holds_graph_objects(v))
               for v in items)


# -- audits & introspection -------------------------------------------------

def collect_tasks(roots: Iterable[Task]) -> list[Task]:
    """All tasks connected to ``roots`` (both directions), in discovery order."""
    seen: dict[int, Task] = {}
    stack = list(roots)[::-1]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen[id(t)] = t
        nxt = []
        for s in t.inputs:
            if s.source is not None:
                nxt.append(s.source.task)
        for s in t.outputs:
            nxt.extend(k.task for k in s.sinks)
        stack.extend(reversed(nxt))
    return list(seen.values())


def audit_bindings(tasks: Iterable[Task]) -> list[str]:
    """Check binding invariants; returns a list of violations (empty if sound)."""
    problems = []
    for t in tasks:
        for s in t.inputs:
            src = s.source
            if src is None:
                continue
            if s not in src.sinks:
                problems.append(f"{s.id}: source {src.id} does not list it as a sink")
            if src.dtype != s.dtype or src.count != s.count:
                problems.append(f"{s.id}: type disagrees with {src.id}")
        for s in t.outputs:
            if len({id(k) for k in s.sinks}) != len(s.sinks):
                problems.append(f"{s.id}: duplicate sinks")
            for k in s.sinks:
                if k.source is not s:
                    problems.append(f"{s.id}: sink {k.id} points elsewhere")
    return problems


def dump_graph(tasks: Sequence[Task], name: str = "tasks") -> str:
    """Deterministic DOT listing of tasks, sockets and bindings."""
    index: dict[int, str] = {}
    order: list[Task] = []
    for t in tasks:
        if id(t) not in index:
            index[id(t)] = f"t{len(order)}"
            order.append(t)
    lines = [f"digraph {name} {{"]
    extra: list[Task] = []
    for t in order:
        for s in t.inputs:
            if s.source is not None and id(s.source.task) not in index:
                index[id(s.source.task)] = f"x{len(extra)}"
                extra.append(s.source.task)
    for t in order + extra:
        ins = ",".join(f"{s.name}:{s.elem_kind}[{s.count}]" for s in t.inputs)
        outs = ",".join(f"{s.name}:{s.elem_kind}[{s.count}]" for s in t.outputs)
        style = "" if id(t) not in {id(e) for e in extra} else ", style=dashed"
        lines.append(f'  {index[id(t)]} [label="{t.id} ({t.kind.value})\\nin: {ins}\\nout: {outs}"{style}];')
    for t in order:
        for s in t.inputs:
            if s.source is not None:
                src = s.source
                lines.append(f'  {index[id(src.task)]} -> {index[id(t)]} [label="{src.name} -> {s.name}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
