"""Control-flow modules: the switcher (commute/select) and loop/switch controls.

A :class:`Switcher` exposes two tasks sharing one ``selected_path`` state:

* ``commute`` routes its data frame to exactly one of ``k`` output paths,
  chosen by an integer read from its control socket;
* ``select`` forwards the frame of input path ``selected_path``.

Neither task touches frame elements; both forward buffer handles.  A select
placed before its commute builds a loop, a commute placed before its select
builds a switch.
"""
from __future__ import annotations

from typing import Any, Callable

import numpy as np

from .errors import PathOutOfRange, SelectedInputEmpty
from .graph import Cloneability, Module, Task, TaskKind

CTRL_DTYPE = np.int32


class Switcher(Module):
    cloneability = Cloneability.CLONEABLE
    reset_on_abort = True

    def __init__(self, n_paths: int, dtype: Any, count: int, name: str | None = None):
        if n_paths < 1:
            raise ValueError("a switcher needs at least one path")
        super().__init__(name)
        self.n_paths = int(n_paths)
        self.selected_path = self.n_paths - 1

        com = self.create_task("commute", kind=TaskKind.COMMUTE)
        self._com_data = com.create_input("data", dtype, count)
        self._com_ctrl = com.create_input("ctrl", CTRL_DTYPE, 1)
        self._com_outs = [com.create_output(f"data{i}", dtype, count) for i in range(self.n_paths)]
        com.set_runner(self._commute)
        com.tag = "commute"
        self._com_task = com

        sel = self.create_task("select", kind=TaskKind.SELECT)
        self._sel_ins = [sel.create_input(f"data{i}", dtype, count) for i in range(self.n_paths)]
        self._sel_out = sel.create_output("data", dtype, count)
        sel.set_runner(self._select)
        sel.tag = "select"
        self._sel_task = sel

    @property
    def commute(self) -> Task:
        return self.tasks["commute"]

    @property
    def select(self) -> Task:
        return self.tasks["select"]

    def reset(self) -> None:
        self.selected_path = self.n_paths - 1

    def clone(self) -> Switcher:
        new = super().clone()
        new.reset()
        return new

    def _commute(self) -> bool:
        self._com_task.n_exec += 1
        path = self._com_ctrl._view.item(0)
        if path < 0 or path >= self.n_paths:
            raise PathOutOfRange(f"{self.name}: control value {path} outside [0, {self.n_paths})")
        self.selected_path = path
        self._com_outs[path]._set_buffer(self._com_data._buffer, True)
        return False

    def _select(self) -> bool:
        self._sel_task.n_exec += 1
        buf = self._sel_ins[self.selected_path]._buffer
        if buf is None:
            raise SelectedInputEmpty(f"{self.name}: input path {self.selected_path} has no frame")
        self._sel_out._set_buffer(buf, True)
        return False


class _Control(Module):
    """Base for stateful tasks emitting a path index on a ``ctrl`` socket."""

    cloneability = Cloneability.CLONEABLE
    reset_on_abort = True

    def __init__(self, name: str | None, in_dtype: Any = None, in_count: int | None = None):
        super().__init__(name)
        task = self.create_task("iterate", kind=TaskKind.CONTROL)
        self._in = task.create_input("in", in_dtype, in_count or 1) if in_dtype is not None else None
        self._ctrl = task.create_output("ctrl", CTRL_DTYPE, 1)
        task.set_runner(self._emit)
        task.tag = "iterate"
        self._task = task

    @property
    def task(self) -> Task:
        return self.tasks["iterate"]

    def _next(self, data: np.ndarray | None) -> int:
        raise NotImplementedError

    def _emit(self) -> bool:
        self._task.n_exec += 1
        src = self._in
        buf = self._ctrl._buffer
        if src is None:
            buf.data[0] = self._next(None)
            buf.generation += 1
        else:
            buf.data[0] = self._next(src._view)
            buf.generation = src._buffer.generation
        return False


class ForLoopControl(_Control):
    """Emit the body path ``n`` times, then the exit path once, then restart."""

    def __init__(self, n: int, in_dtype: Any = None, in_count: int | None = None,
                 body_path: int = 0, exit_path: int = 1, name: str | None = None):
        if n < 1:
            raise ValueError("a for loop needs n >= 1")
        self.n = int(n)
        self.body_path = body_path
        self.exit_path = exit_path
        self.counter = 0
        super().__init__(name, in_dtype, in_count)

    def _next(self, data: np.ndarray | None) -> int:
        if self.counter < self.n:
            self.counter += 1
            return self.body_path
        self.counter = 0
        return self.exit_path

    def _emit(self) -> bool:
        # same as the generic runner with _next inlined (hot in loops)
        self._task.n_exec += 1
        buf = self._ctrl._buffer
        c = self.counter
        if c < self.n:
            self.counter = c + 1
            buf.data[0] = self.body_path
        else:
            self.counter = 0
            buf.data[0] = self.exit_path
        src = self._in
        buf.generation = buf.generation + 1 if src is None else src._buffer.generation
        return False

    def reset(self) -> None:
        self.counter = 0


class CyclicControl(_Control):
    """Emit 0, 1, ..., k-1, 0, 1, ... (one value per execution)."""

    def __init__(self, n_paths: int, in_dtype: Any = None, in_count: int | None = None,
                 name: str | None = None):
        if n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        self.n_paths = int(n_paths)
        self.position = 0
        super().__init__(name, in_dtype, in_count)

    def _next(self, data: np.ndarray | None) -> int:
        p = self.position
        self.position = (p + 1) % self.n_paths
        return p

    def _emit(self) -> bool:
        self._task.n_exec += 1
        buf = self._ctrl._buffer
        p = self.position
        buf.data[0] = p
        p += 1
        self.position = 0 if p == self.n_paths else p
        src = self._in
        buf.generation = buf.generation + 1 if src is None else src._buffer.generation
        return False

    def reset(self) -> None:
        self.position = 0


class DataControl(_Control):
    """Emit ``fn(frame)``: data-dependent paths (e.g. while loops)."""

    reset_on_abort = False

    def __init__(self, fn: Callable[[np.ndarray], int], in_dtype: Any, in_count: int,
                 name: str | None = None):
        self.fn = fn
        super().__init__(name, in_dtype, in_count)

    def _next(self, data: np.ndarray | None) -> int:
        return int(self.fn(data))


def make_for_control(n: int, in_dtype: Any = None, in_count: int | None = None,
                     name: str | None = None) -> Task:
    """Control task driving a ``for`` loop of ``n`` iterations."""
    return ForLoopControl(n, in_dtype, in_count, name=name).task


def make_cyclic_control(n_paths: int, in_dtype: Any = None, in_count: int | None = None,
                        name: str | None = None) -> Task:
    return CyclicControl(n_paths, in_dtype, in_count, name=name).task
