"""Bounded producer/consumer hand-off between pipeline stages.

An :class:`Adaptor` sits on one stage boundary and carries every channel
(output socket) crossing it.  It owns one ring of slots per *lane*; each lane
has a single producer and a single consumer.  Round-robin endpoints spread
consecutive frames over the lanes, which is what keeps frame order intact
across replicated stages:

* 1→1: one lane;
* 1→n: the single push endpoint cycles over n lanes, pull replica r owns lane r;
* n→1: push replica r owns lane r, the single pull endpoint cycles;
* n→n: push replica r and pull replica r share lane r.

Two copy modes are available.  ``deep_copy`` copies frame elements into the
slot and back out.  ``copyless`` swaps buffer handles: the producer socket
gets the slot's spare buffer in exchange for the filled one, so elements are
never copied.
"""
from __future__ import annotations

import os
import threading
import time
from time import perf_counter_ns

import numpy as np

from ..errors import Shutdown
from ..graph import Cloneability, FrameBuffer, Module, TaskKind

ACTIVE = "active"
PASSIVE = "passive"
DEEP_COPY = "deep_copy"
COPYLESS = "copyless"

_PASSIVE_TICK = 0.02  # seconds between shutdown checks while blocked

# busy-wait relaxation: give the GIL and the core away for one scheduling round
_relax = getattr(os, "sched_yield", None) or (lambda: time.sleep(0))


class EndOfStream(Exception):
    """Internal: the lane is closed and drained (worker terminates)."""


class Lane:
    """Single-producer single-consumer ring of multi-channel slots.

    ``pushed`` is written only by the producer and ``pulled`` only by the
    consumer; the difference is the fill level.
    """

    def __init__(self, capacity: int, channels: list[tuple[np.dtype, int]], flag: "Flag",
                 passive: bool):
        self.capacity = capacity
        self.slots = [[FrameBuffer(dt, n) for dt, n in channels] for _ in range(capacity)]
        self.tomb = [False] * capacity
        self.pushed = 0
        self.pulled = 0
        self.closed = False
        self.flag = flag
        self.cond = threading.Condition() if passive else None

    def reset(self) -> None:
        self.pushed = self.pulled = 0
        self.closed = False
        self.tomb = [False] * self.capacity

    # -- producer side -------------------------------------------------------
    def wait_space(self) -> int:
        """Block until a slot is free; returns the blocked time in ns."""
        if self.pushed - self.pulled < self.capacity:
            return 0
        t0 = perf_counter_ns()
        flag = self.flag
        cond = self.cond
        if cond is None:
            while self.pushed - self.pulled >= self.capacity:
                if flag.down:
                    raise Shutdown("pipeline is shutting down")
                _relax()
        else:
            with cond:
                while self.pushed - self.pulled >= self.capacity:
                    if flag.down:
                        raise Shutdown("pipeline is shutting down")
                    cond.wait(_PASSIVE_TICK)
        return perf_counter_ns() - t0

    def commit_push(self) -> None:
        if self.cond is None:
            self.pushed += 1
        else:
            with self.cond:
                self.pushed += 1
                self.cond.notify_all()

    def close(self) -> None:
        self.closed = True
        if self.cond is not None:
            with self.cond:
                self.cond.notify_all()

    # -- consumer side -------------------------------------------------------
    def wait_frame(self) -> int:
        if self.pushed != self.pulled:
            return 0
        t0 = perf_counter_ns()
        flag = self.flag
        cond = self.cond
        if cond is None:
            while self.pushed == self.pulled:
                if flag.down:
                    raise Shutdown("pipeline is shutting down")
                if self.closed and self.pushed == self.pulled:
                    raise EndOfStream
                _relax()
        else:
            with cond:
                while self.pushed == self.pulled:
                    if flag.down:
                        raise Shutdown("pipeline is shutting down")
                    if self.closed:
                        raise EndOfStream
                    cond.wait(_PASSIVE_TICK)
        return perf_counter_ns() - t0

    def commit_pull(self) -> None:
        if self.cond is None:
            self.pulled += 1
        else:
            with self.cond:
                self.pulled += 1
                self.cond.notify_all()


class Flag:
    """Shared shutdown flag checked by every blocked waiter."""

    __slots__ = ("down",)

    def __init__(self):
        self.down = False


class Adaptor:
    """All channels crossing one stage boundary."""

    def __init__(self, index: int, channels: list, n_push: int, n_pull: int, capacity: int,
                 wait_mode: str, copy_mode: str, flag: Flag):
        self.index = index
        self.channels = channels  # original source sockets, in channel order
        self.n_push = n_push
        self.n_pull = n_pull
        self.n_lanes = max(n_push, n_pull)
        self.capacity = capacity
        self.wait_mode = wait_mode
        self.copy_mode = copy_mode
        spec = [(s.dtype, s.count) for s in channels]
        self.lanes = [Lane(capacity, spec, flag, wait_mode == PASSIVE) for _ in range(self.n_lanes)]
        self.push = PushEndpoint(self)
        self.pull = PullEndpoint(self)

    @property
    def kind(self) -> str:
        return f"{self.n_push}->{self.n_pull}" if self.n_lanes > 1 else "1->1"

    def reset(self) -> None:
        for lane in self.lanes:
            lane.reset()

    @property
    def total_pushed(self) -> int:
        return sum(lane.pushed for lane in self.lanes)

    @property
    def total_pulled(self) -> int:
        return sum(lane.pulled for lane in self.lanes)


class _Endpoint(Module):
    cloneability = Cloneability.CLONEABLE

    def __init__(self, adaptor: Adaptor, name: str):
        super().__init__(name)
        self.adaptor = adaptor
        self.lane: int | None = None  # fixed lane, or None for round-robin
        self.rr = 0
        self.wait_ns = 0
        self.copy_ns = 0
        self.frames = 0

    def reset_counters(self) -> None:
        self.rr = 0
        self.wait_ns = self.copy_ns = self.frames = 0

    def _next_lane(self) -> Lane:
        lanes = self.adaptor.lanes
        if self.lane is not None:
            return lanes[self.lane]
        lane = lanes[self.rr]
        self.rr = (self.rr + 1) % len(lanes)
        return lane


class PushEndpoint(_Endpoint):
    def __init__(self, adaptor: Adaptor):
        super().__init__(adaptor, f"adaptor{adaptor.index}_push")
        task = self.create_task("push", kind=TaskKind.PUSH)
        for i, s in enumerate(adaptor.channels):
            task.create_input(f"ch{i}", s.dtype, s.count)
        task.set_runner(self._push)
        task.tag = "push"
        self.pushed_this_pass = False
        # per channel: may the producer's buffer be swapped into the slot?
        self.swap_ok: tuple[bool, ...] = (True,) * len(adaptor.channels)

    @property
    def task(self):
        return self.tasks["push"]

    def _push(self) -> bool:
        task = self.tasks["push"]
        task.n_exec += 1
        lane = self._next_lane()
        self.wait_ns += lane.wait_space()
        i = lane.pushed % lane.capacity
        slot = lane.slots[i]
        lane.tomb[i] = False
        if self.adaptor.copy_mode == COPYLESS:
            t0 = None
            for c, sock in enumerate(task.inputs):
                src = sock.source
                if self.swap_ok[c] and not src._forwarded:
                    spare = slot[c]
                    slot[c] = src._buffer
                    src._set_buffer(spare)
                else:
                    if t0 is None:
                        t0 = perf_counter_ns()
                    slot[c].copy_from(sock._buffer)
            if t0 is not None:
                self.copy_ns += perf_counter_ns() - t0
        else:
            t0 = perf_counter_ns()
            for c, sock in enumerate(task.inputs):
                slot[c].copy_from(sock._buffer)
            self.copy_ns += perf_counter_ns() - t0
        lane.commit_push()
        self.frames += 1
        self.pushed_this_pass = True
        return False

    def push_tombstone(self) -> None:
        """Mark a frame lost by an aborted pass so round-robin readers stay aligned."""
        lane = self._next_lane()
        self.wait_ns += lane.wait_space()
        lane.tomb[lane.pushed % lane.capacity] = True
        lane.commit_push()

    def close(self) -> None:
        if self.lane is not None:
            self.adaptor.lanes[self.lane].close()
        else:
            for lane in self.adaptor.lanes:
                lane.close()


class PullEndpoint(_Endpoint):
    def __init__(self, adaptor: Adaptor):
        super().__init__(adaptor, f"adaptor{adaptor.index}_pull")
        task = self.create_task("pull", kind=TaskKind.PULL)
        for i, s in enumerate(adaptor.channels):
            task.create_output(f"ch{i}", s.dtype, s.count)
        task.set_runner(self._pull)
        task.tag = "pull"
        self.pair: PushEndpoint | None = None  # push endpoint of the same stage replica

    @property
    def task(self):
        return self.tasks["pull"]

    def _pull(self) -> bool:
        task = self.tasks["pull"]
        task.n_exec += 1
        if self.pair is not None:
            self.pair.pushed_this_pass = False
        lane = self._next_lane()
        self.wait_ns += lane.wait_frame()
        i = lane.pulled % lane.capacity
        if lane.tomb[i]:
            lane.tomb[i] = False
            lane.commit_pull()
            return True
        slot = lane.slots[i]
        if self.adaptor.copy_mode == COPYLESS:
            for c, sock in enumerate(task.outputs):
                mine = sock._buffer
                sock._set_buffer(slot[c])
                slot[c] = mine
        else:
            t0 = perf_counter_ns()
            for c, sock in enumerate(task.outputs):
                sock._buffer.copy_from(slot[c])
            self.copy_ns += perf_counter_ns() - t0
        lane.commit_pull()
        self.frames += 1
        return False
