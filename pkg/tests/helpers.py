"""Small modules used across the test suite."""
from __future__ import annotations

import time

import numpy as np

from sdrflow import Abort, Cloneability, Module


class Counter(Module):
    """Source emitting frames filled with its execution index."""

    def __init__(self, name="src", count=4, dtype=np.int64):
        super().__init__(name)
        self.k = 0
        t = self.create_task("gen", self._gen)
        t.create_output("out", dtype, count)

    def _gen(self, out):
        out[:] = self.k
        self.k += 1


class Node(Module):
    """Generic task with ``n_in`` inputs / ``n_out`` outputs applying ``fn``."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, name, n_in=1, n_out=1, count=4, dtype=np.int64, fn=None):
        super().__init__(name)
        self.fn = fn
        t = self.create_task("run", self._run)
        for i in range(n_in):
            t.create_input(f"in{i}", dtype, count)
        for i in range(n_out):
            t.create_output(f"out{i}", dtype, count)

    @property
    def task(self):
        return self.tasks["run"]

    def _run(self, *arrays):
        n_out = len(self.task.outputs)
        ins, outs = arrays[: len(arrays) - n_out], arrays[len(arrays) - n_out:]
        if self.fn is not None:
            self.fn(ins, outs)
        else:
            total = sum(ins) if ins else 0
            for o in outs:
                o[:] = total


class Identity(Module):
    cloneability = Cloneability.CLONEABLE

    def __init__(self, name="id", count=4, dtype=np.int64):
        super().__init__(name)
        t = self.create_task("run", self._run)
        t.create_input("in", dtype, count)
        t.create_output("out", dtype, count)

    def _run(self, i, o):
        o[:] = i


class Affine(Module):
    """o = a*i + b; deterministic and cloneable."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, name, a=2, b=1, count=4, dtype=np.int64, sleep_s=0.0):
        super().__init__(name)
        self.a, self.b, self.sleep_s = a, b, sleep_s
        t = self.create_task("run", self._run)
        t.create_input("in", dtype, count)
        t.create_output("out", dtype, count)

    def _run(self, i, o):
        if self.sleep_s:
            time.sleep(self.sleep_s)
        np.multiply(i, self.a, out=o)
        o += self.b


class Aborter(Module):
    """Identity that raises Abort when ``pred(frame value)`` holds."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, name, pred, count=4, dtype=np.int64):
        super().__init__(name)
        self.pred = pred
        t = self.create_task("run", self._run)
        t.create_input("in", dtype, count)
        t.create_output("out", dtype, count)

    def _run(self, i, o):
        if self.pred(int(i[0])):
            raise Abort
        o[:] = i


class Recorder(Module):
    """Sink storing values and generations of its inputs."""

    def __init__(self, name="sink", n_in=1, count=4, dtype=np.int64):
        super().__init__(name)
        self.values: list[tuple] = []
        self.generations: list[int] = []
        t = self.create_task("store", self._store)
        self._ins = [t.create_input(f"in{i}", dtype, count) for i in range(n_in)]

    def _store(self, *arrays):
        self.values.append(tuple(a.copy() for a in arrays))
        self.generations.append(self._ins[0].generation)


class Sleeper(Module):
    """Identity that sleeps (releases the GIL) for ``seconds``."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, name, seconds, count=4, dtype=np.int64):
        super().__init__(name)
        self.seconds = seconds
        t = self.create_task("run", self._run)
        t.create_input("in", dtype, count)
        t.create_output("out", dtype, count)

    def _run(self, i, o):
        time.sleep(self.seconds)
        o[:] = i


def countdown(n):
    left = [n]

    def stop():
        left[0] -= 1
        return left[0] <= 0

    return stop


class Tap(Module):
    """Cloneable pass-through that remembers the values it saw."""

    cloneability = Cloneability.CLONEABLE_WITH_DEEP_COPY

    def __init__(self, name="tap", count=4, dtype=np.int64):
        super().__init__(name)
        self.seen: list[int] = []
        t = self.create_task("run", self._run)
        t.create_input("in", dtype, count)
        t.create_output("out", dtype, count)

    def _run(self, i, o):
        self.seen.append(int(i[0]))
        o[:] = i


def linear_pipeline(workers=(1, 1, 1), capacity=1, copy_mode="copyless", wait_mode="passive",
                    count=4, middle=None):
    """src | affine (+ optional extra middle modules) x workers | ... | sink.

    ``workers`` gives the worker count of each stage; stage 0 holds the
    source, the last stage the recorder, every stage in between one Affine.
    """
    from sdrflow.pipeline import PipelinePlan, StageSpec, build_pipeline
    from sdrflow import bind

    n = len(workers)
    src = Counter("src", count)
    prev = src["gen::out"]
    stages = [StageSpec([src["gen"]])]
    mods = []
    for k in range(1, n - 1):
        m = middle(k) if middle is not None else Affine(f"a{k}", 2, k, count=count)
        bind(m["run::in"], prev)
        prev = m["run::out"]
        mods.append(m)
        stages.append(StageSpec([m["run"]], workers=workers[k]))
    sink = Recorder("sink", count=count)
    bind(sink["store::in0"], prev)
    stages.append(StageSpec([sink["store"]], workers=workers[-1]))
    plan = PipelinePlan(src["gen"], stages, capacity, wait_mode, copy_mode)
    return build_pipeline(plan), src, mods, sink


def expected_linear(n_frames, n_stages, count=4):
    """Frames a linear pipeline's sink must see (sequential oracle)."""
    out = []
    for g in range(n_frames):
        v = g
        for k in range(1, n_stages - 1):
            v = 2 * v + k
        out.append([v] * count)
    return out
