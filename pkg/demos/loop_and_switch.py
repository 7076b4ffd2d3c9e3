"""Build a for loop and a three-way switch, print their schedules and counts."""
from __future__ import annotations

import numpy as np

from sdrflow import CyclicControl, ForLoopControl, Module, Sequence, Switcher, bind


class Gen(Module):
    def __init__(self, name):
        super().__init__(name)
        self.k = 0
        t = self.create_task("gen", self._gen)
        t.create_output("out", np.int64, 4)

    def _gen(self, out):
        out[:] = self.k
        self.k += 1


class Inc(Module):
    def __init__(self, name):
        super().__init__(name)
        t = self.create_task("run", self._run)
        t.create_input("in", np.int64, 4)
        t.create_output("out", np.int64, 4)

    def _run(self, i, o):
        o[:] = i + 1


class Show(Module):
    def __init__(self, name):
        super().__init__(name)
        t = self.create_task("store", self._store)
        t.create_input("in", np.int64, 4)

    def _store(self, i):
        print(f"  {self.name} received {int(i[0])}")


def loop_demo():
    src, out = Gen("src"), Show("out")
    sw = Switcher(2, np.int64, 4, "loop")
    ctl = ForLoopControl(5, name="ctl")
    inc = Inc("inc")
    bind(sw["select::data1"], src["gen::out"])
    bind(sw["commute::data"], sw["select::data"])
    bind(sw["commute::ctrl"], ctl["iterate::ctrl"])
    bind(inc["run::in"], sw["commute::data0"])
    bind(sw["select::data0"], inc["run::out"])
    bind(out["store::in"], sw["commute::data1"])
    # an input-less control is a root of its own
    seq = Sequence([src["gen"], ctl["iterate"]])
    print("for loop (5 iterations, each adds 1):")
    for ss in seq.subsequences:
        print(f"  [{ss.kind}] " + ", ".join(t.id for t in ss.tasks))
    seq.exec_n(3)


def switch_demo():
    src, out = Gen("src2"), Show("out2")
    ctl = CyclicControl(3, name="cyc")
    sw = Switcher(3, np.int64, 4, "switch")
    bind(sw["commute::data"], src["gen::out"])
    bind(sw["commute::ctrl"], ctl["iterate::ctrl"])
    for p in range(3):
        prev = sw[f"commute::data{p}"]
        for j in range(3 - p):
            m = Inc(f"p{p}_{j}")
            bind(m["run::in"], prev)
            prev = m["run::out"]
        bind(sw[f"select::data{p}"], prev)
    bind(out["store::in"], sw["select::data"])
    seq = Sequence([src["gen"], ctl["iterate"]])
    print("switch (paths add 3, 2, 1):")
    seq.exec_n(6)


if __name__ == "__main__":
    loop_demo()
    switch_demo()
