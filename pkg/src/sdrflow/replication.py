"""Sequence duplication: independent per-worker copies of modules and state.

Each replica gets clones of every module of the sequence (tasks, sockets
and private state), re-bound among themselves with the original schedule.
Inputs fed from outside the sequence stay bound to the original producer,
which replicas only read.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence as Seq

import numpy as np

from .affinity import pin_current_thread, validate_pinning
from .errors import NotCloneable
from .graph import Cloneability, Module, Task, bind


@dataclass
class CloneSpec:
    replica_count: int = 1
    pinning: list[int] | None = None

    def __post_init__(self):
        if self.replica_count < 1:
            raise ValueError("replica_count must be >= 1")


@dataclass
class ReplicaSet:
    replicas: list = field(default_factory=list)
    # per replica: id(replica task) -> original task
    provenance: list[dict[int, Task]] = field(default_factory=list)
    pinning: list[int] | None = None

    def original_of(self, replica_index: int, task: Task) -> Task:
        return self.provenance[replica_index][id(task)]


def clone_module(m: Module) -> Module:
    return m.clone()


def check_cloneable(tasks: Iterable[Task]) -> None:
    """Raise :class:`NotCloneable` for the first sequential-only module met."""
    for t in tasks:
        if t.module.cloneability is Cloneability.SEQUENTIAL_ONLY:
            raise NotCloneable(t.module.name, t.id)


def _replicate(seq) -> tuple[Any, dict[int, Task]]:
    module_map = {id(m): m.clone() for m in seq.modules}
    task_map: dict[int, Task] = {}
    for t in seq.tasks:
        task_map[id(t)] = module_map[id(t.module)].tasks[t.name]
    for t in seq.tasks:
        new = task_map[id(t)]
        by_name = {s.name: s for s in t.inputs}
        # replay the original binding order so introspection matches
        for name in t.binding_order:
            s = by_name.get(name)
            if s is None or s.source is None:
                continue
            src = s.source
            if id(src.task) in task_map:
                src = task_map[id(src.task)][src.name]
            bind(new[s.name], src)
    replica = seq._remapped(task_map, module_map)
    return replica, {id(task_map[id(orig)]): orig for orig in seq.tasks}


def duplicate_sequence(seq, spec: CloneSpec) -> ReplicaSet:
    """Build ``spec.replica_count`` independent copies of ``seq``.

    With pinning, each copy is created from a thread already pinned to its
    target unit so that freshly allocated buffers are first touched there.
    """
    check_cloneable(seq.tasks)
    pins = validate_pinning(spec.pinning, spec.replica_count)
    out = ReplicaSet(pinning=pins)
    for r in range(spec.replica_count):
        if pins is None:
            rep, prov = _replicate(seq)
        else:
            box: list = []

            def work(cpu=pins[r]):
                try:
                    pin_current_thread(cpu)
                    box.append(_replicate(seq))
                except BaseException as exc:
                    box.append(exc)

            th = threading.Thread(target=work, name=f"clone-{r}")
            th.start()
            th.join()
            if isinstance(box[0], BaseException):
                raise box[0]
            rep, prov = box[0]
        out.replicas.append(rep)
        out.provenance.append(prov)
    return out


# -- isolation audit ---------------------------------------------------------

def _writable_storage(seq) -> tuple[list[tuple[int, int, str]], dict[int, str]]:
    arrays: list[tuple[int, int, str]] = []
    objects: dict[int, str] = {}

    def add_array(a: np.ndarray, label: str) -> None:
        if a.flags.writeable and a.nbytes:
            ptr = a.__array_interface__["data"][0]
            arrays.append((ptr, ptr + a.nbytes, label))

    for t in seq.tasks:
        for s in t.outputs:
            add_array(s.data, s.id)
    for m in seq.modules:
        for key, value in vars(m).items():
            label = f"{m.name}.{key}"
            if isinstance(value, np.ndarray):
                add_array(value, label)
            elif isinstance(value, (bytearray, list, dict, set, np.random.Generator)):
                objects[id(value)] = label
    return arrays, objects


def audit_isolation(replicas: Seq) -> list[str]:
    """Writable storage reachable from two replicas (empty list if isolated)."""
    problems = []
    seen_arrays: list[tuple[int, int, str, int]] = []
    seen_objects: dict[int, tuple[str, int]] = {}
    for r, seq in enumerate(replicas):
        arrays, objects = _writable_storage(seq)
        for lo, hi, label in arrays:
            for lo2, hi2, label2, r2 in seen_arrays:
                if r2 != r and lo < hi2 and lo2 < hi:
                    problems.append(f"replica {r} {label} overlaps replica {r2} {label2}")
        seen_arrays.extend((lo, hi, label, r) for lo, hi, label in arrays)
        for oid, label in objects.items():
            prev = seen_objects.get(oid)
            if prev is not None and prev[1] != r:
                problems.append(f"replica {r} {label} is shared with replica {prev[1]} {prev[0]}")
            seen_objects.setdefault(oid, (label, r))
    return problems
