"""Pipeline plans: stage partition, replica counts and hand-off policy."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from ..errors import CapacityZero, PlanError
from ..graph import Task
from .adaptor import ACTIVE, COPYLESS, DEEP_COPY, PASSIVE


@dataclass
class StageSpec:
    first_tasks: list[Task]
    last_tasks: list[Task] = field(default_factory=list)
    workers: int = 1
    pinning: list[int] | None = None

    def __post_init__(self):
        if isinstance(self.first_tasks, Task):
            self.first_tasks = [self.first_tasks]
        if isinstance(self.last_tasks, Task):
            self.last_tasks = [self.last_tasks]
        if not self.first_tasks:
            raise PlanError("a stage needs at least one first task")
        if self.workers < 1:
            raise PlanError("worker count must be >= 1")


@dataclass
class PipelinePlan:
    entry_task: Task
    stages: list[StageSpec]
    buffer_capacity: int = 1
    wait_mode: str = PASSIVE
    copy_mode: str = COPYLESS

    def __post_init__(self):
        if self.buffer_capacity < 1:
            raise CapacityZero("adaptor capacity must be >= 1")
        if self.wait_mode not in (ACTIVE, PASSIVE):
            raise PlanError(f"unknown wait mode {self.wait_mode!r}")
        if self.copy_mode not in (DEEP_COPY, COPYLESS):
            raise PlanError(f"unknown copy mode {self.copy_mode!r}")
        if not self.stages:
            raise PlanError("a plan needs at least one stage")


def plan_from_dict(cfg: dict[str, Any], tasks: Iterable[Task]) -> PipelinePlan:
    """Build a plan whose tasks are named ``"module.task"``.

    Recognized keys: ``entry``, ``stages`` (each with ``first``, ``last``,
    ``workers``, ``pinning``), ``capacity``, ``wait_mode``, ``copy_mode``.
    """
    by_id = {t.id: t for t in tasks}

    def look(name: str) -> Task:
        try:
            return by_id[name]
        except KeyError:
            raise PlanError(f"plan names unknown task {name!r}; known: {sorted(by_id)}") from None

    stages = []
    for st in cfg["stages"]:
        stages.append(StageSpec(
            [look(n) for n in st["first"]],
            [look(n) for n in st.get("last", [])],
            int(st.get("workers", 1)),
            st.get("pinning"),
        ))
    entry = look(cfg["entry"]) if "entry" in cfg else stages[0].first_tasks[0]
    return PipelinePlan(entry, stages, int(cfg.get("capacity", 1)),
                        cfg.get("wait_mode", PASSIVE), cfg.get("copy_mode", COPYLESS))


def load_plan(path: str | Path, tasks: Iterable[Task]) -> PipelinePlan:
    with open(path) as fh:
        return plan_from_dict(json.load(fh), tasks)
