"""Streaming dataflow runtime for signal-processing chains.

Modules own tasks; tasks exchange fixed-size frames through typed sockets.
A :class:`Sequence` statically schedules a bound region of the task graph
and executes it repeatedly; switchers add loops and conditionals, sequence
duplication runs independent copies in parallel, and pipelines split a chain
into stages connected by order-preserving adaptors.
"""
from __future__ import annotations

from .errors import (
    Abort,
    AlreadyBound,
    BadPartition,
    BindError,
    CapacityZero,
    Cycle,
    DanglingInput,
    NotCloneable,
    PathOutOfRange,
    PinningInvalid,
    PlanError,
    SdrflowError,
    SelectedInputEmpty,
    SelfBind,
    SequenceError,
    Shutdown,
    SpecInconsistent,
    TaskFailure,
    TypeMismatch,
    UnboundInput,
    Unreachable,
)
from .graph import (
    Cloneability,
    FrameBuffer,
    Module,
    Socket,
    SocketDir,
    Task,
    TaskKind,
    TaskStatus,
    audit_bindings,
    bind,
    collect_tasks,
    dump_graph,
    execute_task,
)
from .replication import CloneSpec, ReplicaSet, audit_isolation, clone_module, duplicate_sequence
from .sequence import ExecStats, Sequence, SubSequence, TaskStats, build_sequence, exec_stats, write_stats_csv
from .switcher import (
    CyclicControl,
    DataControl,
    ForLoopControl,
    Switcher,
    make_cyclic_control,
    make_for_control,
)

__version__ = "0.1.0"
