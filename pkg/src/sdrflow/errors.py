"""Exception hierarchy.

``Abort`` is deliberately *not* part of the error hierarchy: it is a control
signal that restarts the current sequence pass, not a failure.
"""
from __future__ import annotations


class Abort(Exception):
    """Raised by a task body to stop the current pass and restart it."""


class SdrflowError(Exception):
    """Base class for every runtime error."""


# -- binding ---------------------------------------------------------------

class BindError(SdrflowError):
    pass


class AlreadyBound(BindError):
    pass


class TypeMismatch(BindError):
    pass


class SelfBind(BindError):
    pass


# -- execution -------------------------------------------------------------

class UnboundInput(SdrflowError):
    pass


class TaskFailure(SdrflowError):
    """A task body raised something other than :class:`Abort`."""

    def __init__(self, task_id: str, cause: BaseException | None = None):
        self.task_id = task_id
        self.cause = cause
        msg = f"task {task_id!r} failed"
        if cause is not None:
            msg += f": {type(cause).__name__}: {cause}"
        super().__init__(msg)


# -- sequence analysis -----------------------------------------------------

class SequenceError(SdrflowError):
    pass


class Cycle(SequenceError):
    pass


class Unreachable(SequenceError):
    pass


class DanglingInput(SequenceError):
    pass


# -- switcher --------------------------------------------------------------

class PathOutOfRange(SdrflowError):
    pass


class SelectedInputEmpty(SdrflowError):
    pass


# -- replication -----------------------------------------------------------

class NotCloneable(SdrflowError):
    def __init__(self, module_name: str, task_id: str | None = None):
        self.module_name = module_name
        self.task_id = task_id
        where = f" (task {task_id!r})" if task_id else ""
        super().__init__(f"module {module_name!r}{where} is sequential-only and cannot be cloned")


class PinningInvalid(SdrflowError):
    pass


# -- pipeline --------------------------------------------------------------

class PlanError(SdrflowError):
    pass


class BadPartition(PlanError):
    pass


class CapacityZero(PlanError):
    pass


class Shutdown(SdrflowError):
    """Raised inside adaptor waits when the pipeline is being torn down."""


# -- bench -----------------------------------------------------------------

class SpecInconsistent(SdrflowError):
    pass
