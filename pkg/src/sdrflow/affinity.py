"""Thread-to-CPU pinning with a no-op fallback where affinity is unsupported."""
from __future__ import annotations

import os
from typing import Sequence

from .errors import PinningInvalid

_HAS_AFFINITY = hasattr(os, "sched_setaffinity")


def available_cpus() -> list[int]:
    if _HAS_AFFINITY:
        return sorted(os.sched_getaffinity(0))
    return list(range(os.cpu_count() or 1))


def physical_cores() -> int:
    """Distinct physical cores among the usable CPUs (SMT siblings count once)."""
    cores = set()
    for cpu in available_cpus():
        base = f"/sys/devices/system/cpu/cpu{cpu}/topology/"
        try:
            with open(base + "physical_package_id") as a, open(base + "core_id") as b:
                cores.add((a.read().strip(), b.read().strip()))
        except OSError:
            cores.add(("cpu", str(cpu)))
    return max(1, len(cores))


def validate_pinning(pinning: Sequence[int] | None, n_workers: int) -> list[int] | None:
    if pinning is None:
        return None
    pins = [int(p) for p in pinning]
    if len(pins) != n_workers:
        raise PinningInvalid(f"pinning lists {len(pins)} units for {n_workers} workers")
    allowed = set(available_cpus())
    bad = [p for p in pins if p not in allowed]
    if bad:
        raise PinningInvalid(f"execution units {bad} not available (allowed: {sorted(allowed)})")
    return pins


def pin_current_thread(cpu: int | None) -> None:
    """Restrict the calling thread to ``cpu`` (Linux: per-thread affinity)."""
    if cpu is None or not _HAS_AFFINITY:
        return
    os.sched_setaffinity(0, {int(cpu)})
