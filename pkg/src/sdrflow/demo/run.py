"""Running the demo chain sequentially or as a pipeline."""
from __future__ import annotations

from dataclasses import dataclass
from time import perf_counter_ns

from ..pipeline import Pipeline, PipelineStats, plan_from_dict
from .chain import Chain, ChainConfig, build_chain, default_plan_dict


@dataclass
class ChainResult:
    frames: int
    fer: float
    ber: float
    bit_errors: int
    wall_s: float
    throughput_mbps: float
    sink: bytes
    generations: list[int]
    pipeline: PipelineStats | None = None

    def summary(self) -> str:
        return (f"frames={self.frames} FER={self.fer:.3e} BER={self.ber:.3e} "
                f"throughput={self.throughput_mbps:.3f} Mb/s time={self.wall_s:.3f} s")


def run_chain(cfg: ChainConfig, plan: dict | None = None, *, chain: Chain | None = None,
              timeout: float | None = None) -> ChainResult:
    """Process ``cfg.frames`` frames; ``plan=None`` runs a single sequence."""
    chain = chain or build_chain(cfg)
    stats = None
    if plan is None:
        seq = chain.sequence()
        t0 = perf_counter_ns()
        if cfg.frames:
            seq.exec_n(cfg.frames)
        wall = perf_counter_ns() - t0
    else:
        pipe = Pipeline(plan_from_dict(plan, chain.tasks))
        t0 = perf_counter_ns()
        stats = pipe.exec(max_frames=cfg.frames, timeout=timeout, bits_per_frame=cfg.k)
        wall = perf_counter_ns() - t0
    mon = chain.monitor
    wall_s = wall / 1e9
    mbps = mon.frames_seen * cfg.k / wall_s / 1e6 if wall_s > 0 else 0.0
    return ChainResult(mon.frames_seen, mon.fer, mon.ber, mon.bit_errors, wall_s, mbps,
                       chain.sink.data(), list(chain.sink.generations), stats)


def run_pipelined(cfg: ChainConfig, workers: int = 1, **plan_kw) -> ChainResult:
    return run_chain(cfg, default_plan_dict(workers, **plan_kw))
