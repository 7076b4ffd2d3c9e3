"""Pipeline parallelism: stages, adaptors and plans."""
from __future__ import annotations

from .adaptor import ACTIVE, COPYLESS, DEEP_COPY, PASSIVE, Adaptor, PullEndpoint, PushEndpoint
from .pipeline import Pipeline, PipelineStats, Stage, StageStats, build_pipeline
from .plan import PipelinePlan, StageSpec, load_plan, plan_from_dict

__all__ = [
    "ACTIVE", "PASSIVE", "DEEP_COPY", "COPYLESS", "Adaptor", "PushEndpoint", "PullEndpoint",
    "Pipeline", "PipelineStats", "Stage", "StageStats", "build_pipeline",
    "PipelinePlan", "StageSpec", "load_plan", "plan_from_dict",
]
