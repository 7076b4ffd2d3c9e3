"""Toy software-radio transceiver running on the runtime."""
from __future__ import annotations

from .chain import Chain, ChainConfig, build_chain, default_plan_dict, lfsr_sequence
from .run import ChainResult, run_chain, run_pipelined

__all__ = ["Chain", "ChainConfig", "ChainResult", "build_chain", "default_plan_dict",
           "lfsr_sequence", "run_chain", "run_pipelined"]
