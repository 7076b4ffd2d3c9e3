"""Run the toy transceiver sequentially and pipelined, then compare the sinks."""
from __future__ import annotations

import json
import pathlib

from sdrflow.demo import ChainConfig, run_chain

plan = json.loads((pathlib.Path(__file__).parent / "plan_4stage.json").read_text())
cfg = ChainConfig(k=512, rep=3, ebn0_db=2.0, frames=2000, seed=4)

seq = run_chain(cfg)
print("sequential:", seq.summary())
pipe = run_chain(cfg, plan)
print("pipelined: ", pipe.summary())
print("sink identical:", seq.sink == pipe.sink)
for st in pipe.pipeline.stages:
    sh = st.shares()
    print(f"  stage {st.index} x{st.workers}: task {sh['task_time']:.1f}%  "
          f"waits {sh['pull_wait'] + sh['push_wait']:.1f}%")
