"""``sdr-demo`` command line entry point."""
from __future__ import annotations

import argparse
import json

from .chain import ChainConfig, default_plan_dict
from .run import run_chain


def parse_args(argv=None) -> argparse.Namespace:
    p = argparse.ArgumentParser(prog="sdr-demo", description="Toy software-radio transceiver.")
    p.add_argument("--k", type=int, default=256, help="information bits per frame")
    p.add_argument("--rep", type=int, default=3, help="repetition factor (odd)")
    p.add_argument("--ebn0", type=float, default=4.0, help="Eb/N0 in dB ('inf' for noiseless)")
    p.add_argument("--frames", type=int, default=1000, help="frames to process")
    p.add_argument("--plan", default=None,
                   help="pipeline plan (JSON file); 'default' for the built-in 4-stage plan")
    p.add_argument("--workers", type=int, default=1,
                   help="replicas of the decoding stage when --plan default is used")
    p.add_argument("--sequential", action="store_true", help="ignore --plan and run one sequence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None, help="per-stage statistics CSV")
    return p.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    cfg = ChainConfig(k=args.k, rep=args.rep, ebn0_db=args.ebn0, seed=args.seed,
                      frames=args.frames)
    plan = None
    if not args.sequential and args.plan is not None:
        if args.plan == "default":
            plan = default_plan_dict(args.workers)
        else:
            with open(args.plan) as fh:
                plan = json.load(fh)
    res = run_chain(cfg, plan)
    print(res.summary())
    if res.pipeline is not None:
        for st in res.pipeline.stages:
            sh = st.shares()
            print(f"  stage {st.index} x{st.workers}: task {sh['task_time']:5.1f}%  "
                  f"pull wait {sh['pull_wait']:5.1f}%  push wait {sh['push_wait']:5.1f}%  "
                  f"copy {sh['push_copy'] + sh['pull_copy']:5.1f}%")
        if args.csv:
            res.pipeline.write_csv(args.csv)
    elif args.csv:
        print("(no per-stage statistics for a sequential run)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
