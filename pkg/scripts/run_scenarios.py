#!/usr/bin/env python3
"""Run the benchmark matrix (both scenarios x all policy sources) and write
one run directory per combination under out/scenarios/."""
import argparse
import sys
import time
from pathlib import Path

from semoff import engine
from semoff.config import SystemConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/scenarios")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--slots", type=int, default=None)
    ap.add_argument("--policies", default="exhaustive,drlh:64,drlh:16,drlh:8,random")
    args = ap.parse_args()

    cfg = SystemConfig()
    slots = args.slots if args.slots is not None else engine.INHERIT
    for preset in (engine.scenario_one, engine.scenario_two):
        for policy in args.policies.split(","):
            scenario = preset(policy=policy, seed=args.seed, total_slots=slots)
            t0 = time.time()
            log = engine.run_scenario(cfg, scenario)
            outdir = Path(args.out) / f"{scenario.name}_{policy.replace(':', '')}"
            engine.write_run_outputs(outdir, log, scenario.apply(cfg), scenario)
            print(f"{scenario.name} {policy}: {time.time() - t0:.1f}s, "
                  f"tail power {log.tail_mean('p_total'):.4f} W, "
                  f"tail queue {log.tail_mean('q_local'):.3f}/{log.tail_mean('q_edge'):.3f} "
                  f"-> {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
