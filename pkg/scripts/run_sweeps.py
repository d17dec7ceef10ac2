#!/usr/bin/env python3
"""Reproduce the three parameter sweeps (task arrival rate, penalty weight
in both scenarios, user count) and write plot-ready CSV tables."""
import argparse
import sys
from pathlib import Path

from semoff import engine
from semoff.config import SystemConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/sweeps")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--policy", default="exhaustive")
    ap.add_argument("--slots", type=int, default=None)
    args = ap.parse_args()

    cfg = SystemConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    slots = args.slots if args.slots is not None else engine.INHERIT

    rows = engine.sweep("arrival", [50, 100, 200, 500, 750], cfg,
                        policy=args.policy, seed=args.seed, total_slots=slots)
    engine.sweep_to_csv(rows, out / "sweep_arrival.csv")
    print(f"arrival sweep -> {out / 'sweep_arrival.csv'}")

    cfg1 = engine.scenario_one(policy=args.policy, seed=args.seed).apply(cfg)
    rows = engine.sweep("v", [0.5, 1, 2, 4, 8], cfg1, policy=args.policy,
                        seed=args.seed, total_slots=slots)
    engine.sweep_to_csv(rows, out / "sweep_v_scenario1.csv")
    print(f"penalty-weight sweep (scenario 1) -> {out / 'sweep_v_scenario1.csv'}")

    cfg2 = engine.scenario_two(policy=args.policy, seed=args.seed).apply(cfg)
    rows = engine.sweep("v", [0.5, 1, 2, 4, 8], cfg2, policy=args.policy,
                        seed=args.seed, total_slots=slots)
    engine.sweep_to_csv(rows, out / "sweep_v_scenario2.csv")
    print(f"penalty-weight sweep (scenario 2) -> {out / 'sweep_v_scenario2.csv'}")

    rows = engine.sweep("users", [4, 6, 8, 10, 12], cfg, policy=args.policy,
                        seed=args.seed, total_slots=slots)
    engine.sweep_to_csv(rows, out / "sweep_users.csv")
    print(f"user-count sweep -> {out / 'sweep_users.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
