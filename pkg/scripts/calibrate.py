#!/usr/bin/env python3
"""Full-length dry run of every quantity the acceptance gate checks.

Prints the measured numbers so thresholds can be sanity-checked before the
acceptance suite is considered final.
"""
import sys
import time

import numpy as np

from semoff.config import SystemConfig
from semoff import engine


def run(scenario, policy, seed=1):
    t0 = time.time()
    log = engine.run_scenario(SystemConfig(), scenario(policy=policy, seed=seed))
    print(f"  {scenario.__name__}/{policy}: {time.time()-t0:.1f}s "
          f"qL={log.tail_mean('q_local'):.3f} qE={log.tail_mean('q_edge'):.3f} "
          f"P={log.tail_mean('p_total'):.4f} viol={log.bound_violations}")
    return log


def stabilization_window(log, width=1000):
    series = log.window_means("q_local", width) * log.num_devices \
        + log.window_means("q_edge", width) * log.num_devices
    final = series[-1]
    for w, m in enumerate(series):
        if abs(m - final) <= 0.1 * max(final, 1e-9):
            ok = True
            return w, series
    return len(series), series


def main():
    print("== scenario I ==")
    s1 = {}
    for pol in ("exhaustive", "drlh:64", "drlh:16", "drlh:8", "random"):
        s1[pol] = run(engine.scenario_one, pol)
    print("== scenario II ==")
    s2 = {}
    for pol in ("exhaustive", "drlh:64", "drlh:16", "drlh:8", "random"):
        s2[pol] = run(engine.scenario_two, pol)

    print("== near-optimality (tail power vs exhaustive) ==")
    for name, d in (("I", s1), ("II", s2)):
        pe = d["exhaustive"].tail_mean("p_total")
        for pol in ("drlh:64", "drlh:16", "drlh:8", "random"):
            p = d[pol].tail_mean("p_total")
            print(f"  scen {name} {pol}: {p:.4f} vs {pe:.4f} -> {100*(p/pe-1):+.2f}%")

    print("== scenario II stabilization ordering (sum queue) ==")
    for pol in ("drlh:64", "drlh:16", "drlh:8"):
        w, series = stabilization_window(s2[pol])
        print(f"  {pol}: stabilizes at window {w}; peak={series.max():.1f} "
              f"first={series[0]:.1f} final={series[-1]:.1f}")
        print("   windows:", np.round(series, 1))

    print("== queue-cap satisfaction, scenario I ==")
    for pol in ("exhaustive", "drlh:64"):
        log = s1[pol]
        per_dev_l = log.tail_mean_per_device("q_local")
        per_dev_e = log.tail_mean_per_device("q_edge")
        print(f"  {pol}: max device qL={per_dev_l.max():.3f} (cap 5), "
              f"qE={per_dev_e.max():.3f} (cap 1)")

    print("== losses ==")
    for name, d in (("I", s2), ):
        pass
    for name, d in (("I", s1), ("II", s2)):
        for pol in ("drlh:64", "drlh:16", "drlh:8"):
            log = d[pol]
            test_w = log.window_means("test_loss")
            train_tail = float(np.nanmean(log.train_loss[log.tail_start:]))
            print(f"  scen {name} {pol}: test first={test_w[0]:.4f} "
                  f"final_third={float(np.nanmean(log.test_loss[log.tail_start:])):.4f} "
                  f"train_tail={train_tail:.4f} "
                  f"nan={int(np.sum(~np.isfinite(log.test_loss)))}")

    print("== random baseline dominance ==")
    for name, d in (("I", s1), ("II", s2)):
        for metric in ("q_local", "p_total"):
            a = d["drlh:64"].tail_mean(metric)
            b = d["random"].tail_mean(metric)
            print(f"  scen {name} {metric}: drlh64={a:.4f} random={b:.4f} ok={a < b}")

    print("== arrival sweep (exhaustive) ==")
    t0 = time.time()
    rows = engine.sweep("arrival", [50, 100, 200, 500, 750], SystemConfig(),
                        policy="exhaustive", seed=1)
    for r in rows:
        print(f"  lam={r['value']}: qL={r['tail_mean_q_local_per_device']:.3f} "
              f"qE={r['tail_mean_q_edge_per_device']:.3f} P={r['tail_mean_power_w']:.4f}")
    print(f"  ({time.time()-t0:.0f}s)")

    print("== v sweep scenario II (exhaustive) ==")
    base2 = engine.scenario_two(policy="exhaustive", seed=1)
    cfg2 = base2.apply(SystemConfig())
    rows = engine.sweep("v", [0.5, 1, 2, 4, 8], cfg2, policy="exhaustive", seed=1)
    for r in rows:
        print(f"  v={r['value']}: sumQ={r['tail_mean_sum_queue']:.2f} "
              f"P={r['tail_mean_power_w']:.4f}")

    print("== v sweep scenario I (exhaustive) ==")
    base1 = engine.scenario_one(policy="exhaustive", seed=1)
    cfg1 = base1.apply(SystemConfig())
    rows = engine.sweep("v", [0.5, 1, 2, 4, 8], cfg1, policy="exhaustive", seed=1)
    for r in rows:
        print(f"  v={r['value']}: sumQ={r['tail_mean_sum_queue']:.2f} "
              f"P={r['tail_mean_power_w']:.4f}")


if __name__ == "__main__":
    sys.exit(main())
