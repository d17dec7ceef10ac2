"""Time-slot simulation loop binding channels, policy selection, solving,
queue updates, training, and metric collection.

RNG discipline: every random ingredient draws from its own named stream
derived from the master seed, and the per-slot streams (channel, arrivals,
random policy) are keyed by slot index, so replays are order-independent
and toggling one feature never perturbs another stream.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import actor, channel, critic, oracle, power, queueing
from .config import (Policy, SlotOutcome, SlotState, SystemConfig,
                     config_to_dict, validate_config)

# Named RNG streams (master seed, stream id[, slot]).
STREAM_PLACEMENT = 0
STREAM_ACTOR_INIT = 1
STREAM_ACTOR_NOISE = 2
STREAM_MEMORY = 3
STREAM_CHANNEL = 4
STREAM_ARRIVALS = 5
STREAM_RANDOM_POLICY = 6
STREAM_STATIC_SHADOW = 7

INHERIT: Any = object()  # scenario fields left at the base config


def parse_policy_spec(spec: str) -> tuple[str, int]:
    """Parse 'drlh:N' | 'exhaustive' | 'random' into (kind, candidates)."""
    if spec.startswith("drlh"):
        parts = spec.split(":")
        if len(parts) == 2 and parts[1].isdigit() and int(parts[1]) >= 1:
            return "drlh", int(parts[1])
        raise ValueError(f"bad policy spec {spec!r}; expected drlh:N with N >= 1")
    if spec in ("exhaustive", "random"):
        return spec, 0
    raise ValueError(f"unknown policy spec {spec!r}")


@dataclass(frozen=True)
class Scenario:
    """Named bundle of run settings layered over a base config."""

    name: str = "custom"
    policy: str = "drlh:64"
    seed: int = 1
    arrival_rate_per_sec: Any = INHERIT
    q_max_local: Any = INHERIT   # None = unbounded
    q_max_edge: Any = INHERIT
    total_slots: Any = INHERIT

    def apply(self, cfg: SystemConfig) -> SystemConfig:
        sys_updates: dict[str, Any] = {}
        for name in ("arrival_rate_per_sec", "q_max_local", "q_max_edge"):
            value = getattr(self, name)
            if value is not INHERIT:
                sys_updates[name] = value
        tr_updates: dict[str, Any] = {}
        if self.total_slots is not INHERIT:
            tr_updates["total_slots"] = self.total_slots
        out = cfg
        if sys_updates:
            out = dataclasses.replace(out, system=dataclasses.replace(out.system, **sys_updates))
        if tr_updates:
            out = dataclasses.replace(out, training=dataclasses.replace(out.training, **tr_updates))
        return out

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "policy": self.policy,
                               "seed": self.seed}
        for name in ("arrival_rate_per_sec", "q_max_local", "q_max_edge",
                     "total_slots"):
            value = getattr(self, name)
            if value is not INHERIT:
                out[name] = value
        return out


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    known = {"name", "policy", "seed", "arrival_rate_per_sec", "q_max_local",
             "q_max_edge", "total_slots"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown key(s) in 'scenario': {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        kwargs[key] = value
    return Scenario(**kwargs)


def scenario_one(policy: str = "drlh:64", seed: int = 1,
                 total_slots: Any = INHERIT) -> Scenario:
    """Moderate load: 100 tasks/s, queue caps 5 (device) and 1 (edge)."""
    return Scenario(name="scenario1", policy=policy, seed=seed,
                    arrival_rate_per_sec=100.0, q_max_local=5.0,
                    q_max_edge=1.0, total_slots=total_slots)


def scenario_two(policy: str = "drlh:64", seed: int = 1,
                 total_slots: Any = INHERIT) -> Scenario:
    """High load: 750 tasks/s, unbounded queue caps."""
    return Scenario(name="scenario2", policy=policy, seed=seed,
                    arrival_rate_per_sec=750.0, q_max_local=None,
                    q_max_edge=None, total_slots=total_slots)


SCENARIO_PRESETS = {"1": scenario_one, "2": scenario_two,
                    "scenario1": scenario_one, "scenario2": scenario_two}


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

_PER_DEVICE_SERIES = ("arrivals", "q_local", "q_edge", "z_local", "z_edge",
                      "u_edge", "u_cloud", "mu_local", "mu_edge",
                      "h2_edge", "h2_cloud")
_SCALAR_SERIES = ("p_local", "p_edge", "p_tx_edge", "p_tx_cloud", "p_total",
                  "g_value", "dpp", "bound", "test_loss", "train_loss")


class MetricsLog:
    """Per-slot records of one run plus windowed/tail reductions."""

    def __init__(self, total_slots: int, num_devices: int):
        self.total_slots = total_slots
        self.num_devices = num_devices
        for name in _PER_DEVICE_SERIES:
            setattr(self, name, np.zeros((total_slots, num_devices)))
        for name in _SCALAR_SERIES:
            setattr(self, name, np.full(total_slots, np.nan))
        self.policy_edge = np.zeros(total_slots, dtype=np.int64)
        self.policy_cloud = np.zeros(total_slots, dtype=np.int64)
        self.num_candidates = np.zeros(total_slots, dtype=np.int64)
        self.bound_violations = 0
        self.train_steps = 0

    def window_means(self, name: str, width: int = 1000) -> np.ndarray:
        """Means of consecutive full windows; device series average devices too."""
        series = getattr(self, name)
        n_windows = len(series) // width
        out = np.empty(n_windows)
        for w in range(n_windows):
            chunk = series[w * width:(w + 1) * width]
            out[w] = np.nanmean(chunk)
        return out

    @property
    def tail_start(self) -> int:
        return self.total_slots - self.total_slots // 3

    def tail_mean(self, name: str) -> float:
        """Mean over the stabilized tail (final third of the run)."""
        return float(np.nanmean(getattr(self, name)[self.tail_start:]))

    def tail_mean_per_device(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name)[self.tail_start:]).mean(axis=0)

    def sum_queue(self) -> np.ndarray:
        """System total backlog (local plus edge) per slot."""
        return self.q_local.sum(axis=1) + self.q_edge.sum(axis=1)

    def to_csv(self, path: str | Path) -> None:
        header = ["slot"]
        for name in _PER_DEVICE_SERIES:
            header += [f"{name}_{i}" for i in range(self.num_devices)]
        header += list(_SCALAR_SERIES)
        header += ["policy_edge_mask", "policy_cloud_mask", "num_candidates"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.total_slots):
                row: list[str] = [str(t)]
                for name in _PER_DEVICE_SERIES:
                    row += [repr(float(v)) for v in getattr(self, name)[t]]
                row += [repr(float(getattr(self, name)[t])) for name in _SCALAR_SERIES]
                row += [str(int(self.policy_edge[t])), str(int(self.policy_cloud[t])),
                        str(int(self.num_candidates[t]))]
                writer.writerow(row)

    def loss_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "train_loss", "test_loss"])
            for t in range(self.total_slots):
                writer.writerow([str(t), repr(float(self.train_loss[t])),
                                 repr(float(self.test_loss[t]))])

    def channels_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "device", "h2_edge", "h2_cloud"])
            for t in range(self.total_slots):
                for i in range(self.num_devices):
                    writer.writerow([str(t), str(i),
                                     repr(float(self.h2_edge[t, i])),
                                     repr(float(self.h2_cloud[t, i]))])


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream)))


class Simulation:
    """One run: a config, a policy source, a seed, and the slot loop."""

    def __init__(self, cfg: SystemConfig, policy_spec: str, seed: int,
                 workers: int = 1):
        problems = validate_config(cfg)
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))
        self.cfg = cfg
        self.seed = seed
        self.workers = workers
        self.policy_spec = policy_spec
        self.kind, self.n_candidates = parse_policy_spec(policy_spec)
        n = cfg.system.num_devices

        self.geometry = channel.place_devices(cfg, _rng(seed, STREAM_PLACEMENT))
        self.static_shadow = (None if cfg.channel.shadowing_per_slot else
                              channel.draw_static_shadow(cfg, _rng(seed, STREAM_STATIC_SHADOW)))
        self.caps = queueing.rate_caps(cfg)

        self.q_local = np.zeros(n)
        self.q_edge = np.zeros(n)
        self.z_local = np.zeros(n)
        self.z_edge = np.zeros(n)

        if self.kind == "exhaustive":
            self.batch = critic.PolicyBatch(*oracle.policy_table(
                n, cfg.system.chi_edge, cfg.system.chi_cloud,
                at_most=not cfg.system.exact_cardinality))
        elif self.kind == "drlh":
            self.net = actor.ActorNetwork.create(n, cfg.training.hidden_sizes,
                                                 _rng(seed, STREAM_ACTOR_INIT))
            self.opt = actor.AdaptiveMomentState()
            self.memory = actor.ReplayMemory(cfg.training.memory_size, 6 * n, 2 * n)
            self.noise_rng = _rng(seed, STREAM_ACTOR_NOISE)
            self.memory_rng = _rng(seed, STREAM_MEMORY)

    def run(self, progress: Optional[Callable[[int, int], None]] = None) -> MetricsLog:
        total = self.cfg.training.total_slots
        log = MetricsLog(total, self.cfg.system.num_devices)
        for t in range(total):
            self.run_slot(t, log)
            if progress is not None and (t + 1) % 1000 == 0:
                progress(t + 1, total)
        return log

    def _choose(self, t: int, state: SlotState,
                log: MetricsLog) -> tuple[Policy, critic.CriticResult]:
        cfg = self.cfg
        if self.kind == "exhaustive":
            idx, _ = self.batch.best(state, cfg, workers=self.workers)
            chosen = self.batch.policy(idx)
            log.num_candidates[t] = len(self.batch)
        elif self.kind == "random":
            rng = channel.slot_rng(self.seed, STREAM_RANDOM_POLICY, t)
            chosen = oracle.random_policy(rng, cfg.system.num_devices,
                                          cfg.system.chi_edge, cfg.system.chi_cloud,
                                          at_most=not cfg.system.exact_cardinality)
            log.num_candidates[t] = 1
        else:
            feats = actor.featurize(state, cfg)
            relaxed = actor.relaxed_policy(self.net, feats, cfg.system.num_devices)
            edge_masks, cloud_masks = actor.generate_candidates(
                relaxed, self.n_candidates, self.noise_rng, cfg)
            idx, _ = critic.best_policy(edge_masks, cloud_masks, state, cfg,
                                        workers=self.workers)
            chosen = Policy(rho_edge=edge_masks[idx].copy(),
                            rho_cloud=cloud_masks[idx].copy())
            log.num_candidates[t] = edge_masks.shape[0]

            label = np.concatenate([chosen.rho_edge, chosen.rho_cloud]).astype(float)
            log.test_loss[t] = self.net.loss(feats, label)
            self.memory.add(feats, label)
            tr = cfg.training
            if (t >= tr.train_start_slot
                    and (t - tr.train_start_slot) % tr.train_interval == 0):
                loss = actor.train_step(self.net, self.opt, self.memory,
                                        tr.batch_size, tr.learning_rate,
                                        self.memory_rng)
                if loss is not None:
                    log.train_loss[t] = loss
                    log.train_steps += 1
        return chosen, critic.evaluate_policy(chosen, state, cfg)

    def run_slot(self, t: int, log: MetricsLog) -> SlotOutcome:
        """Advance one slot: draw channels, decide, execute, update queues."""
        cfg = self.cfg
        draw = channel.draw_channels(self.geometry, cfg,
                                     channel.slot_rng(self.seed, STREAM_CHANNEL, t),
                                     self.static_shadow)
        state = SlotState(h_edge=draw.h_edge, h_cloud=draw.h_cloud,
                          q_local=self.q_local, q_edge=self.q_edge,
                          z_local=self.z_local, z_edge=self.z_edge)
        state.check()

        chosen, result = self._choose(t, state, log)
        alloc = result.alloc
        mu_local = (np.asarray(power.local_exec_rate(alloc.f_local, cfg))
                    + alloc.u_edge + alloc.u_cloud)
        mu_edge = np.asarray(power.edge_exec_rate(alloc.f_edge, cfg))

        # backlog constraints must hold by construction; tolerate rounding only
        if np.any(mu_local > self.q_local + 1e-6) or np.any(mu_edge > self.q_edge + 1e-6):
            raise RuntimeError(f"slot {t}: executed volume exceeds backlog")
        if np.any(alloc.f_local + alloc.f_encode > cfg.system.f_local_max * (1 + 1e-9)):
            raise RuntimeError(f"slot {t}: local clock budget violated")

        p_l, p_e, p_tx_e, p_tx_c, p_total = power.total_power(alloc, chosen, state, cfg)

        arrivals = channel.slot_rng(self.seed, STREAM_ARRIVALS, t).poisson(
            cfg.mean_arrivals_per_slot, cfg.system.num_devices).astype(float)

        q_local_next = queueing.update_local_queue(self.q_local, mu_local, arrivals)
        q_edge_next = queueing.update_edge_queue(self.q_edge, mu_edge, alloc.u_edge)
        z_local_next = queueing.update_virtual_queue(self.z_local, q_local_next,
                                                     cfg.system.q_max_local)
        z_edge_next = queueing.update_virtual_queue(self.z_edge, q_edge_next,
                                                    cfg.system.q_max_edge)
        next_state = SlotState(h_edge=draw.h_edge, h_cloud=draw.h_cloud,
                               q_local=q_local_next, q_edge=q_edge_next,
                               z_local=z_local_next, z_edge=z_edge_next)

        dpp = queueing.drift_plus_penalty(state, next_state, p_total,
                                          cfg.system.lyapunov_v)
        u_cloud_cap = power.cloud_offload_cap(np.abs(draw.h_cloud) ** 2,
                                              cfg.bandwidth_cloud, cfg)
        bound = queueing.drift_penalty_bound(state, mu_local, mu_edge,
                                             alloc.u_edge, arrivals, p_total,
                                             cfg, self.caps, u_cloud_cap)
        if dpp > bound + 1e-9:
            log.bound_violations += 1

        log.arrivals[t] = arrivals
        log.q_local[t] = self.q_local
        log.q_edge[t] = self.q_edge
        log.z_local[t] = self.z_local
        log.z_edge[t] = self.z_edge
        log.u_edge[t] = alloc.u_edge
        log.u_cloud[t] = alloc.u_cloud
        log.mu_local[t] = mu_local
        log.mu_edge[t] = mu_edge
        log.h2_edge[t] = np.abs(draw.h_edge) ** 2
        log.h2_cloud[t] = np.abs(draw.h_cloud) ** 2
        log.p_local[t] = float(np.sum(p_l))
        log.p_edge[t] = float(np.sum(p_e))
        log.p_tx_edge[t] = float(np.sum(p_tx_e))
        log.p_tx_cloud[t] = float(np.sum(p_tx_c))
        log.p_total[t] = p_total
        log.g_value[t] = result.g_value
        log.dpp[t] = dpp
        log.bound[t] = bound
        e_key, c_key = chosen.key()
        log.policy_edge[t] = e_key
        log.policy_cloud[t] = c_key

        self.q_local = q_local_next
        self.q_edge = q_edge_next
        self.z_local = z_local_next
        self.z_edge = z_edge_next
        return SlotOutcome(mu_local=mu_local, mu_edge=mu_edge, p_local=p_l,
                           p_edge=p_e, p_tx_edge=p_tx_e, p_tx_cloud=p_tx_c,
                           total_power=p_total, g_value=result.g_value,
                           next_state=next_state)


def run_scenario(cfg: SystemConfig, scenario: Scenario, workers: int = 1,
                 progress: Optional[Callable[[int, int], None]] = None) -> MetricsLog:
    resolved = scenario.apply(cfg)
    sim = Simulation(resolved, scenario.policy, scenario.seed, workers=workers)
    return sim.run(progress=progress)


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

SWEEPABLE = ("arrival", "v", "users")


def sweep(parameter: str, values: list[float], cfg: SystemConfig,
          policy: str = "exhaustive", seed: int = 1,
          total_slots: Any = INHERIT, workers: int = 1,
          progress: Optional[Callable[[int, int], None]] = None) -> list[dict[str, Any]]:
    """Run one scenario per value; emit plot-ready summary rows.

    Every run shares the same master seed, so channel and arrival draws are
    comparable across values wherever dimensions match.
    """
    if parameter not in SWEEPABLE:
        raise ValueError(f"parameter must be one of {SWEEPABLE}, got {parameter!r}")
    rows: list[dict[str, Any]] = []
    for value in values:
        run_cfg = cfg
        if parameter == "arrival":
            run_cfg = dataclasses.replace(
                cfg, system=dataclasses.replace(cfg.system,
                                                arrival_rate_per_sec=float(value)))
        elif parameter == "v":
            run_cfg = dataclasses.replace(
                cfg, system=dataclasses.replace(cfg.system, lyapunov_v=float(value)))
        else:
            run_cfg = dataclasses.replace(
                cfg, system=dataclasses.replace(cfg.system, num_devices=int(value)))
        scenario = Scenario(name=f"sweep_{parameter}_{value}", policy=policy,
                            seed=seed, total_slots=total_slots)
        log = run_scenario(run_cfg, scenario, workers=workers, progress=progress)
        resolved = scenario.apply(run_cfg)
        row = {
            "parameter": parameter,
            "value": value,
            "policy": policy,
            "seed": seed,
            "slots": resolved.training.total_slots,
            "tail_mean_q_local_per_device": log.tail_mean("q_local"),
            "tail_mean_q_edge_per_device": log.tail_mean("q_edge"),
            "tail_mean_sum_queue": float(np.mean(log.sum_queue()[log.tail_start:])),
            "tail_mean_power_w": log.tail_mean("p_total"),
            "search_space_size": oracle.count_policies(
                resolved.system.num_devices, resolved.system.chi_edge,
                resolved.system.chi_cloud,
                at_most=not resolved.system.exact_cardinality),
        }
        rows.append(row)
    return rows


def sweep_to_csv(rows: list[dict[str, Any]], path: str | Path) -> None:
    if not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})


# ---------------------------------------------------------------------------
# Run directory outputs
# ---------------------------------------------------------------------------

def summarize(log: MetricsLog, cfg: SystemConfig, scenario: Scenario) -> dict[str, Any]:
    tail = {
        "q_local_per_device": log.tail_mean("q_local"),
        "q_edge_per_device": log.tail_mean("q_edge"),
        "z_local_per_device": log.tail_mean("z_local"),
        "z_edge_per_device": log.tail_mean("z_edge"),
        "sum_queue": float(np.mean(log.sum_queue()[log.tail_start:])),
        "power_w": log.tail_mean("p_total"),
        "power_local_w": log.tail_mean("p_local"),
        "power_edge_w": log.tail_mean("p_edge"),
        "power_tx_edge_w": log.tail_mean("p_tx_edge"),
        "power_tx_cloud_w": log.tail_mean("p_tx_cloud"),
        "g_value": log.tail_mean("g_value"),
    }
    with np.errstate(invalid="ignore"):
        test_tail = float(np.nanmean(log.test_loss[log.tail_start:])) \
            if np.any(np.isfinite(log.test_loss)) else None
        train_tail = float(np.nanmean(log.train_loss[log.tail_start:])) \
            if np.any(np.isfinite(log.train_loss)) else None
    return {
        "scenario": scenario.to_dict(),
        "seed": scenario.seed,
        "policy": scenario.policy,
        "total_slots": log.total_slots,
        "tail_start": log.tail_start,
        "tail_means": tail,
        "bound_violations": log.bound_violations,
        "train_steps": log.train_steps,
        "tail_mean_test_loss": test_tail,
        "tail_mean_train_loss": train_tail,
        "config": config_to_dict(cfg),
    }


def write_run_outputs(outdir: str | Path, log: MetricsLog, cfg: SystemConfig,
                      scenario: Scenario, channel_trace: bool = False) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    from .config import save_config

    save_config(cfg, out / "config.json", scenario_dict=scenario.to_dict())
    log.to_csv(out / "metrics.csv")
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summarize(log, cfg, scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if np.any(np.isfinite(log.test_loss)):
        log.loss_to_csv(out / "loss.csv")
    if channel_trace:
        log.channels_to_csv(out / "channels.csv")
