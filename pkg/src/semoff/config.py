"""Configuration, domain types, units, and validation shared by every module.

Unit conventions used throughout the package:

* time in seconds, frequencies in Hz, bandwidth in Hz
* powers in W, noise power spectral density in W/Hz
* task sizes in FLOP, queue lengths in tasks (real-valued, fluid model)
* channel gains as linear magnitude-squared values, SNR curves in dB

Queue lengths are real-valued because the execution-rate formulas are
continuous in the clock frequencies; arrivals stay integer Poisson draws.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np


class ConfigError(ValueError):
    """Raised for malformed config files (unknown keys, wrong types)."""


# -174 dBm/Hz thermal noise floor expressed in W/Hz.
NOISE_PSD_DEFAULT = 10.0 ** (-174.0 / 10.0) * 1e-3
# 20 dBm transmit-power ceiling expressed in W.
P_TX_MAX_DEFAULT = 10.0 ** (20.0 / 10.0) * 1e-3


@dataclass(frozen=True)
class SystemParams:
    """Device counts, queue caps, compute hardware, and solver weights."""

    num_devices: int = 8
    slot_length: float = 0.01            # s
    lyapunov_v: float = 2.0              # queue-vs-power preference weight
    arrival_rate_per_sec: float = 100.0  # Poisson mean, tasks/s per device
    q_max_local: Optional[float] = 20.0  # tasks; None = unbounded
    q_max_edge: Optional[float] = 5.0    # tasks; None = unbounded
    chi_edge: int = 4                    # max devices served by the edge server
    chi_cloud: int = 2                   # max devices served by the cloud server
    f_local_max: float = 1.2e9           # Hz
    f_edge_max: float = 1.41e9           # Hz
    flops_per_cycle_local: float = 2048.0
    flops_per_cycle_edge: float = 6912.0
    alpha_local: float = 5.787e-26       # W/Hz^3
    alpha_edge_weighted: float = 4.45e-26  # W/Hz^3, fairness weight folded in
    task_flops_encode: float = 1.2e9     # FLOP/task
    task_flops_decode: float = 3.6e9     # FLOP/task
    task_flops_total: Optional[float] = None  # defaults to encode + decode
    # "consistent": stationary points weighted exactly as the per-slot
    # objective implies (real plus virtual queue everywhere).
    # "simplified": real-queue-only weights in the frequency solvers and a
    # net-of-edge-offload weight in the cloud-volume solver.
    solver_weight_mode: str = "consistent"
    # True: association counts are exactly chi (matches the enumerated
    # search-space sizes); False: counts up to chi.
    exact_cardinality: bool = True

    def __post_init__(self) -> None:
        if self.task_flops_total is None:
            object.__setattr__(
                self, "task_flops_total",
                self.task_flops_encode + self.task_flops_decode)


@dataclass(frozen=True)
class ChannelParams:
    """Geometry, pathloss/fading parameters, bandwidths, radio limits."""

    bw_edge_total: float = 1e6           # Hz, shared uplink to the edge server
    bw_cloud_total: float = 5e4          # Hz, shared uplink to the cloud server
    noise_psd: float = NOISE_PSD_DEFAULT
    p_tx_max: float = P_TX_MAX_DEFAULT
    hotspot_radius_min: float = 50.0     # m
    hotspot_radius_max: float = 150.0    # m
    cloud_distance: float = 500.0        # m, base station offset from hotspot
    pathloss_intercept_db: float = 128.1  # urban-macro form: a + b*log10(d_km)
    pathloss_slope_db: float = 37.6
    rician_k_db: float = 3.0             # edge-link line-of-sight factor
    shadowing_std_db: float = 8.0        # cloud-link log-normal shadowing
    shadowing_per_slot: bool = True      # False: one draw per run


@dataclass(frozen=True)
class SemanticParams:
    """Task/source statistics and the accuracy-vs-SNR surrogate curve."""

    sentence_len: float = 10.0           # words/task
    symbols_per_word: float = 24.0       # semantic symbols/word
    bits_per_word: float = 40.0          # conventional source coding bits/word
    epsilon_min: float = 0.9             # accuracy floor for edge offloading
    accuracy_ceiling: float = 0.985      # logistic curve asymptote
    accuracy_slope_per_db: float = 0.5
    accuracy_midpoint_db: float = 4.0
    accuracy_table_csv: Optional[str] = None  # overrides the logistic curve
    # Shannon-consistent (2^x - 1) transmit power; False reproduces the
    # plain 2^x form.
    shannon_minus_one: bool = True
    # True: transmit exactly at the accuracy floor regardless of the
    # required accuracy (alternative reading of the accuracy constraint).
    fixed_accuracy_mode: bool = False


@dataclass(frozen=True)
class TrainingParams:
    """Actor network, replay memory, and run-length settings."""

    learning_rate: float = 1e-3
    memory_size: int = 1024
    batch_size: int = 128
    train_interval: int = 10             # slots between gradient steps
    train_start_slot: int = 256
    num_candidates: int = 64
    total_slots: int = 15000
    hidden_sizes: tuple[int, ...] = (120, 80)
    candidate_noise_std: float = 0.3
    # Feature normalisation constants (gains in dB, queues in tasks).
    feature_gain_offset_edge_db: float = -90.0
    feature_gain_offset_cloud_db: float = -115.0
    feature_gain_scale_db: float = 10.0
    feature_queue_ref: float = 10.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))


@dataclass(frozen=True)
class SystemConfig:
    """Immutable bundle of all simulator parameters.

    Safe to share across threads once validated; every run-time type below
    is a plain value.
    """

    system: SystemParams = field(default_factory=SystemParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    semantic: SemanticParams = field(default_factory=SemanticParams)
    training: TrainingParams = field(default_factory=TrainingParams)

    @property
    def chi_edge_eff(self) -> int:
        return min(self.system.chi_edge, self.system.num_devices)

    @property
    def chi_cloud_eff(self) -> int:
        return min(self.system.chi_cloud, self.system.num_devices)

    @property
    def bandwidth_edge(self) -> float:
        """Per-device edge uplink bandwidth (equal split across slots)."""
        return self.channel.bw_edge_total / max(self.chi_edge_eff, 1)

    @property
    def bandwidth_cloud(self) -> float:
        """Per-device cloud uplink bandwidth (equal split across slots)."""
        return self.channel.bw_cloud_total / max(self.chi_cloud_eff, 1)

    @property
    def mean_arrivals_per_slot(self) -> float:
        return self.system.arrival_rate_per_sec * self.system.slot_length


def validate_config(cfg: SystemConfig) -> list[str]:
    """Check every config invariant; returns one message per violation.

    Reports rather than throws so a caller can surface all problems at once.
    """
    sys_, ch, sem, tr = cfg.system, cfg.channel, cfg.semantic, cfg.training
    bad: list[str] = []

    def positive(name: str, value: float) -> None:
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            bad.append(f"{name}: must be a positive finite number, got {value!r}")

    if sys_.num_devices < 1:
        bad.append(f"num_devices: must be >= 1, got {sys_.num_devices}")
    positive("slot_length", sys_.slot_length)
    positive("lyapunov_v", sys_.lyapunov_v)
    if sys_.arrival_rate_per_sec < 0:
        bad.append("arrival_rate_per_sec: must be >= 0")
    for name in ("f_local_max", "f_edge_max", "flops_per_cycle_local",
                 "flops_per_cycle_edge", "alpha_local", "alpha_edge_weighted",
                 "task_flops_encode", "task_flops_decode"):
        positive(name, getattr(sys_, name))
    for name in ("bw_edge_total", "bw_cloud_total", "noise_psd", "p_tx_max"):
        positive(name, getattr(ch, name))
    for name in ("sentence_len", "symbols_per_word", "bits_per_word"):
        positive(name, getattr(sem, name))

    if sys_.chi_edge < 0 or sys_.chi_edge > sys_.num_devices:
        bad.append(f"chi_edge exceeds device count ({sys_.chi_edge} > {sys_.num_devices})"
                   if sys_.chi_edge > sys_.num_devices
                   else f"chi_edge: must be >= 0, got {sys_.chi_edge}")
    if sys_.chi_cloud < 0 or sys_.chi_cloud > sys_.num_devices:
        bad.append(f"chi_cloud exceeds device count ({sys_.chi_cloud} > {sys_.num_devices})"
                   if sys_.chi_cloud > sys_.num_devices
                   else f"chi_cloud: must be >= 0, got {sys_.chi_cloud}")

    for name, q_max in (("q_max_local", sys_.q_max_local),
                        ("q_max_edge", sys_.q_max_edge)):
        if q_max is not None:
            if not (math.isfinite(q_max) and q_max > 0):
                bad.append(f"{name}: must be positive and finite, or null for unbounded")
    if sys_.q_max_local is not None and sys_.q_max_local < cfg.mean_arrivals_per_slot:
        bad.append("q_max_local: must be at least the mean arrivals per slot "
                   f"({sys_.q_max_local} < {cfg.mean_arrivals_per_slot})")

    total = sys_.task_flops_total
    expect = sys_.task_flops_encode + sys_.task_flops_decode
    if total is None or total != expect:
        bad.append(f"task_flops_total: must equal task_flops_encode + task_flops_decode "
                   f"({total} != {expect})")

    if sys_.solver_weight_mode not in ("consistent", "simplified"):
        bad.append(f"solver_weight_mode: must be 'consistent' or 'simplified', "
                   f"got {sys_.solver_weight_mode!r}")

    if not (0.0 < sem.epsilon_min < 1.0):
        bad.append(f"epsilon_min: must lie in (0, 1), got {sem.epsilon_min}")
    if not (0.0 < sem.accuracy_ceiling <= 1.0):
        bad.append(f"accuracy_ceiling: must lie in (0, 1], got {sem.accuracy_ceiling}")
    if sem.epsilon_min >= sem.accuracy_ceiling:
        bad.append("epsilon_min: must be below accuracy_ceiling")
    if sem.accuracy_slope_per_db <= 0:
        bad.append("accuracy_slope_per_db: must be > 0")

    if not (0 < ch.hotspot_radius_min < ch.hotspot_radius_max):
        bad.append("hotspot_radius_min/max: need 0 < min < max")
    positive("cloud_distance", ch.cloud_distance)
    if ch.shadowing_std_db < 0:
        bad.append("shadowing_std_db: must be >= 0")

    positive("learning_rate", tr.learning_rate)
    for name in ("memory_size", "batch_size", "train_interval",
                 "num_candidates", "total_slots"):
        if getattr(tr, name) < 1:
            bad.append(f"{name}: must be >= 1")
    if tr.batch_size > tr.memory_size:
        bad.append("batch_size: must not exceed memory_size")
    positive("feature_gain_scale_db", tr.feature_gain_scale_db)
    positive("feature_queue_ref", tr.feature_queue_ref)
    return bad


# ---------------------------------------------------------------------------
# Run-time value types
# ---------------------------------------------------------------------------

@dataclass
class SlotState:
    """Observable state at the start of a slot: channels plus queue backlog."""

    h_edge: np.ndarray   # complex channel coefficients, edge links
    h_cloud: np.ndarray  # complex channel coefficients, cloud links
    q_local: np.ndarray  # tasks
    q_edge: np.ndarray   # tasks
    z_local: np.ndarray  # virtual queue enforcing the mean local-queue cap
    z_edge: np.ndarray   # virtual queue enforcing the mean edge-queue cap

    @classmethod
    def initial(cls, num_devices: int) -> "SlotState":
        zeros = np.zeros(num_devices)
        ones = np.ones(num_devices, dtype=complex)
        return cls(h_edge=ones.copy(), h_cloud=ones.copy(),
                   q_local=zeros.copy(), q_edge=zeros.copy(),
                   z_local=zeros.copy(), z_edge=zeros.copy())

    def check(self) -> None:
        n = len(self.h_edge)
        for name in ("h_cloud", "q_local", "q_edge", "z_local", "z_edge"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"SlotState.{name}: expected length {n}")
        for name in ("q_local", "q_edge", "z_local", "z_edge"):
            v = getattr(self, name)
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError(f"SlotState.{name}: queues must be finite and >= 0")


@dataclass
class Policy:
    """Binary server-association choice per device."""

    rho_edge: np.ndarray   # bool, length I
    rho_cloud: np.ndarray  # bool, length I

    def key(self) -> tuple[int, int]:
        """Compact hashable form (bitmask per half, device 0 = LSB)."""
        e = int(sum(1 << i for i, b in enumerate(self.rho_edge) if b))
        c = int(sum(1 << i for i, b in enumerate(self.rho_cloud) if b))
        return e, c


@dataclass
class RelaxedPolicy:
    """Continuous relaxation of a Policy, componentwise in [0, 1]."""

    rho_hat_edge: np.ndarray
    rho_hat_cloud: np.ndarray


@dataclass
class Allocation:
    """Continuous per-device decisions accompanying a Policy."""

    u_edge: np.ndarray    # tasks/slot offloaded to the edge server
    u_cloud: np.ndarray   # tasks/slot offloaded to the cloud server
    f_local: np.ndarray   # Hz spent executing tasks locally
    f_encode: np.ndarray  # Hz spent encoding edge-bound tasks
    f_edge: np.ndarray    # Hz spent decoding at the edge server


@dataclass
class SlotOutcome:
    """Realised rates, powers, objective value, and the post-slot state."""

    mu_local: np.ndarray
    mu_edge: np.ndarray
    p_local: np.ndarray
    p_edge: np.ndarray
    p_tx_edge: np.ndarray
    p_tx_cloud: np.ndarray
    total_power: float
    g_value: float
    next_state: SlotState


# ---------------------------------------------------------------------------
# Structured-text config file handling
# ---------------------------------------------------------------------------

_GROUPS = {
    "system": SystemParams,
    "channel": ChannelParams,
    "semantic": SemanticParams,
    "training": TrainingParams,
}
_OPTIONAL_NONE_FIELDS = {"q_max_local", "q_max_edge", "task_flops_total",
                         "accuracy_table_csv"}


def _params_from_dict(cls: type, data: dict[str, Any], group: str) -> Any:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{group}': {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        if value is None and name not in _OPTIONAL_NONE_FIELDS:
            raise ConfigError(f"'{group}.{name}' must not be null")
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any]) -> SystemConfig:
    """Build a SystemConfig from the parsed structured-text form.

    Top-level keys are the four parameter groups; a 'scenario' group is
    allowed and ignored here (see engine.scenario_from_dict). Unknown keys
    anywhere are an error.
    """
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    unknown = set(data) - set(_GROUPS) - {"scenario"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    groups = {}
    for group, cls in _GROUPS.items():
        sub = data.get(group, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"'{group}' must be an object")
        groups[group] = _params_from_dict(cls, sub, group)
    return SystemConfig(**groups)


def config_to_dict(cfg: SystemConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for group in _GROUPS:
        d = dataclasses.asdict(getattr(cfg, group))
        if group == "training":
            d["hidden_sizes"] = list(d["hidden_sizes"])
        out[group] = d
    return out


def load_config(path: str | Path) -> SystemConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    with open(p, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg: SystemConfig, path: str | Path,
                scenario_dict: Optional[dict[str, Any]] = None) -> None:
    data: dict[str, Any] = config_to_dict(cfg)
    if scenario_dict is not None:
        data["scenario"] = scenario_dict
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
