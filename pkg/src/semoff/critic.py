"""Model-based per-slot optimizer.

Given a binary association policy and the observed state, the continuous
allocation is solved by a fixed sequence of four one-dimensional convex
subproblems, each admitting a closed-form stationary point clamped into its
feasible interval:

1. edge offload volume,
2. cloud offload volume (given the edge volume),
3. local execution frequency (given both volumes),
4. edge decode frequency.

Each subproblem drops the coupling terms the sequence has not fixed yet;
notably the edge-volume stage ignores the semantic transmit power, which is
orders of magnitude below the compute power it trades against. The
assembled allocation is then scored with the full per-slot objective,
transmit powers included.

`solver_weight_mode` selects the queue weights of the stationary points:
"consistent" uses real-plus-virtual backlog everywhere (the weights the
per-slot objective implies), "simplified" uses real-queue-only weights in
the frequency stages and a net-of-edge-offload weight in the cloud stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Allocation, Policy, SlotState, SystemConfig
from . import power


LN2 = float(np.log(2.0))


class FeasibilityError(ValueError):
    """An allocation violates one of the per-slot constraints."""


@dataclass
class CriticResult:
    """Solved allocation plus its objective value and per-device breakdown."""

    alloc: Allocation
    g_value: float
    local_terms: np.ndarray   # -(q_l + z_l) * (mu_local - mean arrivals)
    edge_terms: np.ndarray    # -(q_e + z_e) * (mu_edge - u_edge)
    power_terms: np.ndarray   # v * (all four power components)
    feasible: np.ndarray      # per-device transmit powers within the cap


def solve_edge_volume(state: SlotState, edge_mask: np.ndarray,
                      cfg: SystemConfig) -> np.ndarray:
    """Edge offload volume: clamped stationary point of the encode tradeoff.

    Zero whenever the backlog differential (local minus edge, real plus
    virtual) is non-positive or the device is not edge-associated. The
    upper clamp is the tightest of the local backlog, the full-clock encode
    rate, and the semantic-link volume reachable at the power ceiling.
    """
    s = cfg.system
    w = state.q_local + state.z_local - state.q_edge - state.z_edge
    rate_per_hz = s.slot_length * s.flops_per_cycle_local / s.task_flops_encode
    with np.errstate(invalid="ignore"):
        stationary = np.sqrt(rate_per_hz ** 3 * np.maximum(w, 0.0)
                             / (3.0 * s.lyapunov_v * s.alpha_local))
    h2_edge = np.abs(state.h_edge) ** 2
    cap = np.minimum(state.q_local,
                     np.minimum(power.encode_rate(s.f_local_max, cfg),
                                power.semantic_volume_cap(h2_edge, cfg.bandwidth_edge, cfg)))
    out = np.where((w > 0) & edge_mask, np.minimum(stationary, cap), 0.0)
    return np.maximum(out, 0.0)


def solve_cloud_volume(state: SlotState, cloud_mask: np.ndarray,
                       u_edge: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Cloud offload volume: clamped stationary point of the Shannon-power tradeoff."""
    s, sem = cfg.system, cfg.semantic
    if s.solver_weight_mode == "simplified":
        w = state.q_local + state.z_local - u_edge
    else:
        w = state.q_local + state.z_local
    b_c = cfg.bandwidth_cloud
    bits_per_task = sem.sentence_len * sem.bits_per_word
    h2_cloud = np.abs(state.h_cloud) ** 2
    scale = s.slot_length * b_c / bits_per_task
    arg = (np.maximum(w, 0.0) * s.slot_length * h2_cloud
           / (LN2 * s.lyapunov_v * bits_per_task * cfg.channel.noise_psd))
    with np.errstate(divide="ignore"):
        stationary = np.where(arg > 0, scale * np.log2(np.maximum(arg, 1e-300)), 0.0)
    cap = np.minimum(state.q_local - u_edge,
                     power.cloud_offload_cap(h2_cloud, b_c, cfg))
    out = np.where(cloud_mask, np.clip(stationary, 0.0, np.maximum(cap, 0.0)), 0.0)
    return out


def solve_local_frequency(state: SlotState, u_edge: np.ndarray,
                          u_cloud: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Local execution clock: cubic-power stationary point under the clock
    budget left by encoding and the backlog left by offloading."""
    s = cfg.system
    mode = cfg.system.solver_weight_mode
    w_local = state.q_local if mode == "simplified" else state.q_local + state.z_local
    stationary = np.sqrt(s.slot_length * np.maximum(w_local, 0.0) * s.flops_per_cycle_local
                         / (3.0 * s.lyapunov_v * s.task_flops_total * s.alpha_local))
    f_encode = power.encode_frequency(u_edge, cfg)
    budget = np.maximum(s.f_local_max - f_encode, 0.0)
    left = np.maximum(state.q_local - u_edge - u_cloud, 0.0)
    queue_clamp = left * s.task_flops_total / (s.slot_length * s.flops_per_cycle_local)
    return np.minimum(stationary, np.minimum(budget, queue_clamp))


def solve_edge_frequency(state: SlotState, cfg: SystemConfig) -> np.ndarray:
    """Edge decode clock; solved for every device with edge backlog, since
    the edge queue drains regardless of the current slot's association."""
    s = cfg.system
    mode = cfg.system.solver_weight_mode
    w = state.q_edge if mode == "simplified" else state.q_edge + state.z_edge
    stationary = np.sqrt(s.slot_length * np.maximum(w, 0.0) * s.flops_per_cycle_edge
                         / (3.0 * s.lyapunov_v * s.task_flops_decode * s.alpha_edge_weighted))
    queue_clamp = state.q_edge * s.task_flops_decode / (s.slot_length * s.flops_per_cycle_edge)
    return np.minimum(stationary, np.minimum(s.f_edge_max, queue_clamp))


def assemble_allocation(state: SlotState, edge_mask: np.ndarray,
                        cloud_mask: np.ndarray, cfg: SystemConfig) -> Allocation:
    """Run the four solver stages in sequence for one policy."""
    u_edge = solve_edge_volume(state, edge_mask, cfg)
    u_cloud = solve_cloud_volume(state, cloud_mask, u_edge, cfg)
    f_local = solve_local_frequency(state, u_edge, u_cloud, cfg)
    f_edge = solve_edge_frequency(state, cfg)
    return Allocation(u_edge=u_edge, u_cloud=u_cloud, f_local=f_local,
                      f_encode=np.asarray(power.encode_frequency(u_edge, cfg)),
                      f_edge=f_edge)


_REL_TOL = 1e-9
_TX_POWER_TOL = 1e-5


def check_allocation(alloc: Allocation, policy: Policy, state: SlotState,
                     cfg: SystemConfig) -> None:
    """Raise FeasibilityError naming the first violated per-slot constraint."""
    s = cfg.system
    if np.any(alloc.u_edge[~policy.rho_edge] != 0):
        raise FeasibilityError("u_edge must be zero without edge association")
    if np.any(alloc.u_cloud[~policy.rho_cloud] != 0):
        raise FeasibilityError("u_cloud must be zero without cloud association")
    for name, v in (("u_edge", alloc.u_edge), ("u_cloud", alloc.u_cloud),
                    ("f_local", alloc.f_local), ("f_encode", alloc.f_encode),
                    ("f_edge", alloc.f_edge)):
        if np.any(np.asarray(v) < 0):
            raise FeasibilityError(f"{name} must be >= 0")
    tol = 1 + _REL_TOL
    if np.any(alloc.f_local + alloc.f_encode > s.f_local_max * tol):
        raise FeasibilityError("f_local + f_encode exceeds f_local_max")
    if np.any(alloc.f_edge > s.f_edge_max * tol):
        raise FeasibilityError("f_edge exceeds f_edge_max")
    mu_local = (np.asarray(power.local_exec_rate(alloc.f_local, cfg))
                + alloc.u_edge + alloc.u_cloud)
    if np.any(mu_local > state.q_local * tol + _REL_TOL):
        raise FeasibilityError("served local volume exceeds local backlog")
    mu_edge = np.asarray(power.edge_exec_rate(alloc.f_edge, cfg))
    if np.any(mu_edge > state.q_edge * tol + _REL_TOL):
        raise FeasibilityError("edge decode volume exceeds edge backlog")
    # the accuracy-curve inversion near its ceiling round-trips to ~1e-6
    # relative in float64, so the power guard is correspondingly looser
    p_tx_e, p_tx_c = power.transmit_powers(alloc, state, cfg)
    if np.any(p_tx_e > cfg.channel.p_tx_max * (1 + _TX_POWER_TOL)):
        raise FeasibilityError("semantic transmit power exceeds p_tx_max")
    if np.any(p_tx_c > cfg.channel.p_tx_max * (1 + _TX_POWER_TOL)):
        raise FeasibilityError("cloud transmit power exceeds p_tx_max")


def g_terms(alloc: Allocation, policy: Policy, state: SlotState,
            cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-device contributions to the per-slot objective.

    The arrival term uses the distribution mean (arrivals are not observed
    at decision time).
    """
    v = cfg.system.lyapunov_v
    lam = cfg.mean_arrivals_per_slot
    mu_local = (np.asarray(power.local_exec_rate(alloc.f_local, cfg))
                + alloc.u_edge + alloc.u_cloud)
    mu_edge = np.asarray(power.edge_exec_rate(alloc.f_edge, cfg))
    local_terms = -(state.q_local + state.z_local) * (mu_local - lam)
    edge_terms = -(state.q_edge + state.z_edge) * (mu_edge - alloc.u_edge)
    p_l, p_e, p_tx_e, p_tx_c, _ = power.total_power(alloc, policy, state, cfg)
    power_terms = v * (np.asarray(p_l) + np.asarray(p_e) + p_tx_e + p_tx_c)
    return local_terms, edge_terms, power_terms


def evaluate_g(alloc: Allocation, policy: Policy, state: SlotState,
               cfg: SystemConfig) -> float:
    """Exact per-slot objective of a feasible allocation (error if infeasible)."""
    check_allocation(alloc, policy, state, cfg)
    local_terms, edge_terms, power_terms = g_terms(alloc, policy, state, cfg)
    return float(np.sum(local_terms + edge_terms + power_terms))


def evaluate_policy(policy: Policy, state: SlotState,
                    cfg: SystemConfig) -> CriticResult:
    """Solve the continuous allocation for one policy and score it."""
    alloc = assemble_allocation(state, policy.rho_edge.astype(bool),
                                policy.rho_cloud.astype(bool), cfg)
    local_terms, edge_terms, power_terms = g_terms(alloc, policy, state, cfg)
    p_tx_e, p_tx_c = power.transmit_powers(alloc, state, cfg)
    cap = cfg.channel.p_tx_max * (1 + _TX_POWER_TOL)
    feasible = (p_tx_e <= cap) & (p_tx_c <= cap)
    g_value = float(np.sum(local_terms + edge_terms + power_terms))
    return CriticResult(alloc=alloc, g_value=g_value, local_terms=local_terms,
                        edge_terms=edge_terms, power_terms=power_terms,
                        feasible=feasible)


# ---------------------------------------------------------------------------
# Batched evaluation over many candidate policies
# ---------------------------------------------------------------------------

def device_g_table(state: SlotState, cfg: SystemConfig) -> np.ndarray:
    """(4, I) objective contributions for each per-device association combo.

    Combo index is 2*edge_bit + cloud_bit. Valid because the per-slot
    objective decomposes across devices once the bandwidth split is fixed,
    which the equal split by the association cap guarantees. All four
    combos are solved in one pass over a 4x-tiled state; elementwise
    results are identical to solving each combo separately.
    """
    n = cfg.system.num_devices
    tiled = SlotState(
        h_edge=np.tile(state.h_edge, 4), h_cloud=np.tile(state.h_cloud, 4),
        q_local=np.tile(state.q_local, 4), q_edge=np.tile(state.q_edge, 4),
        z_local=np.tile(state.z_local, 4), z_edge=np.tile(state.z_edge, 4))
    e_mask = np.repeat(np.array([False, False, True, True]), n)
    c_mask = np.repeat(np.array([False, True, False, True]), n)
    alloc = assemble_allocation(tiled, e_mask, c_mask, cfg)
    pol = Policy(rho_edge=e_mask, rho_cloud=c_mask)
    lt, et, pt = g_terms(alloc, pol, tiled, cfg)
    return (lt + et + pt).reshape(4, n)


class PolicyBatch:
    """A fixed set of candidate policies prepared for repeated evaluation."""

    def __init__(self, edge_masks: np.ndarray, cloud_masks: np.ndarray):
        self.edge_masks = edge_masks
        self.cloud_masks = cloud_masks
        self.combo = 2 * edge_masks.astype(np.int64) + cloud_masks.astype(np.int64)
        self._device_idx = np.arange(self.combo.shape[1])[None, :]

    def __len__(self) -> int:
        return self.combo.shape[0]

    def policy(self, idx: int) -> Policy:
        return Policy(rho_edge=self.edge_masks[idx].copy(),
                      rho_cloud=self.cloud_masks[idx].copy())

    def evaluate(self, state: SlotState, cfg: SystemConfig,
                 workers: int = 1) -> np.ndarray:
        """Objective values for every policy in the batch.

        `workers > 1` scores contiguous chunks on a thread pool and
        concatenates them in order, so the result is identical to the
        sequential pass.
        """
        table_by_device = device_g_table(state, cfg).T  # (I, 4)
        if workers > 1 and len(self) >= 4 * workers:
            from concurrent.futures import ThreadPoolExecutor

            chunks = np.array_split(self.combo, workers, axis=0)

            def score(chunk: np.ndarray) -> np.ndarray:
                return np.sum(table_by_device[self._device_idx, chunk], axis=1)

            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(score, chunks))
            return np.concatenate(parts)
        per_device = table_by_device[self._device_idx, self.combo]  # (P, I)
        return np.sum(per_device, axis=1)

    def best(self, state: SlotState, cfg: SystemConfig,
             workers: int = 1) -> tuple[int, np.ndarray]:
        """Index of the minimum-objective policy (first on ties) plus all values."""
        g = self.evaluate(state, cfg, workers=workers)
        return int(np.argmin(g)), g


def evaluate_policies(edge_masks: np.ndarray, cloud_masks: np.ndarray,
                      state: SlotState, cfg: SystemConfig) -> np.ndarray:
    """Objective values for a (P, I) batch of policies in one pass."""
    return PolicyBatch(edge_masks, cloud_masks).evaluate(state, cfg)


def best_policy(edge_masks: np.ndarray, cloud_masks: np.ndarray,
                state: SlotState, cfg: SystemConfig,
                workers: int = 1) -> tuple[int, np.ndarray]:
    """One-shot form of PolicyBatch.best for ad-hoc candidate sets."""
    return PolicyBatch(edge_masks, cloud_masks).best(state, cfg, workers=workers)
