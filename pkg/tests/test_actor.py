import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semoff import actor
from semoff.config import RelaxedPolicy, SlotState, SystemConfig
from semoff.config import SystemParams, TrainingParams

CFG = SystemConfig()


def _state(n=8, q=0.0):
    ones = np.ones(n, dtype=complex)
    z = np.zeros(n)
    return SlotState(h_edge=ones * 1e-5, h_cloud=ones * 1e-6,
                     q_local=np.full(n, float(q)), q_edge=z.copy(),
                     z_local=z.copy(), z_edge=z.copy())


def test_featurize_length_and_zero_queues():
    feats = actor.featurize(_state(), CFG)
    assert feats.shape == (48,)
    # queue features sit at offsets 2..5 of each 6-wide device block
    blocks = feats.reshape(8, 6)
    assert np.all(blocks[:, 2:] == 0.0)


def test_featurize_locality():
    a = _state(q=1.0)
    b = _state(q=1.0)
    b.q_local = b.q_local.copy()
    b.q_local[0] += 2.0
    fa = actor.featurize(a, CFG)
    fb = actor.featurize(b, CFG)
    diff = np.nonzero(fa != fb)[0]
    assert list(diff) == [2]  # only device 0's local-queue feature moved


def _net(rng=None, n=8):
    rng = rng or np.random.default_rng(0)
    return actor.ActorNetwork.create(n, (120, 80), rng)


def test_forward_outputs_in_unit_interval():
    net = _net()
    out = net.forward(np.random.default_rng(1).normal(size=48))
    assert out.shape == (16,)
    assert np.all(out > 0) and np.all(out < 1)


def test_forward_zero_weights_gives_half():
    net = _net()
    for w in net.weights:
        w[:] = 0.0
    out = net.forward(np.ones(48))
    assert np.allclose(out, 0.5)


def test_forward_reproducible_given_seed():
    a = _net(np.random.default_rng(7))
    b = _net(np.random.default_rng(7))
    x = np.linspace(-1, 1, 48)
    assert np.array_equal(a.forward(x), b.forward(x))


def test_quantize_top_k_example():
    relaxed = RelaxedPolicy(
        rho_hat_edge=np.array([0.9, 0.1, 0.8, 0.7, 0.3, 0.2, 0.6, 0.5]),
        rho_hat_cloud=np.array([0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01]))
    pol = actor.quantize(relaxed, CFG)
    assert list(pol.rho_edge.astype(int)) == [1, 0, 1, 1, 0, 0, 1, 0]
    assert int(pol.rho_edge.sum()) == 4 and int(pol.rho_cloud.sum()) == 2


def test_quantize_tie_break_lowest_index():
    relaxed = RelaxedPolicy(rho_hat_edge=np.full(8, 0.5),
                            rho_hat_cloud=np.full(8, 0.5))
    pol = actor.quantize(relaxed, CFG)
    assert list(np.nonzero(pol.rho_edge)[0]) == [0, 1, 2, 3]
    assert list(np.nonzero(pol.rho_cloud)[0]) == [0, 1]


@settings(max_examples=60, deadline=None)
@given(scale=st.floats(0.01, 100.0), shift=st.floats(-5, 5),
       seed=st.integers(0, 2 ** 16))
def test_quantize_scale_invariance(scale, shift, seed):
    x = np.random.default_rng(seed).random(8)
    base = actor.top_k_mask(x, 4)
    assert np.array_equal(actor.top_k_mask(scale * x + shift, 4), base)


def test_generate_candidates_single_is_noiseless():
    rng = np.random.default_rng(1)
    relaxed = RelaxedPolicy(rho_hat_edge=np.linspace(0.1, 0.9, 8),
                            rho_hat_cloud=np.linspace(0.9, 0.1, 8))
    em, cm = actor.generate_candidates(relaxed, 1, rng, CFG)
    ref = actor.quantize(relaxed, CFG)
    assert em.shape == (1, 8)
    assert np.array_equal(em[0], ref.rho_edge)
    assert np.array_equal(cm[0], ref.rho_cloud)


def test_generate_candidates_zero_noise_collapses():
    from dataclasses import replace
    cfg = replace(CFG, training=replace(CFG.training, candidate_noise_std=0.0))
    relaxed = RelaxedPolicy(rho_hat_edge=np.linspace(0.1, 0.9, 8),
                            rho_hat_cloud=np.linspace(0.9, 0.1, 8))
    em, cm = actor.generate_candidates(relaxed, 32, np.random.default_rng(2), cfg)
    assert em.shape[0] == 1


def test_generate_candidates_large_request_all_valid():
    relaxed = RelaxedPolicy(rho_hat_edge=np.full(8, 0.5),
                            rho_hat_cloud=np.full(8, 0.5))
    em, cm = actor.generate_candidates(relaxed, 1960, np.random.default_rng(3), CFG)
    assert em.shape[0] <= 1960
    assert np.all(em.sum(axis=1) == 4)
    assert np.all(cm.sum(axis=1) == 2)
    # noiseless candidate first, all distinct
    combined = {(int(e.sum(0)), tuple(e), tuple(c)) for e, c in zip(em, cm)}
    assert len(combined) == em.shape[0]


def test_generate_candidates_deterministic_given_rng_state():
    relaxed = RelaxedPolicy(rho_hat_edge=np.linspace(0, 1, 8),
                            rho_hat_cloud=np.linspace(1, 0, 8))
    a = actor.generate_candidates(relaxed, 16, np.random.default_rng(5), CFG)
    b = actor.generate_candidates(relaxed, 16, np.random.default_rng(5), CFG)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


# --- loss and training --------------------------------------------------------

def test_loss_half_outputs_is_ln2():
    net = _net()
    for w in net.weights:
        w[:] = 0.0
    x = np.ones((4, 48))
    y = np.zeros((4, 16))
    y[:, 0] = 1.0
    assert net.loss(x, y) == pytest.approx(math.log(2), rel=1e-12)


def test_loss_perfect_predictions_near_zero():
    net = _net()
    x = np.random.default_rng(2).normal(size=(4, 48))
    out = np.atleast_2d(net.forward(x))
    y = np.round(out)
    # drive outputs toward the targets by reusing them as soft labels
    assert net.loss(x, out.clip(1e-7, 1 - 1e-7)) < net.loss(x, 1.0 - y)


def test_gradient_matches_central_finite_differences():
    rng = np.random.default_rng(9)
    net = actor.ActorNetwork.create(4, (16, 12), rng)  # small for speed
    x = rng.normal(size=(5, 24))
    y = (rng.random(size=(5, 8)) > 0.5).astype(float)
    _, gw, gb = net.loss_and_grad(x, y)
    h = 1e-5
    worst = 0.0
    for arrs, grads in ((net.weights, gw), (net.biases, gb)):
        for arr, grad in zip(arrs, grads):
            flat, gflat = arr.reshape(-1), grad.reshape(-1)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + h
                up = net.loss(x, y)
                flat[j] = old - h
                dn = net.loss(x, y)
                flat[j] = old
                fd = (up - dn) / (2 * h)
                worst = max(worst, abs(fd - gflat[j]) / max(abs(fd), 1e-6))
    assert worst < 1e-4


def test_train_step_descends_on_frozen_batch():
    rng = np.random.default_rng(11)
    net = actor.ActorNetwork.create(4, (16, 12), rng)
    opt = actor.AdaptiveMomentState()
    mem = actor.ReplayMemory(8, 24, 8)
    feats = rng.normal(size=24)
    label = (rng.random(8) > 0.5).astype(float)
    mem.add(feats, label)
    first = net.loss(feats, label)
    losses = []
    for _ in range(50):
        losses.append(actor.train_step(net, opt, mem, 1, 1e-3, rng))
    assert net.loss(feats, label) < first


def test_train_step_without_enough_samples_is_noop():
    rng = np.random.default_rng(0)
    net = actor.ActorNetwork.create(4, (16, 12), rng)
    opt = actor.AdaptiveMomentState()
    mem = actor.ReplayMemory(8, 24, 8)
    assert actor.train_step(net, opt, mem, 4, 1e-3, rng) is None
    w_before = [w.copy() for w in net.weights]
    mem.add(np.zeros(24), np.zeros(8))
    assert actor.train_step(net, opt, mem, 4, 1e-3, rng) is None
    assert all(np.array_equal(a, b) for a, b in zip(w_before, net.weights))


def test_test_loss_does_not_touch_parameters():
    rng = np.random.default_rng(1)
    net = actor.ActorNetwork.create(4, (16, 12), rng)
    w_before = [w.copy() for w in net.weights]
    actor.test_loss(net, rng.normal(size=(3, 24)), np.zeros((3, 8)))
    assert all(np.array_equal(a, b) for a, b in zip(w_before, net.weights))


def test_replay_memory_overwrites_oldest():
    mem = actor.ReplayMemory(4, 2, 1)
    for k in range(7):
        mem.add(np.array([k, k]), np.array([k]))
    assert mem.size == 4
    kept = sorted(mem.features[:, 0].astype(int))
    assert kept == [3, 4, 5, 6]


@settings(max_examples=30, deadline=None)
@given(inserts=st.integers(1, 40), cap=st.integers(1, 12))
def test_replay_memory_size_cap(inserts, cap):
    mem = actor.ReplayMemory(cap, 1, 1)
    for k in range(inserts):
        mem.add(np.array([k]), np.array([k]))
    assert mem.size == min(inserts, cap)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    net = _net(rng)
    path = tmp_path / "actor.npz"
    net.save(path)
    again = actor.ActorNetwork.load(path)
    x = rng.normal(size=48)
    assert np.array_equal(net.forward(x), again.forward(x))
    assert again.sizes == net.sizes
