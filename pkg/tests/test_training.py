import numpy as np
import pytest

import netgeom as ng
from netgeom.errors import ConfigError, NumericError
from netgeom.nets import Dataset
from netgeom.training import (AdvConfig, ReplicaConfig, TrainConfig, backprop,
                              cosine_lr, _loss_and_delta)


def margin_inputs(net, count, rng, margin=0.02):
    """Patterns whose preactivations all sit at least `margin` from a relu
    kink, so central differences at h=1e-3 are valid on every coordinate."""
    rows = []
    while len(rows) < count:
        x = rng.standard_normal((1, net.layers[0].fan_in))
        act, ok = x, True
        for spec, w in zip(net.layers[:-1], net.weights[:-1]):
            z = act @ w.T
            if np.abs(z).min() < margin:
                ok = False
                break
            act = np.maximum(z, 0)
        if ok:
            rows.append(x[0])
    return np.array(rows)


def fd_gradient(net, x, y, loss_kind, h=1e-3):
    grads = []
    for li, w in enumerate(net.weights):
        g = np.zeros_like(w, dtype=np.float64)
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                def loss_at(delta):
                    ws = [np.array(v) for v in net.weights]
                    ws[li][i, j] += delta
                    n2 = ng.Network(net.layers, tuple(ws), net.biases, net.latent)
                    return _loss_and_delta(ng.forward(n2, x), y, loss_kind)[0]
                g[i, j] = (loss_at(h) - loss_at(-h)) / (2 * h)
        grads.append(g)
    return grads


def assert_grad_close(gw, fd, rtol=1e-4, atol=1e-6):
    # atol absorbs the h^2 truncation of the central-difference oracle
    for a, b in zip(gw, fd):
        diff = np.abs(a - b)
        bound = rtol * np.maximum(np.abs(a), np.abs(b)) + atol
        assert np.all(diff <= bound), float((diff - bound).max())


def toy_data(rng, p, dim, classes):
    x = rng.standard_normal((p, dim)).astype(np.float32)
    if classes == 2:
        y = rng.choice([-1, 1], p)
    else:
        y = rng.integers(0, classes, p)
    return Dataset(x, y, max(classes, 2))


# --- backprop ------------------------------------------------------------------

def test_backprop_zero_at_minimizer():
    # single linear unit at the exact minimizer of a 2-point convex problem
    x = np.array([[1.0], [-1.0]])
    y = np.array([1, -1])
    net = ng.make_network([np.array([[4.0]], np.float64)])
    # symmetric problem: gradient at any w is -(sigmoid(-w) ) * ... check at
    # large w the gradient only vanishes asymptotically; use the finite
    # optimum of the symmetrized logistic problem instead: w -> infinity, so
    # assert the gradient points downhill (negative) and is tiny at w=15
    big = ng.make_network([np.array([[15.0]], np.float64)])
    _, gw, _ = backprop(big, x, y, "binary_cross_entropy")
    assert abs(gw[0][0, 0]) < 1e-6


def test_backprop_matches_finite_differences_relu():
    rng = np.random.default_rng(0)
    net = ng.random_network([2, 8, 3], seed=1, dtype=np.float64)
    x = margin_inputs(net, 10, rng)
    y = rng.integers(0, 3, 10)
    loss, gw, gb = backprop(net, x, y, "cross_entropy")
    assert_grad_close(gw, fd_gradient(net, x, y, "cross_entropy"))


def test_backprop_matches_finite_differences_deep_bce():
    rng = np.random.default_rng(1)
    net = ng.random_network([4, 16, 16, 16, 1], seed=2, dtype=np.float64)
    x = margin_inputs(net, 10, rng)
    y = rng.choice([-1, 1], 10)
    loss, gw, gb = backprop(net, x, y, "binary_cross_entropy")
    assert_grad_close(gw, fd_gradient(net, x, y, "binary_cross_entropy"))


def test_backprop_bias_gradients_match_fd():
    rng = np.random.default_rng(2)
    net = ng.random_network([3, 8, 2], has_bias=True, seed=3, dtype=np.float64)
    x = margin_inputs(net, 8, rng)
    y = rng.integers(0, 2, 8)
    _, _, gb = backprop(net, x, y, "cross_entropy")
    h = 1e-3
    for li, b in enumerate(net.biases):
        for i in range(b.size):
            def loss_at(delta):
                bs = [None if v is None else np.array(v) for v in net.biases]
                bs[li][i] += delta
                n2 = ng.Network(net.layers, net.weights, tuple(bs), net.latent)
                return _loss_and_delta(ng.forward(n2, x), y, "cross_entropy")[0]
            fd = (loss_at(h) - loss_at(-h)) / (2 * h)
            assert abs(gb[li][i] - fd) <= 1e-4 * max(abs(fd), abs(gb[li][i])) + 1e-6


def test_backprop_binary_ste_clips_saturated_latent():
    latent = [np.array([[2.5, 0.5, -0.3]], np.float32)]
    weights = [np.where(latent[0] >= 0, 1, -1).astype(np.float32)]
    net = ng.make_network(weights, activation="sign", binary=True, latent=latent)
    x = np.array([[1.0, -1.0, 1.0]], np.float32)
    y = np.array([-1])
    _, gw, _ = backprop(net, x, y, "binary_cross_entropy")
    assert gw[0][0, 0] == 0.0          # |latent| > 1: clipped
    assert gw[0][0, 1] != 0.0


def test_backprop_frozen_layer_gets_zero_gradient():
    net = ng.random_network([5, 7, 1], activation="sign", binary=True,
                            committee=True, seed=4)
    rng = np.random.default_rng(3)
    x = rng.choice([-1.0, 1.0], (20, 5)).astype(np.float32)
    y = rng.choice([-1, 1], 20)
    _, gw, _ = backprop(net, x, y, "binary_cross_entropy")
    assert np.all(gw[1] == 0.0)
    assert np.any(gw[0] != 0.0)


def test_backprop_rejects_mismatched_loss():
    net = ng.random_network([4, 5, 3], seed=5)
    with pytest.raises(ConfigError):
        backprop(net, np.zeros((2, 4), np.float32), np.array([1, -1]),
                 "binary_cross_entropy")


# --- cosine schedule ------------------------------------------------------------

def test_cosine_lr_endpoints_and_midpoint():
    assert cosine_lr(0.02, 0, 100) == pytest.approx(0.02)
    assert cosine_lr(0.02, 100, 100) == pytest.approx(0.0, abs=1e-18)
    assert cosine_lr(0.02, 50, 100) == pytest.approx(0.01)


# --- sgd_train -------------------------------------------------------------------

def test_sgd_zero_epochs_returns_input_unchanged():
    rng = np.random.default_rng(4)
    net = ng.random_network([4, 6, 2], seed=6)
    data = toy_data(rng, 30, 4, 2)
    cfg = TrainConfig(epochs=0, batch_size=10, lr0=0.1, loss="cross_entropy", seed=0)
    out, trace = ng.sgd_train(net, data, cfg)
    assert out is net
    assert len(trace) == 0


def test_sgd_seed_determinism():
    rng = np.random.default_rng(5)
    data = toy_data(rng, 60, 5, 2)
    cfg = TrainConfig(epochs=5, batch_size=16, lr0=0.05, momentum=0.9,
                      nesterov=True, schedule="cosine", loss="cross_entropy",
                      seed=123)
    runs = []
    for _ in range(2):
        net = ng.random_network([5, 8, 2], seed=7)
        out, trace = ng.sgd_train(net, data, cfg)
        runs.append(out)
    for w1, w2 in zip(runs[0].weights, runs[1].weights):
        assert np.array_equal(w1, w2)


def test_sgd_final_trace_matches_recomputed_error():
    rng = np.random.default_rng(6)
    data = toy_data(rng, 50, 4, 3)
    net = ng.random_network([4, 10, 3], seed=8)
    cfg = TrainConfig(epochs=4, batch_size=10, lr0=0.1, loss="cross_entropy", seed=1)
    out, trace = ng.sgd_train(net, data, cfg)
    assert trace.train_error[-1] == ng.train_error(out, data)
    assert len(trace) == 4


def test_sgd_binary_net_keeps_weights_binary():
    rng = np.random.default_rng(7)
    data = Dataset(rng.choice([-1.0, 1.0], (40, 6)).astype(np.float32),
                   rng.choice([-1, 1], 40), 2)
    net = ng.random_network([6, 1], activation="sign", binary=True, seed=9)
    cfg = TrainConfig(epochs=5, batch_size=8, lr0=0.5,
                      loss="binary_cross_entropy", seed=2)
    out, _ = ng.sgd_train(net, data, cfg)
    assert set(np.unique(out.weights[0]).tolist()) <= {-1.0, 1.0}
    assert np.all(np.abs(out.latent[0]) <= 1.0)        # latent clipped
    assert np.array_equal(out.weights[0], np.where(out.latent[0] >= 0, 1, -1))


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_sgd_divergence_raises_numeric_error():
    rng = np.random.default_rng(8)
    data = toy_data(rng, 30, 4, 2)
    net = ng.random_network([4, 8, 2], seed=10)
    cfg = TrainConfig(epochs=50, batch_size=30, lr0=1e30, loss="cross_entropy",
                      seed=3)
    with pytest.raises(NumericError) as err:
        ng.sgd_train(net, data, cfg)
    assert err.value.epoch is not None


# --- rsgd_train ------------------------------------------------------------------

def test_replica_gamma_schedule_values():
    rep = ReplicaConfig(5, 0.002, 0.002)
    assert rep.gamma(0) == pytest.approx(0.002)
    assert rep.gamma(100) == pytest.approx(0.002 * 1.002 ** 100)
    assert rep.gamma(100) == pytest.approx(0.0024424, abs=2e-7)


def test_rsgd_zero_gamma_reproduces_sgd_per_replica():
    # replica 0 starts at the template, replica a >= 1 at the documented
    # fresh draw (seed + 7919a); shuffle streams are seed + a. With gamma
    # == 0 the returned network must coincide bit for bit with one of the
    # corresponding plain SGD runs.
    from netgeom.training import _replica_start
    rng = np.random.default_rng(9)
    data = toy_data(rng, 40, 5, 2)
    net = ng.random_network([5, 6, 2], seed=11)
    cfg = TrainConfig(epochs=3, batch_size=10, lr0=0.05, loss="cross_entropy",
                      seed=77)
    rep = ReplicaConfig(2, 0.0, 0.0)
    out, _ = ng.rsgd_train(net, data, cfg, rep)
    singles = [ng.sgd_train(_replica_start(net, a, 77), data,
                            TrainConfig(epochs=3, batch_size=10, lr0=0.05,
                                        loss="cross_entropy", seed=77 + a))[0]
               for a in range(2)]
    matches = [all(np.array_equal(w1, w2) for w1, w2 in zip(out.weights, s.weights))
               for s in singles]
    assert any(matches)


def test_rsgd_strong_coupling_collapses_replicas():
    # gamma = 1 sets every replica to the mean in one coupling step
    rng = np.random.default_rng(10)
    data = toy_data(rng, 20, 4, 2)
    net = ng.random_network([4, 5, 2], seed=12)
    cfg = TrainConfig(epochs=1, batch_size=20, lr0=0.05, loss="cross_entropy",
                      seed=5)
    rep = ReplicaConfig(3, 1.0, 0.0)
    out, trace = ng.rsgd_train(net, data, cfg, rep)
    assert np.all(np.isfinite(out.weights[0]))


def test_rsgd_seed_determinism():
    rng = np.random.default_rng(11)
    data = toy_data(rng, 30, 4, 2)
    cfg = TrainConfig(epochs=2, batch_size=10, lr0=0.05, loss="cross_entropy",
                      seed=6)
    rep = ReplicaConfig(3, 0.01, 0.01)
    outs = []
    for _ in range(2):
        net = ng.random_network([4, 5, 2], seed=13)
        outs.append(ng.rsgd_train(net, data, cfg, rep)[0])
    for w1, w2 in zip(outs[0].weights, outs[1].weights):
        assert np.array_equal(w1, w2)


def test_rsgd_requires_two_replicas():
    with pytest.raises(ConfigError):
        ReplicaConfig(1, 0.002, 0.002)


# --- adv_init_train ---------------------------------------------------------------

def test_adv_poisoned_dataset_sizes():
    from netgeom.data import poison_dataset
    rng = np.random.default_rng(12)
    data = toy_data(rng, 25, 6, 3)
    assert poison_dataset(data, 1, 0.0, 0).num_patterns == 50
    assert poison_dataset(data, 0, 0.0, 0).num_patterns == 25
    assert poison_dataset(data, 2, 0.0, 0).num_patterns == 75


def test_adv_zeroed_pixel_count():
    from netgeom.data import poison_dataset
    rng = np.random.default_rng(13)
    data = Dataset(rng.standard_normal((10, 784)).astype(np.float32) + 5.0,
                   rng.integers(0, 10, 10), 10)
    poisoned = poison_dataset(data, 1, 0.1, 3)
    copies = poisoned.inputs[10:]
    zeroed = (copies == 0.0).sum(axis=1)
    assert np.all(zeroed == 78)        # floor(0.1 * 784)


def test_adv_stage1_error_near_random_baseline():
    # R = 0: pure random-label pretraining; evaluated on the true labels the
    # overfit stage-1 network disagrees on ~ (K-1)/K of the patterns
    rng = np.random.default_rng(14)
    p, k = 300, 10
    data = toy_data(rng, p, 12, k)
    net = ng.random_network([12, 64, k], seed=15)
    adv = AdvConfig(
        replication=0, zero_pixel_fraction=0.0,
        pretrain=TrainConfig(epochs=250, batch_size=32, lr0=0.08, momentum=0.9,
                             nesterov=True, schedule="cosine",
                             loss="cross_entropy", seed=20),
        finetune=TrainConfig(epochs=0, batch_size=32, lr0=0.01,
                             loss="cross_entropy", seed=21))
    out, _ = ng.adv_init_train(net, data, adv, seed=22)
    err = ng.train_error(out, data)
    se = np.sqrt(0.9 * 0.1 / p)
    assert abs(err - 0.9) < max(3 * se, 0.05)


def test_adv_seed_determinism():
    rng = np.random.default_rng(15)
    data = toy_data(rng, 40, 5, 2)
    adv = AdvConfig(
        replication=1, zero_pixel_fraction=0.2,
        pretrain=TrainConfig(epochs=2, batch_size=10, lr0=0.05,
                             loss="cross_entropy", seed=30),
        finetune=TrainConfig(epochs=2, batch_size=10, lr0=0.05,
                             loss="cross_entropy", seed=31))
    outs = []
    for _ in range(2):
        net = ng.random_network([5, 6, 2], seed=16)
        outs.append(ng.adv_init_train(net, data, adv, seed=32)[0])
    for w1, w2 in zip(outs[0].weights, outs[1].weights):
        assert np.array_equal(w1, w2)
