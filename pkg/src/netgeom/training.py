"""Gradients and the three solution samplers: SGD, replicated SGD, and
adversarially initialized SGD.

Binary layers follow the BinaryNet scheme: continuous latent weights carry
the optimizer state, the forward pass uses their signs, gradients pass
straight through the sign with a clip (zero where |latent| > 1), and the
latent weights are clipped to [-1, 1] after every step. Sign activations
backpropagate as a scaled straight-through: derivative 1 where the
preactivation magnitude is below sqrt(fan_in) (the natural preactivation
scale of an unnormalized ±1 layer), 0 beyond.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .nets import Dataset, Network, forward_arrays, train_error

LOSSES = ("cross_entropy", "binary_cross_entropy")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr0: float
    momentum: float = 0.0
    nesterov: bool = False
    schedule: str = "cosine"
    loss: str = "cross_entropy"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class ReplicaConfig:
    """Elastic coupling schedule gamma(t) = gamma0 * (1 + gamma1)^t, with t
    the epoch. gamma0 = 0 degenerates to uncoupled replicas (plain SGD)."""

    num_replicas: int
    gamma0: float
    gamma1: float

    def __post_init__(self):
        if self.num_replicas < 2:
            raise ConfigError("num_replicas must be >= 2")
        if self.gamma0 < 0 or self.gamma1 < 0:
            raise ConfigError("gamma0/gamma1 must be >= 0")

    def gamma(self, epoch: int) -> float:
        return self.gamma0 * (1.0 + self.gamma1) ** epoch


@dataclass(frozen=True)
class AdvConfig:
    """Adversarial initialization: pretrain on a poisoned dataset, then
    fine-tune on the clean one.

    ``replication`` R >= 1 appends R label-randomized copies (with
    ``zero_pixel_fraction`` of coordinates zeroed per copied pattern) to the
    originals; R = 0 instead randomizes the labels of the originals
    themselves, which is the poisoning used for the synthetic tasks.
    """

    replication: int
    zero_pixel_fraction: float
    pretrain: TrainConfig
    finetune: TrainConfig

    def __post_init__(self):
        if self.replication < 0:
            raise ConfigError("replication must be >= 0")
        if not 0.0 <= self.zero_pixel_fraction <= 1.0:
            raise ConfigError("zero_pixel_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class TrainTrace:
    train_error: np.ndarray
    test_error: np.ndarray
    lr: np.ndarray
    loss: np.ndarray

    def __len__(self):
        return int(self.train_error.shape[0])


def cosine_lr(lr0: float, t: int, total: int) -> float:
    """lr0 * (1 + cos(pi t / total)) / 2."""
    if not 0 <= t <= total:
        raise ConfigError(f"t={t} outside [0, {total}]")
    return lr0 * (1.0 + np.cos(np.pi * t / total)) / 2.0


def _loss_and_delta(logits, labels, loss_kind):
    """Mean batch loss and dLoss/dlogits."""
    p = logits.shape[0]
    if loss_kind == "binary_cross_entropy":
        z = logits.reshape(p).astype(np.float64)
        y = labels.astype(np.float64)
        m = -y * z
        loss = float(np.mean(np.maximum(m, 0.0) + np.log1p(np.exp(-np.abs(m)))))
        # stable sigmoid(m): exp only ever sees non-positive arguments
        em = np.exp(-np.abs(m))
        sig = np.where(m >= 0, 1.0 / (1.0 + em), em / (1.0 + em))
        delta = (-y * sig / p).reshape(p, 1)
    else:
        z = logits.astype(np.float64)
        zmax = z.max(axis=1, keepdims=True)
        ez = np.exp(z - zmax)
        softmax = ez / ez.sum(axis=1, keepdims=True)
        lse = zmax.reshape(p) + np.log(ez.sum(axis=1))
        loss = float(np.mean(lse - z[np.arange(p), labels]))
        delta = softmax
        delta[np.arange(p), labels] -= 1.0
        delta /= p
    return loss, delta.astype(logits.dtype)


def backprop(net: Network, inputs, labels, loss_kind: str):
    """Mean-batch loss and its gradient w.r.t. every trainable parameter.

    Returns (loss, grads_w, grads_b); for binary layers grads_w is taken
    w.r.t. the latent weights (straight-through, clipped where
    |latent| > 1); frozen layers get zero gradients.
    """
    if loss_kind not in LOSSES:
        raise ConfigError(f"unknown loss {loss_kind!r}")
    if loss_kind == "binary_cross_entropy" and net.num_outputs != 1:
        raise ConfigError("binary_cross_entropy needs a single-output network")
    if loss_kind == "cross_entropy" and net.num_outputs < 2:
        raise ConfigError("cross_entropy needs a multi-output network")
    inputs = np.asarray(inputs, dtype=net.dtype)
    labels = np.asarray(labels, dtype=np.int64)
    if inputs.shape[1] != net.layers[0].fan_in:
        raise ShapeError("batch width does not match the network")

    # forward, keeping inputs and preactivations per layer
    xs = [inputs]
    pres = []
    x = inputs
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        z = x @ w.T
        if b is not None:
            z = z + b
        pres.append(z)
        if spec.activation == "relu":
            x = np.maximum(z, 0)
        elif spec.activation == "sign":
            x = np.where(z >= 0, 1, -1).astype(z.dtype)
        else:
            x = z
        xs.append(x)

    loss, delta = _loss_and_delta(xs[-1], labels, loss_kind)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")

    grads_w = [None] * net.num_layers
    grads_b = [None] * net.num_layers
    for idx in range(net.num_layers - 1, -1, -1):
        spec = net.layers[idx]
        if spec.frozen:
            grads_w[idx] = np.zeros_like(net.weights[idx])
            if net.biases[idx] is not None:
                grads_b[idx] = np.zeros_like(net.biases[idx])
        else:
            gw = delta.T @ xs[idx]
            if spec.weights_binary:
                gw = np.where(np.abs(net.latent[idx]) <= 1.0, gw, 0.0).astype(gw.dtype)
            grads_w[idx] = gw
            if net.biases[idx] is not None:
                grads_b[idx] = delta.sum(axis=0)
        if idx > 0:
            delta = delta @ net.weights[idx]
            prev = net.layers[idx - 1]
            if prev.activation == "relu":
                delta = delta * (pres[idx - 1] > 0)
            elif prev.activation == "sign":
                ste = np.abs(pres[idx - 1]) <= np.sqrt(prev.fan_in)
                delta = delta * ste
    return loss, grads_w, grads_b


class _SgdState:
    """Mutable optimizer state over one network's parameters. Binary layers
    are optimized through their latent weights."""

    def __init__(self, net: Network):
        self.net = net
        self.layers = net.layers
        self.params = []      # latent for binary layers, weights otherwise
        self.weights = []     # what the forward pass sees
        self.biases = []
        self.vel_w = []
        self.vel_b = []
        for spec, w, b, g in zip(net.layers, net.weights, net.biases, net.latent):
            p = (g if spec.weights_binary else w).copy()
            self.params.append(p)
            self.weights.append(np.where(p >= 0, 1, -1).astype(w.dtype)
                                if spec.weights_binary else p)
            self.biases.append(None if b is None else b.copy())
            self.vel_w.append(np.zeros_like(p))
            self.vel_b.append(None if b is None else np.zeros_like(b))

    def snapshot(self) -> Network:
        ws, gs = [], []
        for spec, p, w in zip(self.layers, self.params, self.weights):
            if spec.weights_binary:
                ws.append(w.copy())
                gs.append(p.copy())
            else:
                ws.append(p.copy())
                gs.append(None)
        bs = tuple(None if b is None else b.copy() for b in self.biases)
        return Network(self.layers, tuple(ws), bs, tuple(gs))

    def step(self, grads_w, grads_b, lr, momentum, nesterov):
        for idx, spec in enumerate(self.layers):
            if spec.frozen:
                continue
            g = grads_w[idx]
            v = self.vel_w[idx]
            if momentum:
                v *= momentum
                v += g
                upd = g + momentum * v if nesterov else v
            else:
                upd = g
            self.params[idx] -= lr * upd
            if grads_b[idx] is not None:
                gb = grads_b[idx]
                vb = self.vel_b[idx]
                if momentum:
                    vb *= momentum
                    vb += gb
                    updb = gb + momentum * vb if nesterov else vb
                else:
                    updb = gb
                self.biases[idx] -= lr * updb
            if spec.weights_binary:
                np.clip(self.params[idx], -1.0, 1.0, out=self.params[idx])
                self.weights[idx] = np.where(self.params[idx] >= 0, 1, -1).astype(
                    self.weights[idx].dtype)

    def check_finite(self, epoch):
        for p in self.params:
            if not np.all(np.isfinite(p)):
                raise NumericError(f"parameters diverged at epoch {epoch}", epoch=epoch)

    def batch_loss_grads(self, inputs, labels, loss_kind, epoch):
        try:
            return backprop(self.snapshot_light(), inputs, labels, loss_kind)
        except NumericError as err:
            raise NumericError(f"{err} (epoch {epoch})", epoch=epoch) from None

    def snapshot_light(self):
        # Trainers call backprop thousands of times; skip dataclass
        # revalidation by reusing a shell network around the live arrays.
        return _LiveNet(self)


class _LiveNet:
    """Duck-typed view of an _SgdState for backprop/forward helpers."""

    def __init__(self, state):
        self.layers = state.layers
        self.weights = state.weights
        self.biases = state.biases
        self.latent = [p if s.weights_binary else None
                       for s, p in zip(state.layers, state.params)]
        self.num_layers = len(state.layers)
        self.num_outputs = state.layers[-1].fan_out
        self.dtype = state.weights[0].dtype


def _errors_on(state: _SgdState, data: Optional[Dataset]):
    if data is None:
        return np.nan
    logits = forward_arrays(state.layers, state.weights, state.biases,
                            data.inputs.astype(state.weights[0].dtype, copy=False))
    if state.layers[-1].fan_out == 1:
        preds = np.where(logits.reshape(-1) >= 0, 1, -1)
    else:
        preds = np.argmax(logits, axis=1)
    return float(np.mean(preds != data.labels))


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    if cfg.schedule == "cosine":
        return cosine_lr(cfg.lr0, epoch, cfg.epochs)
    return cfg.lr0


def _batches(rng, n, batch_size):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def sgd_train(net: Network, data: Dataset, cfg: TrainConfig,
              test_data: Optional[Dataset] = None):
    """Mini-batch SGD (optionally Nesterov). All randomness is driven by
    cfg.seed; two runs with identical inputs are bit-identical."""
    if data.num_patterns < 1:
        raise ConfigError("training data is empty")
    if cfg.epochs == 0:
        return net, TrainTrace(*(np.zeros(0) for _ in range(4)))
    state = _SgdState(net)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    tr_err = np.zeros(cfg.epochs)
    te_err = np.zeros(cfg.epochs)
    lrs = np.zeros(cfg.epochs)
    losses = np.zeros(cfg.epochs)
    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        epoch_loss = 0.0
        nb = 0
        for batch in _batches(rng, data.num_patterns, cfg.batch_size):
            loss, gw, gb = state.batch_loss_grads(
                data.inputs[batch], data.labels[batch], cfg.loss, epoch)
            state.step(gw, gb, lr, cfg.momentum, cfg.nesterov)
            epoch_loss += loss
            nb += 1
        state.check_finite(epoch)
        tr_err[epoch] = _errors_on(state, data)
        te_err[epoch] = _errors_on(state, test_data)
        lrs[epoch] = lr
        losses[epoch] = epoch_loss / nb
    return state.snapshot(), TrainTrace(tr_err, te_err, lrs, losses)


def _replica_start(net_template: Network, index: int, seed: int) -> Network:
    """Replica 0 starts at the template; later replicas are fresh draws of
    the same architecture (frozen layers copied verbatim), so the ensemble
    explores independently before the coupling contracts it."""
    if index == 0:
        return net_template
    from .nets import random_network

    spec0 = net_template.layers[0]
    fresh = random_network(net_template.sizes,
                           activation=spec0.activation,
                           binary=spec0.weights_binary,
                           committee=net_template.layers[-1].frozen,
                           has_bias=spec0.has_bias,
                           seed=seed + 7919 * index,
                           dtype=net_template.dtype)
    ws = [fw if not s.frozen else tw
          for s, fw, tw in zip(fresh.layers, fresh.weights, net_template.weights)]
    gs = [fg if not s.frozen else tg
          for s, fg, tg in zip(fresh.layers, fresh.latent, net_template.latent)]
    return Network(net_template.layers, tuple(ws), fresh.biases, tuple(gs))


def rsgd_train(net_template: Network, data: Dataset, cfg: TrainConfig,
               rep: ReplicaConfig, test_data: Optional[Dataset] = None):
    """Replicated SGD. Replica 0 starts at the template and replica a >= 1
    at an independent draw (seed law cfg.seed + 7919 a); each replica runs
    SGD on its own shuffle stream seeded with cfg.seed + a, so with gamma
    identically 0 every replica reproduces a plain sgd_train trajectory.
    After each mini-batch step an elastic term -gamma_t (w_a - mean) pulls
    each replica toward the replica mean, with gamma_t indexed by epoch.
    Returns the replica closest to the mean."""
    if cfg.epochs == 0:
        return net_template, TrainTrace(*(np.zeros(0) for _ in range(4)))
    y = rep.num_replicas
    states = [_SgdState(_replica_start(net_template, a, cfg.seed))
              for a in range(y)]
    rngs = [np.random.default_rng(np.random.SeedSequence(cfg.seed + a))
            for a in range(y)]
    trainable = [idx for idx, s in enumerate(net_template.layers) if not s.frozen]
    tr_err = np.zeros(cfg.epochs)
    te_err = np.zeros(cfg.epochs)
    lrs = np.zeros(cfg.epochs)
    losses = np.zeros(cfg.epochs)

    def closest_to_mean():
        means = [np.mean([st.params[idx] for st in states], axis=0)
                 for idx in trainable]
        dists = []
        for st in states:
            d2 = sum(float(np.sum((st.params[idx] - m) ** 2))
                     for idx, m in zip(trainable, means))
            dists.append(d2)
        return int(np.argmin(dists)), means

    for epoch in range(cfg.epochs):
        lr = _epoch_lr(cfg, epoch)
        gamma = rep.gamma(epoch)
        iters = [_batches(rngs[a], data.num_patterns, cfg.batch_size)
                 for a in range(y)]
        epoch_loss = 0.0
        nb = 0
        for batches in zip(*iters):
            for st, batch in zip(states, batches):
                loss, gw, gb = st.batch_loss_grads(
                    data.inputs[batch], data.labels[batch], cfg.loss, epoch)
                st.step(gw, gb, lr, cfg.momentum, cfg.nesterov)
                epoch_loss += loss
                nb += 1
            if gamma:
                for idx in trainable:
                    mean = np.mean([st.params[idx] for st in states], axis=0)
                    for st in states:
                        st.params[idx] -= gamma * (st.params[idx] - mean)
                        if st.layers[idx].weights_binary:
                            np.clip(st.params[idx], -1.0, 1.0, out=st.params[idx])
                            st.weights[idx] = np.where(
                                st.params[idx] >= 0, 1, -1).astype(st.weights[idx].dtype)
        for st in states:
            st.check_finite(epoch)
        center, _ = closest_to_mean()
        tr_err[epoch] = _errors_on(states[center], data)
        te_err[epoch] = _errors_on(states[center], test_data)
        lrs[epoch] = lr
        losses[epoch] = epoch_loss / nb
    center, _ = closest_to_mean()
    return states[center].snapshot(), TrainTrace(tr_err, te_err, lrs, losses)


def adv_init_train(net_template: Network, data: Dataset, cfg: AdvConfig,
                   seed: int, test_data: Optional[Dataset] = None):
    """Two-stage adversarial initialization: pretrain on the poisoned
    dataset built from ``data`` (see AdvConfig), then fine-tune on the clean
    data from the stage-1 parameters. ``seed`` drives the poisoning.

    For binary networks the stage-1 result is handed over as its binary
    configuration: the fine-tune latents start at the ±1 weights themselves
    (fully saturated), so escaping the label-noise-fitting region costs a
    full traversal of the latent clip box per coordinate. Handing over the
    soft latents instead lets the fine-tune erase the initialization.
    """
    from .data import poison_dataset

    poisoned = poison_dataset(data, cfg.replication, cfg.zero_pixel_fraction, seed)
    stage1, _ = sgd_train(net_template, poisoned, cfg.pretrain)
    if stage1.is_binary:
        stage1 = Network(stage1.layers, stage1.weights, stage1.biases,
                         tuple(None if g is None else stage1.weights[i].copy()
                               for i, g in enumerate(stage1.latent)))
    return sgd_train(stage1, data, cfg.finetune, test_data=test_data)
