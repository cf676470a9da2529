"""Minimal feedforward networks: representation, evaluation, errors.

Networks are immutable value objects. All parameter arrays are marked
read-only on construction, so concurrent forward passes over a shared
network are safe; anything that "modifies" a network returns a new one.
Parameters default to float32; error counts are exact integers.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import MissingLatentError, ShapeError

ACTIVATIONS = ("relu", "sign", "linear")


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one fully-connected layer."""

    fan_in: int
    fan_out: int
    activation: str
    has_bias: bool = False
    weights_binary: bool = False
    frozen: bool = False

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ShapeError(f"layer dims must be positive, got {self.fan_in}x{self.fan_out}")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")


def _freeze(arr):
    arr = np.asarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Network:
    """A layered parameter container.

    ``weights[l]`` has shape (fan_out, fan_in). For binary layers the stored
    weights are exactly sign(latent) with sign(0)=+1, and ``latent[l]`` holds
    the underlying continuous weights. Biases are optional per layer.
    """

    layers: tuple
    weights: tuple
    biases: tuple = None
    latent: tuple = None

    def __post_init__(self):
        layers = tuple(self.layers)
        weights = tuple(_freeze(w) for w in self.weights)
        biases = self.biases
        if biases is None:
            biases = tuple(None for _ in layers)
        else:
            biases = tuple(None if b is None else _freeze(b) for b in biases)
        latent = self.latent
        if latent is None:
            latent = tuple(None for _ in layers)
        else:
            latent = tuple(None if g is None else _freeze(g) for g in latent)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "latent", latent)
        self._validate()

    def _validate(self):
        if len(self.weights) != len(self.layers):
            raise ShapeError("one weight matrix per layer required")
        if len(self.biases) != len(self.layers) or len(self.latent) != len(self.layers):
            raise ShapeError("biases/latent must align with layers")
        if self.layers[-1].activation != "linear":
            raise ShapeError("last layer must have linear activation")
        prev_out = None
        for idx, (spec, w) in enumerate(zip(self.layers, self.weights)):
            if w.shape != (spec.fan_out, spec.fan_in):
                raise ShapeError(
                    f"layer {idx} weights {w.shape} != ({spec.fan_out}, {spec.fan_in})")
            if prev_out is not None and spec.fan_in != prev_out:
                raise ShapeError(f"layer {idx} fan_in {spec.fan_in} != previous fan_out {prev_out}")
            prev_out = spec.fan_out
            if not np.all(np.isfinite(w)):
                raise ShapeError(f"layer {idx} weights contain non-finite values")
            b = self.biases[idx]
            if spec.has_bias:
                if b is None or b.shape != (spec.fan_out,):
                    raise ShapeError(f"layer {idx} bias missing or misshaped")
            elif b is not None:
                raise ShapeError(f"layer {idx} carries a bias but has_bias=False")
            g = self.latent[idx]
            if spec.weights_binary:
                if g is None or g.shape != w.shape:
                    raise MissingLatentError(f"binary layer {idx} needs latent weights")
                expect = np.where(g >= 0, 1, -1).astype(w.dtype)
                if not np.array_equal(w, expect):
                    raise ShapeError(f"layer {idx} weights are not sign(latent)")
            elif g is not None:
                raise ShapeError(f"layer {idx} has latent but weights_binary=False")

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def num_layers(self):
        return len(self.layers)

    @property
    def num_outputs(self):
        return self.layers[-1].fan_out

    @property
    def is_binary(self):
        return any(s.weights_binary for s in self.layers)

    @property
    def sizes(self):
        return (self.layers[0].fan_in,) + tuple(s.fan_out for s in self.layers)

    def num_weights(self, trainable_only=False):
        return sum(int(w.size) for s, w in zip(self.layers, self.weights)
                   if not (trainable_only and s.frozen))


def make_network(weights, activation="relu", biases=None, latent=None,
                 binary=False, frozen_last=False):
    """Assemble a network from raw weight matrices.

    ``activation`` is used for every layer except the last, which is always
    linear. With ``binary=True`` and no explicit latent, the latent weights
    default to a copy of the (±1) weights.
    """
    weights = [np.asarray(w) for w in weights]
    n = len(weights)
    layers = []
    for idx, w in enumerate(weights):
        last = idx == n - 1
        layers.append(LayerSpec(
            fan_in=w.shape[1], fan_out=w.shape[0],
            activation="linear" if last else activation,
            has_bias=biases is not None and biases[idx] is not None,
            weights_binary=binary,
            frozen=last and frozen_last,
        ))
    if binary and latent is None:
        latent = [w.copy() for w in weights]
    return Network(tuple(layers), tuple(weights),
                   None if biases is None else tuple(biases),
                   None if latent is None else tuple(latent))


def random_network(sizes, activation="relu", binary=False, committee=False,
                   has_bias=False, seed=0, dtype=np.float32):
    """Draw a fresh network: continuous weights uniform in ±sqrt(6/fan_in),
    binary latent uniform in [-1, 1]. ``committee=True`` fixes the output
    weights to 1 and freezes that layer."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    sizes = tuple(int(s) for s in sizes)
    weights, biases, latent = [], [], []
    layers = []
    for idx in range(len(sizes) - 1):
        fan_in, fan_out = sizes[idx], sizes[idx + 1]
        last = idx == len(sizes) - 2
        frozen = last and committee
        if binary:
            if frozen:
                g = np.ones((fan_out, fan_in), dtype=dtype)
            else:
                g = rng.uniform(-1.0, 1.0, size=(fan_out, fan_in)).astype(dtype)
            w = np.where(g >= 0, 1, -1).astype(dtype)
            latent.append(g)
        else:
            if frozen:
                w = np.ones((fan_out, fan_in), dtype=dtype)
            else:
                bound = np.sqrt(6.0 / fan_in)
                w = rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)
            latent.append(None)
        weights.append(w)
        biases.append(np.zeros(fan_out, dtype=dtype) if has_bias else None)
        layers.append(LayerSpec(fan_in, fan_out,
                                "linear" if last else activation,
                                has_bias=has_bias, weights_binary=binary,
                                frozen=frozen))
    return Network(tuple(layers), tuple(weights), tuple(biases), tuple(latent))


@dataclass(frozen=True)
class Dataset:
    """A labelled batch: inputs (P, N), integer labels, class count.

    Labels are class indices >= 0 for multi-output tasks and ±1 for
    single-output binary tasks.
    """

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        inputs = _freeze(np.asarray(self.inputs))
        labels = _freeze(np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ShapeError("inputs must be a P x N matrix with P >= 1")
        if labels.shape != (inputs.shape[0],):
            raise ShapeError("one label per pattern required")
        vals = np.unique(labels)
        if set(vals.tolist()) <= {-1, 1}:
            pass
        elif np.all(vals >= 0) and np.all(vals < self.num_classes):
            pass
        else:
            raise ShapeError("labels must be class indices or ±1")

    @property
    def num_patterns(self):
        return int(self.inputs.shape[0])

    @property
    def num_features(self):
        return int(self.inputs.shape[1])


def _apply_activation(z, activation):
    if activation == "relu":
        return np.maximum(z, 0)
    if activation == "sign":
        return kernels.sign_act(z)
    return z


def forward_arrays(layers, weights, biases, inputs):
    """Forward pass over raw parameter arrays (shared by trainers)."""
    x = inputs
    for spec, w, b in zip(layers, weights, biases):
        z = x @ w.T
        if b is not None:
            z = z + b
        x = _apply_activation(z, spec.activation)
    return x


def forward(net: Network, inputs) -> np.ndarray:
    """Logits (batch, H_L) for a batch of inputs. Pure function of its args."""
    inputs = np.asarray(inputs)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.shape[1] != net.layers[0].fan_in:
        raise ShapeError(
            f"input width {inputs.shape[1]} != first-layer fan_in {net.layers[0].fan_in}")
    inputs = inputs.astype(net.dtype, copy=False)
    return forward_arrays(net.layers, net.weights, net.biases, inputs)


def classify(logits, num_outputs: int) -> np.ndarray:
    """Labels from logits: argmax (ties to the lowest index) for multi-output
    heads, sign with sign(0)=+1 for single-output heads."""
    logits = np.asarray(logits)
    if num_outputs == 1:
        scores = logits.reshape(logits.shape[0])
        return np.where(scores >= 0, 1, -1).astype(np.int64)
    return np.argmax(logits, axis=1).astype(np.int64)


def error_count(net: Network, data: Dataset) -> int:
    logits = forward(net, data.inputs)
    if net.num_outputs == 1:
        return kernels.count_sign_errors(logits.reshape(-1), data.labels)
    return kernels.count_argmax_errors(logits, data.labels)


def train_error(net: Network, data: Dataset) -> float:
    """Exact fraction of misclassified patterns."""
    return error_count(net, data) / data.num_patterns


def binarize(net: Network) -> Network:
    """Reset the stored ±1 weights to sign(latent); latent is preserved."""
    if not net.is_binary:
        raise MissingLatentError("binarize needs a network with latent weights")
    new_w = []
    for spec, w, g in zip(net.layers, net.weights, net.latent):
        if spec.weights_binary:
            new_w.append(np.where(g >= 0, 1, -1).astype(w.dtype))
        else:
            new_w.append(w)
    return Network(net.layers, tuple(new_w), net.biases, net.latent)


def flatten_params(net: Network, use_latent=False, trainable_only=True) -> np.ndarray:
    """Concatenate parameters (all weight matrices row-major, then any
    biases) into one float64 vector. Frozen layers are skipped when
    ``trainable_only``."""
    parts = []
    for spec, w, g in zip(net.layers, net.weights, net.latent):
        if trainable_only and spec.frozen:
            continue
        src = g if (use_latent and g is not None) else w
        parts.append(src.astype(np.float64).ravel())
    for spec, b in zip(net.layers, net.biases):
        if b is not None and not (trainable_only and spec.frozen):
            parts.append(b.astype(np.float64).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten_params(net: Network, vec, trainable_only=True) -> Network:
    """Inverse of :func:`flatten_params`; frozen layers keep their values.

    For binary layers the vector block is taken as latent weights and the
    stored weights become their signs.
    """
    vec = np.asarray(vec, dtype=np.float64)
    pos = 0
    new_w, new_g = [], []
    for spec, w, g in zip(net.layers, net.weights, net.latent):
        if trainable_only and spec.frozen:
            new_w.append(w)
            new_g.append(g)
            continue
        block = vec[pos:pos + w.size].reshape(w.shape).astype(w.dtype)
        pos += w.size
        if spec.weights_binary:
            new_g.append(block)
            new_w.append(np.where(block >= 0, 1, -1).astype(w.dtype))
        else:
            new_w.append(block)
            new_g.append(None)
    new_b = []
    for spec, b in zip(net.layers, net.biases):
        if b is None or (trainable_only and spec.frozen):
            new_b.append(b)
        else:
            new_b.append(vec[pos:pos + b.size].reshape(b.shape).astype(b.dtype))
            pos += b.size
    if pos != vec.size:
        raise ShapeError(f"vector length {vec.size} does not match network ({pos} consumed)")
    return Network(net.layers, tuple(new_w), tuple(new_b), tuple(new_g))
