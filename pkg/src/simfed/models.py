"""Plaintext training core: logistic regression and MLP with mini-batch SGD.

Parameters live in a single flat float64 vector (weights then bias per
layer, layer by layer) so the encryption layer can treat a model as one
vector of reals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, UsageError

_PROB_FLOOR = 1e-12  # clamp before log to avoid infinities


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    exp_t = np.exp(t[~pos])
    out[~pos] = exp_t / (1.0 + exp_t)
    return out


def relu(t):
    return np.maximum(0.0, np.asarray(t, dtype=np.float64))


def leaky_relu(t, slope):
    t = np.asarray(t, dtype=np.float64)
    return np.where(t > 0, t, slope * t)


def tanh(t):
    return np.tanh(np.asarray(t, dtype=np.float64))


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


_ACTIVATIONS = ("sigmoid", "relu", "leaky_relu", "tanh")


def _activate(name, z, slope):
    if name == "sigmoid":
        return sigmoid(z)
    if name == "relu":
        return relu(z)
    if name == "leaky_relu":
        return leaky_relu(z, slope)
    if name == "tanh":
        return tanh(z)
    raise DomainError(f"unknown activation {name!r}")


def _activate_grad(name, z, a, slope):
    # Derivative w.r.t. the pre-activation z; `a` is the activation output.
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, slope)
    if name == "tanh":
        return 1.0 - a * a
    raise DomainError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description: logistic regression or MLP.

    Binary tasks use a single sigmoid output unit; multiclass uses one unit
    per class with softmax (or elementwise sigmoid when sigmoid_output is
    set, in which case rows of forward() are not normalized).
    """

    kind: str
    input_dim: int
    num_classes: int
    hidden_layers: tuple = ()
    leaky_slope: float = 0.1
    sigmoid_output: bool = False

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp"):
            raise DomainError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise DomainError("input_dim must be >= 1 and num_classes >= 2")
        if self.kind == "logistic" and self.hidden_layers:
            raise DomainError("logistic model takes no hidden layers")
        if self.kind == "mlp" and not self.hidden_layers:
            raise DomainError("mlp requires at least one hidden layer")
        if not 0.0 < self.leaky_slope < 1.0:
            raise DomainError("leaky_slope must be in (0, 1)")
        for width, act in self.hidden_layers:
            if width < 1:
                raise DomainError("hidden layer width must be positive")
            if act not in _ACTIVATIONS:
                raise DomainError(f"unknown activation {act!r}")

    @property
    def output_units(self) -> int:
        return 1 if self.num_classes == 2 else self.num_classes

    @property
    def layer_dims(self) -> tuple:
        return (self.input_dim, *(w for w, _ in self.hidden_layers), self.output_units)

    @property
    def param_count(self) -> int:
        dims = self.layer_dims
        return sum((i + 1) * o for i, o in zip(dims[:-1], dims[1:]))

    def layer_shapes(self) -> tuple:
        dims = self.layer_dims
        return tuple((i, o) for i, o in zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class ModelParams:
    """All weights and biases as one flat vector plus the layer shapes."""

    flat: np.ndarray
    shapes: tuple

    def __post_init__(self):
        expected = sum((i + 1) * o for i, o in self.shapes)
        if self.flat.ndim != 1 or self.flat.size != expected:
            raise DimensionError(
                f"flat vector has {self.flat.size} entries, shapes imply {expected}"
            )

    @property
    def size(self) -> int:
        return self.flat.size


@dataclass(frozen=True)
class MiniBatch:
    """A batch of inputs with one-hot labels."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if self.X.shape[0] != self.Y.shape[0]:
            raise DimensionError("X and Y row counts differ")
        if not np.all(np.isfinite(self.X)):
            raise DomainError("X contains non-finite values")
        if not np.allclose(self.Y.sum(axis=1), 1.0):
            raise DomainError("Y rows must be one-hot (sum to 1)")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int
    local_epochs_per_round: int
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise DomainError("learning_rate and batch_size must be positive")
        if self.local_epochs_per_round < 0:
            raise DomainError("local_epochs_per_round must be >= 0")


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """Uniform(-r, r) weights with r = sqrt(6 / (fan_in + fan_out)); zero biases."""
    parts = []
    for fan_in, fan_out in spec.layer_shapes():
        r = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-r, r, size=(fan_in, fan_out)).ravel())
        parts.append(np.zeros(fan_out))
    return ModelParams(flat=np.concatenate(parts), shapes=spec.layer_shapes())


def params_from_flat(spec: ModelSpec, flat) -> ModelParams:
    return ModelParams(
        flat=np.asarray(flat, dtype=np.float64).copy(), shapes=spec.layer_shapes()
    )


def params_to_bytes(params: ModelParams) -> bytes:
    """Debug export: 4-byte big-endian count, then big-endian 64-bit reals."""
    out = [len(params.flat).to_bytes(4, "big")]
    out.append(params.flat.astype(">f8").tobytes())
    return b"".join(out)


def params_from_bytes(spec: ModelSpec, data: bytes) -> ModelParams:
    count = int.from_bytes(data[:4], "big")
    if len(data) != 4 + 8 * count:
        raise DimensionError(f"expected {4 + 8 * count} bytes, got {len(data)}")
    flat = np.frombuffer(data[4:], dtype=">f8").astype(np.float64)
    return params_from_flat(spec, flat)


def unflatten(params: ModelParams):
    """Split the flat vector into (W, b) pairs per layer."""
    layers = []
    offset = 0
    for fan_in, fan_out in params.shapes:
        w = params.flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params.flat[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def flatten_layers(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in layers])


def _forward_pass(spec: ModelSpec, params: ModelParams, X):
    """Return (pre-activations, activations incl. input, output probs)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DimensionError(
            f"input has shape {X.shape}, expected (batch, {spec.input_dim})"
        )
    layers = unflatten(params)
    acts = [X]
    pres = []
    for (w, b), (_, act_name) in zip(layers[:-1], spec.hidden_layers):
        z = acts[-1] @ w + b
        pres.append(z)
        acts.append(_activate(act_name, z, spec.leaky_slope))
    w_out, b_out = layers[-1]
    z_out = acts[-1] @ w_out + b_out
    pres.append(z_out)
    if spec.output_units == 1:
        p = sigmoid(z_out)
        probs = np.hstack([1.0 - p, p])
    elif spec.sigmoid_output:
        probs = sigmoid(z_out)
    else:
        probs = softmax(z_out)
    return pres, acts, probs


def forward(spec: ModelSpec, params: ModelParams, X) -> np.ndarray:
    """Class-probability matrix, one row per sample."""
    return _forward_pass(spec, params, X)[2]


def cost(spec: ModelSpec, params: ModelParams, batch: MiniBatch) -> float:
    """Mean categorical cross-entropy over the batch."""
    probs = forward(spec, params, batch.X)
    return float(-np.sum(batch.Y * np.log(np.clip(probs, _PROB_FLOOR, None)))
                 / batch.X.shape[0])


def gradients(spec: ModelSpec, params: ModelParams, batch: MiniBatch) -> np.ndarray:
    """Analytic gradient of cost() w.r.t. the flat parameter vector."""
    pres, acts, probs = _forward_pass(spec, params, batch.X)
    batch_size = batch.X.shape[0]
    layers = unflatten(params)

    if spec.output_units == 1:
        p = probs[:, 1:2]
        d_z = (p - batch.Y[:, 1:2]) / batch_size
    elif spec.sigmoid_output:
        d_z = -(batch.Y * (1.0 - probs)) / batch_size
    else:
        d_z = (probs - batch.Y) / batch_size

    grads = [None] * len(layers)
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        grads[idx] = (acts[idx].T @ d_z, d_z.sum(axis=0))
        if idx > 0:
            d_a = d_z @ w.T
            act_name = spec.hidden_layers[idx - 1][1]
            d_z = d_a * _activate_grad(act_name, pres[idx - 1], acts[idx], spec.leaky_slope)
    return flatten_layers(grads)


def sgd_step(params: ModelParams, grad: np.ndarray, learning_rate: float) -> ModelParams:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.flat.shape:
        raise DimensionError("gradient length does not match parameter vector")
    return ModelParams(flat=params.flat - learning_rate * grad, shapes=params.shapes)


def train_local(spec, params, data, cfg: TrainConfig, rng=None) -> ModelParams:
    """Run shuffled mini-batch SGD for local_epochs_per_round epochs.

    `data` needs .X and .y (integer labels). Deterministic for a given rng
    state; when rng is None a fresh generator is seeded from cfg.seed.
    """
    n = data.X.shape[0]
    if n == 0:
        raise UsageError("cannot train on an empty dataset")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    labels = one_hot(data.y, spec.num_classes)
    current = params
    for _ in range(cfg.local_epochs_per_round):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = MiniBatch(X=data.X[idx], Y=labels[idx])
            current = sgd_step(current, gradients(spec, current, batch), cfg.learning_rate)
    return current


def evaluate(spec, params, data) -> tuple:
    """(mean cross-entropy, argmax accuracy) over the dataset."""
    if data.X.shape[0] == 0:
        raise UsageError("cannot evaluate on an empty dataset")
    batch = MiniBatch(X=data.X, Y=one_hot(data.y, spec.num_classes))
    probs = forward(spec, params, batch.X)
    predicted = probs.argmax(axis=1)
    accuracy = float(np.mean(predicted == np.asarray(data.y)))
    test_error = float(-np.sum(batch.Y * np.log(np.clip(probs, _PROB_FLOOR, None)))
                       / batch.X.shape[0])
    return test_error, accuracy
