"""Feed-forward classifier core: a ReLU multilayer perceptron with a softmax
output, mini-batch gradient descent on cross-entropy, and elementwise model
averaging.

All math runs in float64 numpy and all randomness flows through explicit
seeds or generators, so identical inputs give bit-identical results on a
given platform.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AggregationError, NumericError

SMALL_HIDDEN = (16, 8)
LARGE_HIDDEN = (128, 32)

_PARAMS_MAGIC = b"DFLP"
_PARAMS_VERSION = 1


@dataclass(frozen=True)
class ModelArch:
    """Layer layout of the classifier: input width, hidden widths, classes."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "relu"
    output_activation: str = "softmax"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer sizes must be positive")
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported hidden activation: {self.hidden_activation!r}")
        if self.output_activation != "softmax":
            raise ValueError(f"unsupported output activation: {self.output_activation!r}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) shape of each weight matrix, input to output order."""
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


def small_arch(input_dim: int = 22, output_dim: int = 2) -> ModelArch:
    return ModelArch(input_dim, SMALL_HIDDEN, output_dim)


def large_arch(input_dim: int = 22, output_dim: int = 2) -> ModelArch:
    return ModelArch(input_dim, LARGE_HIDDEN, output_dim)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for local mini-batch gradient descent.

    A zero learning rate is accepted and leaves parameters untouched, which
    is occasionally useful as a control.
    """

    learning_rate: float = 0.01
    batch_size: int = 32
    local_epochs_per_round: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.local_epochs_per_round < 1:
            raise ValueError("local_epochs_per_round must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass
class ModelParams:
    """Per-layer weight matrices (out x in) and bias vectors.

    This is the unit exchanged and averaged between nodes. Arrays are
    float64; shapes must match ``arch`` exactly.
    """

    arch: ModelArch
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        shapes = self.arch.layer_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("layer count does not match architecture")
        for li, (w, b, shape) in enumerate(zip(self.weights, self.biases, shapes)):
            if w.shape != shape or b.shape != (shape[0],):
                raise ValueError(
                    f"layer {li}: got weight {w.shape} / bias {b.shape}, expected {shape}"
                )

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def to_bytes(self) -> bytes:
        """Flat binary form: magic, version, layer dims, then float64
        little-endian payload per layer (weights row-major, then biases)."""
        dims = (self.arch.input_dim, *self.arch.hidden_dims, self.arch.output_dim)
        head = _PARAMS_MAGIC + struct.pack("<BI", _PARAMS_VERSION, len(dims))
        head += struct.pack(f"<{len(dims)}I", *dims)
        payload = b"".join(
            np.ascontiguousarray(a, dtype="<f8").tobytes()
            for w, b in zip(self.weights, self.biases)
            for a in (w, b)
        )
        return head + payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ModelParams":
        if raw[:4] != _PARAMS_MAGIC:
            raise ValueError("not a serialized model (bad magic)")
        version, depth = struct.unpack_from("<BI", raw, 4)
        if version != _PARAMS_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        dims = struct.unpack_from(f"<{depth}I", raw, 9)
        arch = ModelArch(dims[0], tuple(dims[1:-1]), dims[-1])
        offset = 9 + 4 * depth
        weights, biases = [], []
        for out_dim, in_dim in arch.layer_shapes:
            w = np.frombuffer(raw, dtype="<f8", count=out_dim * in_dim, offset=offset)
            offset += 8 * out_dim * in_dim
            b = np.frombuffer(raw, dtype="<f8", count=out_dim, offset=offset)
            offset += 8 * out_dim
            weights.append(w.reshape(out_dim, in_dim).copy())
            biases.append(b.copy())
        if offset != len(raw):
            raise ValueError("trailing bytes in serialized model")
        return cls(arch, weights, biases)


@dataclass
class TrainStats:
    epoch_losses: list[float] = field(default_factory=list)


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    """Bitwise equality of two parameter sets."""
    return a.arch == b.arch and all(
        np.array_equal(x, y)
        for x, y in zip(a.weights + a.biases, b.weights + b.biases)
    )


def params_max_abs_diff(a: ModelParams, b: ModelParams) -> float:
    if a.arch != b.arch:
        raise AggregationError("cannot compare parameters of different architectures")
    return max(
        float(np.max(np.abs(x - y))) if x.size else 0.0
        for x, y in zip(a.weights + a.biases, b.weights + b.biases)
    )


def init_params(arch: ModelArch, seed: int) -> ModelParams:
    """Fresh parameters: weights uniform in +/- 1/sqrt(fan_in), biases zero.

    Deterministic for a given (arch, seed).
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for out_dim, in_dim in arch.layer_shapes:
        limit = 1.0 / np.sqrt(in_dim)
        weights.append(rng.uniform(-limit, limit, size=(out_dim, in_dim)))
        biases.append(np.zeros(out_dim))
    return ModelParams(arch, weights, biases)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_pass(params: ModelParams, x: np.ndarray):
    """Returns (pre-activations per layer, activations per layer).

    activations[0] is the input batch; the last pre-activation is the logit
    matrix (no softmax applied).
    """
    zs = []
    acts = [x]
    depth = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        zs.append(z)
        acts.append(np.maximum(z, 0.0) if i < depth - 1 else z)
    return zs, acts


def _as_batch(params: ModelParams, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim:
        raise ValueError(
            f"feature width {x.shape[-1] if x.ndim else 0} does not match "
            f"input_dim {params.arch.input_dim}"
        )
    return x


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError("labels must be a 1-D vector")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return y.astype(np.int64)


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probability vector for a single feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a single 1-D feature vector")
    return forward_batch(params, x[None, :])[0]


def forward_batch(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probability rows for a (n, input_dim) feature matrix."""
    x = _as_batch(params, features)
    zs, _ = _forward_pass(params, x)
    return _softmax(zs[-1])


def cross_entropy_loss(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of a labeled batch (log-sum-exp form)."""
    x = _as_batch(params, features)
    y = _check_labels(labels, params.arch.output_dim)
    if x.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree in length")
    zs, _ = _forward_pass(params, x)
    logits = zs[-1]
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return float(np.mean(lse - logits[np.arange(len(y)), y]))


def gradients(params: ModelParams, features: np.ndarray, labels: np.ndarray):
    """Analytic gradients of the mean cross-entropy loss over the batch.

    Returns (weight_grads, bias_grads), lists shaped exactly like
    ``params.weights`` / ``params.biases``. ReLU uses subgradient 0 at 0.
    """
    x = _as_batch(params, features)
    y = _check_labels(labels, params.arch.output_dim)
    if x.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree in length")
    zs, acts = _forward_pass(params, x)
    probs = _softmax(zs[-1])
    return _backward(params, zs, acts, probs, y)


def _backward(params: ModelParams, zs, acts, probs, y):
    n = len(y)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    weight_grads = [None] * len(params.weights)
    bias_grads = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        weight_grads[i] = delta.T @ acts[i]
        bias_grads[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (zs[i - 1] > 0.0)
    return weight_grads, bias_grads


def _sgd_step(params: ModelParams, x: np.ndarray, y: np.ndarray, lr: float) -> float:
    """One in-place gradient step. Returns the pre-step batch loss."""
    zs, acts = _forward_pass(params, x)
    logits = zs[-1]
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(len(y)), y]))
    probs = _softmax(logits)
    weight_grads, bias_grads = _backward(params, zs, acts, probs, y)
    for w, b, gw, gb in zip(params.weights, params.biases, weight_grads, bias_grads):
        w -= lr * gw
        b -= lr * gb
    return loss


def train_local(
    params: ModelParams,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    *,
    rng: np.random.Generator | None = None,
    epochs: int | None = None,
) -> TrainStats:
    """Mini-batch gradient descent on the given rows, mutating ``params``.

    The shuffle order is drawn from ``rng`` (or from ``cfg.seed`` when no
    generator is supplied), so the same seed and data reproduce the exact
    same parameters. Raises NumericError if the loss stops being finite.
    """
    x = _as_batch(params, features)
    y = _check_labels(labels, params.arch.output_dim)
    n = x.shape[0]
    if n == 0:
        raise ValueError("training data must be non-empty")
    if n != y.shape[0]:
        raise ValueError("features and labels disagree in length")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n_epochs = cfg.local_epochs_per_round if epochs is None else epochs
    if n_epochs < 0:
        raise ValueError("epochs must be non-negative")

    stats = TrainStats()
    for epoch in range(n_epochs):
        order = rng.permutation(n)
        batch_losses = []
        for b_index, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            loss = _sgd_step(params, x[idx], y[idx], cfg.learning_rate)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss {loss!r} at epoch {epoch}, batch {b_index} "
                    f"(lr={cfg.learning_rate}, batch_size={cfg.batch_size}, n={n})"
                )
            batch_losses.append(loss)
        stats.epoch_losses.append(float(np.mean(batch_losses)))
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NumericError(f"non-finite parameters in layer {li} after training")
    return stats


def evaluate(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax class matches the label.

    Ties in the class scores resolve toward class 0 (argmax takes the first
    maximal index), which keeps evaluation deterministic.
    """
    x = _as_batch(params, features)
    y = _check_labels(labels, params.arch.output_dim)
    if x.shape[0] == 0:
        raise ValueError("evaluation data must be non-empty")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels disagree in length")
    zs, _ = _forward_pass(params, x)
    preds = np.argmax(zs[-1], axis=1)
    return float(np.mean(preds == y))


def federated_average(
    own: ModelParams,
    received: list[ModelParams],
    weights: list[float] | None = None,
) -> ModelParams:
    """Elementwise weighted mean of ``own`` plus every received model.

    Weights cover own first, then the received list in order; they default
    to uniform. With no received models this reduces to an identity copy.
    """
    models = [own, *received]
    for m in models[1:]:
        if m.arch != own.arch:
            raise AggregationError(
                f"architecture mismatch: {m.arch.layer_shapes} vs {own.arch.layer_shapes}"
            )
    if weights is None:
        norm = [1.0 / len(models)] * len(models)
    else:
        ws = [float(w) for w in weights]
        if len(ws) != len(models):
            raise ValueError(f"expected {len(models)} weights, got {len(ws)}")
        if any(w < 0 for w in ws):
            raise ValueError("weights must be non-negative")
        total = sum(ws)
        if total <= 0:
            raise ValueError("weights must not all be zero")
        norm = [w / total for w in ws]

    out_w = [norm[0] * w for w in models[0].weights]
    out_b = [norm[0] * b for b in models[0].biases]
    for m, wgt in zip(models[1:], norm[1:]):
        for li in range(len(out_w)):
            out_w[li] += wgt * m.weights[li]
            out_b[li] += wgt * m.biases[li]
    return ModelParams(own.arch, out_w, out_b)
