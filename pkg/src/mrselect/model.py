"""Dense classifier with activation capture, MC-dropout sampling, SGD training
and gradient-sign perturbation.

Hidden layers use ReLU; the output layer is softmax. "Neuron" means any hidden
post-activation scalar. Dropout is inverted (surviving activations scaled by
1/(1-p)) so plain inference needs no rescaling. All stochastic paths are keyed
by explicit integer seeds: the dropout stream of input i under seed s is
numpy's default_rng([s, i]), with one uniform block of size total_hidden drawn
per MC sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .errors import DimensionMismatch, EmptyDataset, MalformedFile, ShapeMismatch

FORMAT_VERSION = 1


@dataclass
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str  # "relu" | "softmax"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ShapeMismatch("layer weight/bias shapes inconsistent")
        if self.act not in ("relu", "softmax"):
            raise ShapeMismatch(f"unknown activation {self.act!r}")


@dataclass
class MlpModel:
    layers: list[Layer]
    dropout_rates: list[float]  # one per hidden layer
    input_dim: int = field(init=False)
    num_classes: int = field(init=False)

    def __post_init__(self):
        if not self.layers:
            raise ShapeMismatch("model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.w.shape[1] != prev.w.shape[0]:
                raise ShapeMismatch("consecutive layer dimensions do not compose")
        if self.layers[-1].act != "softmax":
            raise ShapeMismatch("final layer must be softmax")
        n_hidden = len(self.layers) - 1
        if len(self.dropout_rates) != n_hidden:
            raise ShapeMismatch("need one dropout rate per hidden layer")
        if any(not (0.0 <= p < 1.0) for p in self.dropout_rates):
            raise ShapeMismatch("dropout rates must lie in [0, 1)")
        self.input_dim = self.layers[0].w.shape[1]
        self.num_classes = self.layers[-1].w.shape[0]

    @property
    def hidden_widths(self) -> list[int]:
        return [layer.w.shape[0] for layer in self.layers[:-1]]

    @property
    def total_hidden(self) -> int:
        return sum(self.hidden_widths)

    @property
    def layer_offsets(self) -> list[int]:
        offs, acc = [], 0
        for w in self.hidden_widths:
            offs.append(acc)
            acc += w
        return offs


@dataclass
class ActivationTrace:
    """Flat vector of all hidden post-activation outputs for one input."""

    values: np.ndarray
    layer_offsets: list[int]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _flatten_checked(model: MlpModel, image: np.ndarray) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64).reshape(-1)
    if x.shape[0] != model.input_dim:
        raise DimensionMismatch(
            f"flattened image has {x.shape[0]} values, model expects {model.input_dim}"
        )
    return x


def _forward_rows(model: MlpModel, X: np.ndarray, masks=None):
    """Batched forward pass. X is (N, input_dim); masks, when given, is a list
    of (N, width) inverted-dropout multipliers, one per hidden layer.

    Returns (probs (N, num_classes), traces (N, total_hidden)).
    """
    a = X
    hidden = []
    for i, layer in enumerate(model.layers[:-1]):
        a = np.maximum(a @ layer.w.T + layer.b, 0.0)
        if masks is not None:
            a = a * masks[i]
        hidden.append(a)
    out = model.layers[-1]
    probs = _softmax(a @ out.w.T + out.b)
    traces = np.concatenate(hidden, axis=1) if hidden else np.zeros((len(X), 0))
    return probs, traces


def _draw_masks(model: MlpModel, rng, n_rows: int, rates=None):
    """One uniform block of size total_hidden per row, sliced per layer."""
    rates = model.dropout_rates if rates is None else rates
    widths = model.hidden_widths
    u = rng.random(n_rows * sum(widths)).reshape(n_rows, sum(widths))
    masks, off = [], 0
    for w, p in zip(widths, rates):
        block = u[:, off : off + w]
        masks.append(np.where(block >= p, 1.0 / (1.0 - p), 0.0) if p > 0 else np.ones_like(block))
        off += w
    return masks


def forward(model: MlpModel, image: np.ndarray, dropout: tuple | None = None):
    """One forward pass. `dropout` is an optional (rate_override, seed) pair;
    rate_override may be None to use the model's own rates.

    Returns (softmax vector, ActivationTrace).
    """
    x = _flatten_checked(model, image)[None, :]
    masks = None
    if dropout is not None:
        rates, seed = dropout
        masks = _draw_masks(model, np.random.default_rng(seed), 1, rates)
    probs, traces = _forward_rows(model, x, masks)
    return probs[0], ActivationTrace(traces[0], model.layer_offsets)


def predict_batch(model: MlpModel, X: np.ndarray):
    """Deterministic (no dropout) batched forward.

    Returns (probs (N, C), traces (N, total_hidden)).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected (N, {model.input_dim}) batch, got {X.shape}")
    return _forward_rows(model, X)


def certainty(model: MlpModel, image: np.ndarray, n_samples: int, seed: int, stream: int = 0) -> float:
    """MC-dropout confidence: max component of the softmax averaged over
    n_samples stochastic passes. The mask stream is default_rng([seed, stream])
    so batched evaluation (stream = input index) replays identically.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = _flatten_checked(model, image)[None, :]
    rng = np.random.default_rng([seed, stream])
    acc = np.zeros(model.num_classes)
    for _ in range(n_samples):
        masks = _draw_masks(model, rng, 1)
        probs, _ = _forward_rows(model, x, masks)
        acc += probs[0]
    return float((acc / n_samples).max())


def certainty_batch(model: MlpModel, X: np.ndarray, n_samples: int, seed: int) -> np.ndarray:
    """Vectorized certainty for a (N, input_dim) batch; row i uses the same
    mask stream as certainty(..., stream=i).
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    total = model.total_hidden
    if total == 0 or all(p == 0 for p in model.dropout_rates):
        probs, _ = _forward_rows(model, X)
        return probs.max(axis=1)
    # (N, n_samples, total_hidden) uniforms, one stream per input.
    u = np.empty((n, n_samples, total))
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        u[i] = rng.random(n_samples * total).reshape(n_samples, total)
    widths = model.hidden_widths
    rows = np.repeat(X, n_samples, axis=0)
    masks, off = [], 0
    for w, p in zip(widths, model.dropout_rates):
        block = u[:, :, off : off + w].reshape(n * n_samples, w)
        masks.append(np.where(block >= p, 1.0 / (1.0 - p), 0.0) if p > 0 else np.ones_like(block))
        off += w
    probs, _ = _forward_rows(model, rows, masks)
    mean = probs.reshape(n, n_samples, -1).mean(axis=1)
    return mean.max(axis=1)


def input_gradient(model: MlpModel, image: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the cross-entropy loss w.r.t. the input, no dropout."""
    x = _flatten_checked(model, image)
    a = x[None, :]
    pre_acts = []
    for layer in model.layers[:-1]:
        z = a @ layer.w.T + layer.b
        pre_acts.append(z)
        a = np.maximum(z, 0.0)
    out = model.layers[-1]
    probs = _softmax(a @ out.w.T + out.b)
    delta = probs.copy()
    delta[0, label] -= 1.0
    delta = delta @ out.w
    for layer, z in zip(reversed(model.layers[:-1]), reversed(pre_acts)):
        delta = delta * (z > 0)
        delta = delta @ layer.w
    return delta[0].reshape(np.asarray(image).shape)


def fgsm(model: MlpModel, image: np.ndarray, label: int, epsilon: float) -> np.ndarray:
    """Gradient-sign perturbation: clamp(x + eps * sign(dL/dx), 0, 1)."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    image = np.asarray(image, dtype=np.float64)
    if epsilon == 0:
        return image.copy()
    grad = input_gradient(model, image, label)
    return np.clip(image + epsilon * np.sign(grad), 0.0, 1.0)


def train_toy(
    hidden_sizes: list[int],
    dropout_rates: list[float],
    data: LabeledDataset,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
) -> MlpModel:
    """Train a small dense classifier with SGD + cross-entropy.

    Deterministic given the seed. Dropout (inverted) is active during training
    using the given per-hidden-layer rates.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if len(dropout_rates) != len(hidden_sizes):
        raise ShapeMismatch("need one dropout rate per hidden layer")

    rng = np.random.default_rng(seed)
    dims = [int(np.prod(data.image_shape))] + list(hidden_sizes) + [data.num_classes]
    Ws = [rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
    bs = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]

    X = data.flat
    Y = np.eye(data.num_classes)[data.labels]
    n = len(X)
    n_hidden = len(hidden_sizes)

    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            xb, yb = X[idx], Y[idx]
            # forward with dropout
            acts = [xb]
            masks = []
            pre = []
            a = xb
            for li in range(n_hidden):
                z = a @ Ws[li].T + bs[li]
                pre.append(z)
                a = np.maximum(z, 0.0)
                p = dropout_rates[li]
                if p > 0:
                    m = np.where(rng.random(a.shape) >= p, 1.0 / (1.0 - p), 0.0)
                else:
                    m = np.ones_like(a)
                masks.append(m)
                a = a * m
                acts.append(a)
            probs = _softmax(a @ Ws[-1].T + bs[-1])
            # backward
            delta = (probs - yb) / len(xb)
            grads_w = [None] * len(Ws)
            grads_b = [None] * len(Ws)
            grads_w[-1] = delta.T @ acts[-1]
            grads_b[-1] = delta.sum(axis=0)
            delta = delta @ Ws[-1]
            for li in reversed(range(n_hidden)):
                delta = delta * masks[li] * (pre[li] > 0)
                grads_w[li] = delta.T @ acts[li]
                grads_b[li] = delta.sum(axis=0)
                delta = delta @ Ws[li]
            for li in range(len(Ws)):
                Ws[li] -= lr * grads_w[li]
                bs[li] -= lr * grads_b[li]

    layers = [Layer(Ws[i], bs[i], "relu") for i in range(n_hidden)]
    layers.append(Layer(Ws[-1], bs[-1], "softmax"))
    return MlpModel(layers, list(dropout_rates))


def train_accuracy(model: MlpModel, data: LabeledDataset) -> float:
    probs, _ = predict_batch(model, data.flat)
    return float((probs.argmax(axis=1) == data.labels).mean())


def save_model(model: MlpModel, path) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "layers": [
            {
                "w": layer.w.tolist(),
                "b": layer.b.tolist(),
                "act": layer.act,
                "dropout": (model.dropout_rates[i] if i < len(model.layers) - 1 else 0.0),
            }
            for i, layer in enumerate(model.layers)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> MlpModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != FORMAT_VERSION or "layers" not in doc:
        raise MalformedFile(f"{path} is not a version-{FORMAT_VERSION} model file")
    try:
        layers = [Layer(np.array(l["w"]), np.array(l["b"]), l["act"]) for l in doc["layers"]]
        rates = [float(l.get("dropout", 0.0)) for l in doc["layers"][:-1]]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"bad layer entry in {path}: {exc}") from exc
    return MlpModel(layers, rates)
