"""Classifiers exposing logits, a predicted label, and per-class input
gradients.

All attacks consume the ``Classifier`` contract. ``AffineClassifier`` gives
exact closed-form geometry for tests; ``MlpClassifier`` is a small
fully-connected ReLU network with hand-rolled reverse-mode gradients,
trainable by minibatch SGD.
"""

from __future__ import annotations

import abc
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import Rng, Tensor

MODEL_MAGIC = b"SFMODEL1"
_ACT_TAGS = {"identity": 0, "relu": 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}


class ModelFormatError(Exception):
    """Raised on malformed or truncated model files."""


class Classifier(abc.ABC):
    """Logits-plus-gradient oracle over flat input vectors."""

    num_classes: int
    input_shape: tuple[int, ...]

    @property
    def input_size(self) -> int:
        return int(np.prod(self.input_shape))

    def _check_input(self, x: Tensor) -> np.ndarray:
        if x.size != self.input_size:
            raise ValueError(
                f"input length {x.size} does not match input shape {self.input_shape}"
            )
        return x.data

    @abc.abstractmethod
    def logits(self, x: Tensor) -> Tensor:
        """All class logits at x."""

    @abc.abstractmethod
    def grad_matrix(self, x: Tensor) -> np.ndarray:
        """Jacobian of the logits w.r.t. x, shape [num_classes, n]."""

    def grad(self, x: Tensor, k: int) -> Tensor:
        """Gradient of logit k w.r.t. x."""
        if not 0 <= k < self.num_classes:
            raise ValueError(f"class index {k} out of range")
        return Tensor(self.grad_matrix(x)[k], (x.size,))

    def predict(self, x: Tensor) -> int:
        # argmax takes the lowest index on ties
        return int(np.argmax(self.logits(x).data))

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        """Logits for a batch of flat rows, shape [m, num_classes]."""
        return np.stack([self.logits(Tensor(row, (row.size,))).data for row in xs])


class AffineClassifier(Classifier):
    """logits(x) = W x + b. Gradients are the rows of W, independent of x."""

    def __init__(self, weights, biases, input_shape=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.biases = np.asarray(biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError("weights must be [num_classes, n], biases [num_classes]")
        self.num_classes = self.weights.shape[0]
        self.input_shape = tuple(input_shape) if input_shape else (self.weights.shape[1],)

    def logits(self, x: Tensor) -> Tensor:
        xd = self._check_input(x)
        return Tensor(self.weights @ xd + self.biases, (self.num_classes,))

    def grad_matrix(self, x: Tensor) -> np.ndarray:
        self._check_input(x)
        return self.weights.copy()

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        return xs @ self.weights.T + self.biases


@dataclass
class Layer:
    weights: np.ndarray  # [out, in]
    biases: np.ndarray  # [out]
    activation: str  # "relu" or "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.activation not in _ACT_TAGS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError("layer weight/bias shapes are inconsistent")


class MlpClassifier(Classifier):
    """Fully connected net; the last layer produces raw logits.

    ReLU derivative at exactly 0 is taken as 0.
    """

    def __init__(self, layers: list[Layer], input_shape=None):
        if not layers:
            raise ValueError("need at least one layer")
        for a, b in zip(layers, layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise ValueError("layer dimensions do not chain")
        self.layers = layers
        self.num_classes = layers[-1].weights.shape[0]
        n_in = layers[0].weights.shape[1]
        self.input_shape = tuple(input_shape) if input_shape else (n_in,)
        if int(np.prod(self.input_shape)) != n_in:
            raise ValueError("input_shape does not match first layer width")

    @classmethod
    def random(cls, widths: list[int], seed: int, input_shape=None) -> "MlpClassifier":
        """He-initialized net with the given layer widths
        (e.g. [784, 128, 64, 10]); hidden layers use ReLU."""
        rng = Rng(seed)
        layers = []
        for i, (n_in, n_out) in enumerate(zip(widths, widths[1:])):
            scale = np.sqrt(2.0 / n_in)
            w = rng.normal(size=(n_out, n_in)) * scale
            b = np.zeros(n_out)
            act = "identity" if i == len(widths) - 2 else "relu"
            layers.append(Layer(w, b, act))
        return cls(layers, input_shape=input_shape)

    def _forward(self, xd: np.ndarray):
        """Returns (logits, preactivations per layer, activations per layer).
        Works on a single flat vector or a batch of rows."""
        a = xd
        zs, acts = [], [a]
        for layer in self.layers:
            z = a @ layer.weights.T + layer.biases
            zs.append(z)
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
            acts.append(a)
        return a, zs, acts

    def logits(self, x: Tensor) -> Tensor:
        xd = self._check_input(x)
        out, _, _ = self._forward(xd)
        if not np.all(np.isfinite(out)):
            raise ValueError("non-finite logits")
        return Tensor(out, (self.num_classes,))

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        out, _, _ = self._forward(np.asarray(xs, dtype=np.float64))
        return out

    def grad_matrix(self, x: Tensor) -> np.ndarray:
        xd = self._check_input(x)
        _, zs, _ = self._forward(xd)
        # propagate the identity on the logits back through the layers
        g = np.eye(self.num_classes)
        for layer, z in zip(reversed(self.layers), reversed(zs)):
            if layer.activation == "relu":
                g = g * (z > 0.0)
            g = g @ layer.weights
        return g

    def preactivations(self, x: Tensor) -> list[np.ndarray]:
        xd = self._check_input(x)
        _, zs, _ = self._forward(xd)
        return zs

    def copy(self) -> "MlpClassifier":
        layers = [Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers]
        return MlpClassifier(layers, input_shape=self.input_shape)


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid epochs/batch_size")


@dataclass
class TrainResult:
    model: "MlpClassifier"
    train_accuracy: float
    val_accuracy: float | None
    final_loss: float


def _softmax_xent_grad(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and its gradient w.r.t. the logits."""
    m = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(m)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    nll = -(m[np.arange(n), labels] - np.log(exp.sum(axis=1)))
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    return float(nll.mean()), grad / n


def train_sgd(
    model: MlpClassifier,
    x: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    val_x: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> TrainResult:
    """Minibatch SGD under softmax cross-entropy. The input model is left
    untouched; a trained copy is returned. Fully deterministic per seed."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a nonempty [N, n] array")
    if labels.shape != (x.shape[0],):
        raise ValueError("label count does not match sample count")
    if labels.min() < 0 or labels.max() >= model.num_classes:
        raise ValueError("labels out of range")

    net = model.copy()
    rng = Rng(cfg.seed)
    loss = float("nan")
    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x[idx], labels[idx]
            out, zs, acts = net._forward(xb)
            loss, delta_a = _softmax_xent_grad(out, yb)
            if not np.isfinite(loss):
                raise ValueError("training loss diverged (non-finite)")
            # backprop through the layer list; delta_a is w.r.t. each
            # layer's output activation
            for layer, z, a_in in zip(reversed(net.layers), reversed(zs), reversed(acts[:-1])):
                delta_z = delta_a * (z > 0.0) if layer.activation == "relu" else delta_a
                gw = delta_z.T @ a_in
                gb = delta_z.sum(axis=0)
                delta_a = delta_z @ layer.weights
                layer.weights -= cfg.learning_rate * gw
                layer.biases -= cfg.learning_rate * gb
    train_acc = _accuracy(net, x, labels)
    val_acc = None
    if val_x is not None and val_labels is not None:
        val_acc = _accuracy(net, np.asarray(val_x, dtype=np.float64), np.asarray(val_labels))
    return TrainResult(net, train_acc, val_acc, loss)


def _accuracy(net: MlpClassifier, x: np.ndarray, labels: np.ndarray) -> float:
    preds = net.logits_batch(x).argmax(axis=1)
    return float((preds == labels).mean())


def save_model(model: MlpClassifier, path) -> None:
    """Binary format: magic "SFMODEL1", then little-endian u32 layer count
    and per layer u32 rows, u32 cols, u8 activation tag, row-major f64
    weights, f64 biases."""
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<I", len(model.layers)))
        for layer in model.layers:
            rows, cols = layer.weights.shape
            f.write(struct.pack("<IIB", rows, cols, _ACT_TAGS[layer.activation]))
            f.write(layer.weights.astype("<f8").tobytes())
            f.write(layer.biases.astype("<f8").tobytes())


def load_model(path, input_shape=None) -> MlpClassifier:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFormatError("bad magic bytes")
    off = len(MODEL_MAGIC)

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise ModelFormatError("truncated model file")
        chunk = blob[off : off + n]
        off += n
        return chunk

    (n_layers,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(n_layers):
        rows, cols, tag = struct.unpack("<IIB", take(9))
        if tag not in _TAG_ACTS:
            raise ModelFormatError(f"unknown activation tag {tag}")
        w = np.frombuffer(take(rows * cols * 8), dtype="<f8").reshape(rows, cols).copy()
        b = np.frombuffer(take(rows * 8), dtype="<f8").copy()
        layers.append(Layer(w, b, _TAG_ACTS[tag]))
    if off != len(blob):
        raise ModelFormatError("trailing bytes after model payload")
    if not layers:
        raise ModelFormatError("model file contains no layers")
    return MlpClassifier(layers, input_shape=input_shape)
