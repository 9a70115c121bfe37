"""Dense feed-forward classifier: inference, loss, exact backprop and SGD.

Parameters are stored as float32; every matmul and reduction runs in
float64 and results are cast back on the way out.  All functions accept a
single input vector ``(d,)`` or a batch ``(n, d)`` and return matching
shapes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ConfigError, ShapeError

RELU = "relu"
IDENTITY = "identity"
ACTIVATIONS = (RELU, IDENTITY)

# floor inside log(p) so saturated probabilities stay finite
EPS_NUM = 1e-12
# forward-difference step for Hessian-vector products
HVP_STEP = 1e-3


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (out, in) float32
    bias: np.ndarray  # (out,) float32
    activation: str = RELU

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        b = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)
        if w.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ShapeError(f"bias length {b.shape[0]} != weights rows {w.shape[0]}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MlpModel:
    layers: tuple[DenseLayer, ...]
    input_dim: int = field(init=False)
    num_classes: int = field(init=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ShapeError(
                    f"layer dims do not chain: {prev.fan_out} -> {nxt.fan_in}"
                )
        if layers[-1].activation != IDENTITY:
            raise ShapeError("last layer must use the identity activation (logits)")
        if layers[-1].fan_out < 2:
            raise ShapeError("num_classes must be >= 2")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", layers[0].fan_in)
        object.__setattr__(self, "num_classes", layers[-1].fan_out)

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [layer.fan_out for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def equals(self, other: "MlpModel") -> bool:
        """Bit-exact parameter equality."""
        if self.sizes != other.sizes:
            return False
        for a, b in zip(self.layers, other.layers):
            if a.activation != b.activation:
                return False
            if a.weights.tobytes() != b.weights.tobytes() or a.bias.tobytes() != b.bias.tobytes():
                return False
        return True


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray  # (n, d) float32 in [0, 1]
    labels: np.ndarray  # (n,) int64

    def __post_init__(self):
        x = np.ascontiguousarray(self.inputs, dtype=np.float32)
        y = np.ascontiguousarray(self.labels).astype(np.int64).reshape(-1)
        if x.ndim != 2:
            raise ShapeError(f"inputs must be (n, d), got {x.shape}")
        if x.shape[0] != y.shape[0]:
            raise ShapeError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
        if x.shape[0] < 1:
            raise ArgumentError("dataset must hold at least one example")
        if not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
            raise ArgumentError("every input entry must lie in [0, 1]")
        if y.min() < 0:
            raise ArgumentError("labels must be non-negative")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.inputs[idx], self.labels[idx])

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        return LabeledDataset(
            np.concatenate([self.inputs, other.inputs]),
            np.concatenate([self.labels, other.labels]),
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")


def init_mlp(sizes: Sequence[int], rng_seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases; ReLU everywhere but the logits."""
    if len(sizes) < 2:
        raise ShapeError("sizes needs at least input and output widths")
    rng = np.random.default_rng(rng_seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = IDENTITY if i == len(sizes) - 2 else RELU
        layers.append(DenseLayer(w.astype(np.float32), np.zeros(fan_out, np.float32), act))
    return MlpModel(tuple(layers))


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    single = x.ndim == 1
    xb = x.reshape(1, -1) if single else x
    if xb.ndim != 2 or xb.shape[1] != model.input_dim:
        raise ShapeError(f"expected input of length {model.input_dim}, got shape {x.shape}")
    return xb.astype(np.float64, copy=False), single


def _forward_cache(model: MlpModel, xb: np.ndarray):
    """Run the net on a float64 batch, keeping pre-activations for backprop."""
    acts = [xb]
    pre = []
    h = xb
    for layer in model.layers:
        z = h @ layer.weights.T.astype(np.float64) + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == RELU else z
        acts.append(h)
    return acts, pre


def _backprop_input(model: MlpModel, pre: list[np.ndarray], dz: np.ndarray) -> np.ndarray:
    """Push a logit-space gradient back to the input."""
    delta = dz
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == RELU:
            delta = delta * (pre[i] > 0)
        delta = delta @ layer.weights.astype(np.float64)
    return delta


def forward64(model: MlpModel, x) -> np.ndarray:
    """Logits in float64; used by oracles that need full precision."""
    xb, single = _as_batch(model, x)
    logits = _forward_cache(model, xb)[0][-1]
    return logits[0] if single else logits


def forward(model: MlpModel, x) -> np.ndarray:
    return forward64(model, x).astype(np.float32)


def _softmax64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    return _softmax64(logits).astype(np.float32)


def cross_entropy(probs, y):
    """``-ln(p[y] + 1e-12)``; vectorised when ``probs`` is a batch."""
    p = np.asarray(probs, dtype=np.float64)
    y_arr = np.asarray(y)
    c = p.shape[-1]
    if np.any(y_arr < 0) or np.any(y_arr >= c):
        raise IndexError(f"label {y} out of range for {c} classes")
    if p.ndim == 1:
        return float(-np.log(max(p[int(y_arr)], EPS_NUM)))
    return -np.log(np.maximum(p[np.arange(p.shape[0]), y_arr], EPS_NUM))


def loss(model: MlpModel, x, y):
    """Cross-entropy of the model at ``x`` against label(s) ``y``."""
    return cross_entropy(_softmax64(forward64(model, x)), y)


def _check_labels(model: MlpModel, y, n: int) -> np.ndarray:
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (n,))
    if np.any(y < 0) or np.any(y >= model.num_classes):
        raise IndexError(f"label out of range for {model.num_classes} classes")
    return y


def input_gradient64(model: MlpModel, x, y) -> np.ndarray:
    xb, single = _as_batch(model, x)
    yb = _check_labels(model, y, xb.shape[0])
    acts, pre = _forward_cache(model, xb)
    dz = _softmax64(acts[-1])
    dz[np.arange(xb.shape[0]), yb] -= 1.0
    g = _backprop_input(model, pre, dz)
    return g[0] if single else g


def input_gradient(model: MlpModel, x, y) -> np.ndarray:
    """d cross_entropy(softmax(f(x)), y) / dx by exact backprop.

    For a batch, row i is the gradient of sample i's own loss.
    """
    return input_gradient64(model, x, y).astype(np.float32)


def predict(model: MlpModel, x):
    """Argmax class; ``np.argmax`` already breaks ties toward the lowest index."""
    logits = forward64(model, x)
    out = np.argmax(logits, axis=-1)
    return int(out) if np.ndim(out) == 0 else out.astype(np.int64)


def accuracy(model: MlpModel, data: LabeledDataset | None) -> float:
    if data is None or len(data) == 0:
        raise ArgumentError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(model, data.inputs) == data.labels))


def mean_loss(model: MlpModel, data: LabeledDataset) -> float:
    return float(np.mean(loss(model, data.inputs, data.labels)))


def _fol_value(g: np.ndarray, x: np.ndarray, x0: np.ndarray, epsilon: float, norm: str) -> float:
    if norm == "l2":
        return float(epsilon * np.linalg.norm(g))
    return float(epsilon * np.abs(g).sum() - np.dot(x - x0, g))


def grad_objective(
    model: MlpModel,
    x,
    y: int,
    k: int,
    lam: float,
    norm: str = "l2",
    epsilon: float = 0.3,
    x0=None,
    anchor: int | None = None,
) -> tuple[float, np.ndarray]:
    """Value and input-gradient of the fuzzing objective.

    ``obj = sum_{i=2..k} P(c_i) - P(c_1) + lam * FOL(x)``

    ``c_1`` is ``anchor`` when given (the label being moved away from),
    otherwise the argmax at ``x``; ``c_2..c_k`` are the next most probable
    classes at ``x``.  The FOL term uses the loss gradient against ``y``;
    its own gradient needs a Hessian-vector product, taken as a forward
    difference of ``input_gradient64`` with step ``HVP_STEP``.
    """
    if not 2 <= k <= model.num_classes:
        raise ConfigError(f"k must be in [2, {model.num_classes}], got {k}")
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    if norm not in ("l2", "linf"):
        raise ConfigError(f"unknown norm {norm!r}")
    x64 = np.asarray(x, dtype=np.float64).reshape(-1)
    xb, _ = _as_batch(model, x64)
    acts, pre = _forward_cache(model, xb)
    p = _softmax64(acts[-1])[0]

    # stable sort on -p keeps lowest index first among ties
    order = [int(c) for c in np.argsort(-p, kind="stable")]
    c1 = order[0] if anchor is None else int(anchor)
    rest = [c for c in order if c != c1][: k - 1]
    coef = np.zeros_like(p)
    coef[rest] = 1.0
    coef[c1] = -1.0
    obj = float(coef @ p)
    dz = p * (coef - coef @ p)
    grad = _backprop_input(model, pre, dz[None, :])[0]

    if lam > 0:
        x0v = x64 if x0 is None else np.asarray(x0, dtype=np.float64).reshape(-1)
        g = input_gradient64(model, x64, y)
        obj += lam * _fol_value(g, x64, x0v, epsilon, norm)
        if norm == "l2":
            direction = epsilon * g
        else:
            direction = epsilon * np.sign(g) - (x64 - x0v)
        scale = np.linalg.norm(direction)
        if norm == "l2" and scale > 0:
            # grad of eps*||g|| is eps * H g / ||g||
            unit = g / np.linalg.norm(g)
            hvp = (input_gradient64(model, x64 + HVP_STEP * unit, y) - g) / HVP_STEP
            grad = grad + lam * epsilon * hvp
        elif norm == "linf":
            fol_grad = -g
            if scale > 0:
                unit = direction / scale
                hvp = (input_gradient64(model, x64 + HVP_STEP * unit, y) - g) / HVP_STEP
                fol_grad = fol_grad + scale * hvp
            grad = grad + lam * fol_grad
    return obj, grad.astype(np.float32)


def train(model: MlpModel, data: LabeledDataset, cfg: TrainConfig) -> MlpModel:
    """Mini-batch SGD on mean cross-entropy; returns a new model."""
    if data.dim != model.input_dim:
        raise ShapeError(f"data dim {data.dim} != model input {model.input_dim}")
    _check_labels(model, data.labels, len(data))
    if cfg.batch_size > len(data):
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {len(data)}")
    if cfg.epochs == 0:
        return model

    weights = [layer.weights.copy() for layer in model.layers]
    biases = [layer.bias.copy() for layer in model.layers]
    relu = [layer.activation == RELU for layer in model.layers]
    n = len(data)
    rng = np.random.default_rng(cfg.rng_seed)
    lr = cfg.learning_rate
    x_all, y_all = data.inputs, data.labels

    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = x_all[idx].astype(np.float64)
            yb = y_all[idx]
            w64 = [w.astype(np.float64) for w in weights]
            acts = [xb]
            pre = []
            h = xb
            for w, b, r in zip(w64, biases, relu):
                z = h @ w.T + b
                pre.append(z)
                h = np.maximum(z, 0.0) if r else z
                acts.append(h)
            delta = _softmax64(acts[-1])
            delta[np.arange(len(idx)), yb] -= 1.0
            delta /= len(idx)
            for i in range(len(weights) - 1, -1, -1):
                if relu[i]:
                    delta = delta * (pre[i] > 0)
                gw = delta.T @ acts[i]
                gb = delta.sum(axis=0)
                if i > 0:
                    delta = delta @ w64[i]
                weights[i] = (w64[i] - lr * gw).astype(np.float32)
                biases[i] = (biases[i] - lr * gb).astype(np.float32)

    layers = tuple(
        DenseLayer(w, b, layer.activation) for w, b, layer in zip(weights, biases, model.layers)
    )
    return MlpModel(layers)
