"""Minimal dense-network engine in float64 numpy.

Forward pass, exact reverse-mode gradients, SGD with weight decay folded
into the gradient, and a cosine-annealed learning-rate schedule. The stack
is an MLP encoder whose designated (penultimate) layer output is the
feature vector, plus a linear classifier head consuming those features.

Everything is double precision and deterministic: same seed, same inputs,
bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LabelOutOfRange,
    NonFiniteGradient,
    NonFiniteInput,
    ShapeMismatch,
    StaleTape,
)

ACTIVATIONS = ("relu", "identity")


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatch(
                f"weight {self.weight.shape} incompatible with bias {self.bias.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ShapeMismatch(f"unknown activation {self.activation!r}")

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]


@dataclass
class Model:
    """Encoder layer stack plus linear classifier head.

    `layers` may be empty, in which case the classifier consumes the raw
    input (used for linear probes on frozen features). `penultimate_index`
    designates the layer whose post-activation output is the feature
    vector; by construction it is the last encoder layer.
    """

    layers: list
    classifier_w: np.ndarray  # (C, D)
    classifier_b: np.ndarray  # (C,)
    penultimate_index: int = field(default=-1)
    version: int = 0

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_features != b.in_features:
                raise ShapeMismatch(
                    f"layer widths do not chain: {a.out_features} -> {b.in_features}"
                )
        if self.penultimate_index == -1:
            self.penultimate_index = len(self.layers) - 1
        if self.penultimate_index != len(self.layers) - 1:
            raise ShapeMismatch("feature layer must be the last encoder layer")
        if self.layers and self.classifier_w.shape[1] != self.layers[-1].out_features:
            raise ShapeMismatch(
                f"classifier width {self.classifier_w.shape[1]} != encoder "
                f"output width {self.layers[-1].out_features}"
            )
        if self.classifier_b.shape != (self.classifier_w.shape[0],):
            raise ShapeMismatch("classifier bias length != number of classes")

    @property
    def num_classes(self) -> int:
        return self.classifier_w.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.classifier_w.shape[1]

    def param_tensors(self):
        """All parameter arrays in a fixed order (layers, then head)."""
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        out.append(self.classifier_w)
        out.append(self.classifier_b)
        return out

    def clone(self) -> "Model":
        return Model(
            layers=[
                DenseLayer(l.weight.copy(), l.bias.copy(), l.activation)
                for l in self.layers
            ],
            classifier_w=self.classifier_w.copy(),
            classifier_b=self.classifier_b.copy(),
            version=self.version,
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.param_tensors())


@dataclass
class Gradients:
    """Parameter gradients, shape-congruent with a Model, plus the input
    gradient (used by input-space attacks)."""

    layer_w: list
    layer_b: list
    cls_w: np.ndarray
    cls_b: np.ndarray
    d_input: np.ndarray

    def param_tensors(self):
        out = []
        for w, b in zip(self.layer_w, self.layer_b):
            out.append(w)
            out.append(b)
        out.append(self.cls_w)
        out.append(self.cls_b)
        return out


@dataclass
class Tape:
    """Cached intermediates from one forward pass."""

    x: np.ndarray
    pre_activations: list   # z_i per layer
    layer_inputs: list      # input to layer i
    features: np.ndarray    # H
    model_version: int


def init_model(d_in, hidden, feature_dim, num_classes, seed,
               activation="relu") -> Model:
    """Build an MLP d_in -> hidden... -> feature_dim with a linear head.

    Weights use Kaiming-style uniform fan-in init, U(-sqrt(6/fan_in), +);
    biases start at zero. The feature layer uses `activation` too, so with
    relu the feature vector is nonnegative.
    """
    rng = np.random.default_rng(seed)
    widths = [int(d_in)] + [int(w) for w in hidden] + [int(feature_dim)]
    layers = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        bound = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out), activation))
    bound = math.sqrt(6.0 / feature_dim)
    cls_w = rng.uniform(-bound, bound, size=(int(num_classes), int(feature_dim)))
    return Model(layers=layers, classifier_w=cls_w,
                 classifier_b=np.zeros(int(num_classes)))


def forward(model: Model, x: np.ndarray):
    """Run the stack. Returns (features H, logits Z, tape)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected 2-d input, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise NonFiniteInput("input contains NaN or Inf")
    expected = model.layers[0].in_features if model.layers else model.feature_dim
    if x.shape[1] != expected:
        raise ShapeMismatch(f"input width {x.shape[1]} != expected {expected}")

    a = x
    pre, inputs = [], []
    for layer in model.layers:
        inputs.append(a)
        z = a @ layer.weight.T + layer.bias
        pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    h = a
    z_logits = h @ model.classifier_w.T + model.classifier_b
    tape = Tape(x=x, pre_activations=pre, layer_inputs=inputs,
                features=h, model_version=model.version)
    return h, z_logits, tape


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its logit gradient.

    Stabilized by per-row max subtraction. Returns (loss, dZ) with
    dZ = (softmax(Z) - onehot(y)) / N, ready to feed backward().
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    n, c = z.shape
    if y.shape != (n,):
        raise ShapeMismatch(f"labels shape {y.shape} != ({n},)")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise LabelOutOfRange(f"labels must lie in [0, {c})")

    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1)
    log_probs = shifted - np.log(denom)[:, None]
    loss = -log_probs[np.arange(n), y].mean()

    dz = exp / denom[:, None]
    dz[np.arange(n), y] -= 1.0
    dz /= n
    return loss, dz


def backward(model: Model, tape: Tape, d_logits: np.ndarray,
             d_features_extra: np.ndarray | None = None) -> Gradients:
    """Exact reverse-mode gradients for all parameters and the input.

    `d_features_extra` is added to the feature gradient at the penultimate
    layer; it carries the (already scaled) regularizer contribution.
    """
    if tape.model_version != model.version:
        raise StaleTape("tape predates the latest parameter update")

    h = tape.features
    dz = np.asarray(d_logits, dtype=np.float64)
    cls_w_grad = dz.T @ h
    cls_b_grad = dz.sum(axis=0)

    dh = dz @ model.classifier_w
    if d_features_extra is not None:
        if d_features_extra.shape != h.shape:
            raise ShapeMismatch(
                f"extra feature gradient shape {d_features_extra.shape} != {h.shape}"
            )
        dh = dh + d_features_extra

    layer_w = [None] * len(model.layers)
    layer_b = [None] * len(model.layers)
    da = dh
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == "relu":
            dz_i = da * (tape.pre_activations[i] > 0.0)
        else:
            dz_i = da
        layer_w[i] = dz_i.T @ tape.layer_inputs[i]
        layer_b[i] = dz_i.sum(axis=0)
        da = dz_i @ layer.weight

    return Gradients(layer_w=layer_w, layer_b=layer_b,
                     cls_w=cls_w_grad, cls_b=cls_b_grad, d_input=da)


def sgd_step(model: Model, grads: Gradients, lr: float,
             weight_decay: float = 0.0) -> Model:
    """In-place SGD update: g <- g + wd * theta, theta <- theta - lr * g."""
    params = model.param_tensors()
    gs = grads.param_tensors()
    for g in gs:
        if not np.isfinite(g).all():
            raise NonFiniteGradient("gradient contains NaN or Inf")
    for p, g in zip(params, gs):
        p -= lr * (g + weight_decay * p)
    model.version += 1
    if not model.all_finite():
        raise NonFiniteGradient("parameters became non-finite after update")
    return model


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    """Cosine annealing from lr0 at epoch 0 to 0 at epoch == total_epochs."""
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))
