"""Frozen-feature evaluation: linear / MLP probes and retrieval mAP@k.

Probes train a fresh classifier on frozen features with cosine-annealed
SGD and no weight decay; retrieval ranks all non-self samples by cosine
similarity with deterministic index tie-breaking.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import FeatureBatch
from .errors import ConfigError, DegenerateNorm, InsufficientSamples, ShapeMismatch
from .nn import (
    DenseLayer,
    Model,
    backward,
    cosine_lr,
    cross_entropy,
    forward,
    sgd_step,
)

logger = logging.getLogger(__name__)

PROBE_KINDS = ("linear", "mlp")
MLP_HIDDEN_CAP = 2048


@dataclass(frozen=True)
class ProbeConfig:
    kind: str = "linear"
    hidden: int | None = None  # mlp only; default min(2048, 4 * D)
    epochs: int = 50
    lr0: float = 0.1
    batch_size: int = 256

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ConfigError(f"unknown probe kind {self.kind!r}")
        if self.epochs < 1:
            raise ConfigError("probe epochs must be >= 1")


def _build_probe(cfg: ProbeConfig, feature_dim: int, num_classes: int,
                 rng: np.random.Generator) -> Model:
    if cfg.kind == "linear":
        bound = math.sqrt(6.0 / feature_dim)
        w = rng.uniform(-bound, bound, size=(num_classes, feature_dim))
        return Model(layers=[], classifier_w=w, classifier_b=np.zeros(num_classes))
    hidden = cfg.hidden if cfg.hidden is not None else min(MLP_HIDDEN_CAP, 4 * feature_dim)
    bound = math.sqrt(6.0 / feature_dim)
    w1 = rng.uniform(-bound, bound, size=(hidden, feature_dim))
    layer = DenseLayer(w1, np.zeros(hidden), "relu")
    bound = math.sqrt(6.0 / hidden)
    w2 = rng.uniform(-bound, bound, size=(num_classes, hidden))
    return Model(layers=[layer], classifier_w=w2, classifier_b=np.zeros(num_classes))


def probe(train_features: FeatureBatch, test_features: FeatureBatch,
          cfg: ProbeConfig, seed=0) -> float:
    """Train a probe on frozen train features; return top-1 test accuracy."""
    if train_features.dim != test_features.dim:
        raise ShapeMismatch(
            f"train D={train_features.dim} != test D={test_features.dim}"
        )
    x, y = train_features.features, train_features.labels
    num_classes = int(max(y.max(), test_features.labels.max())) + 1
    rng = np.random.default_rng(seed)
    model = _build_probe(cfg, train_features.dim, num_classes, rng)

    n = x.shape[0]
    batch = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start:start + batch]
            _, z, tape = forward(model, x[idx])
            _, dz = cross_entropy(z, y[idx])
            grads = backward(model, tape, dz)
            sgd_step(model, grads, lr, weight_decay=0.0)

    _, z_test, _ = forward(model, test_features.features)
    return float((z_test.argmax(axis=1) == test_features.labels).mean())


def retrieval_map(fb: FeatureBatch, k: int = 10) -> float:
    """Mean average precision over the top-k cosine neighbors (self excluded).

    AP@k divides by min(k, R_i) with R_i the number of same-class non-self
    samples; queries with R_i == 0 contribute zero and log a warning.
    Exact similarity ties are broken by ascending sample index.
    """
    h, labels = fb.features, fb.labels
    n = fb.n
    if n < 2:
        raise InsufficientSamples("retrieval needs at least 2 samples")
    norms = np.linalg.norm(h, axis=1)
    if (norms <= 1e-12).any():
        raise DegenerateNorm("zero-norm feature row")
    unit = h / norms[:, None]
    sims = unit @ unit.T

    ranks = np.arange(1, k + 1)
    ap_sum = 0.0
    for i in range(n):
        cand = np.concatenate((np.arange(i), np.arange(i + 1, n)))
        order = cand[np.lexsort((cand, -sims[i, cand]))]
        top = order[:k]
        rel = (labels[top] == labels[i]).astype(np.float64)
        r_total = int((labels[cand] == labels[i]).sum())
        if r_total == 0:
            logger.warning("query %d has no same-class sample; AP set to 0", i)
            continue
        precision = np.cumsum(rel) / ranks[:top.size]
        ap_sum += float((precision * rel).sum() / min(k, r_total))
    return ap_sum / n
