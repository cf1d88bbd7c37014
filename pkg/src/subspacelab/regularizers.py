"""Geometric activation penalties on a feature batch.

Five penalties over penultimate features H (N x D) with labels y, each
returning (scalar loss, exact dL/dH). All losses are batch means, so the
gradients already carry the 1/N factor; the training loop multiplies by
the strength and feeds the result straight into the backward pass.

The block-energy penalty (``ccar_l2``) is the primary objective: the mean
squared activation on each sample's forbidden indices, normalized by the
forbidden-region size. The other four are the ablation variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateNorm,
    LabelOutOfRange,
    ShapeMismatch,
)
from .partition import SubspacePartition

REGULARIZER_TAGS = (
    "ccar_l2",
    "l1",
    "cosine_margin",
    "energy_ratio",
    "orthogonal_projection",
)

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class RegularizerKind:
    """Which penalty to apply, plus its scalar knobs."""

    tag: str
    margin: float = 0.2    # cosine_margin only
    eps: float = 1e-8      # energy_ratio only

    def __post_init__(self):
        if self.tag not in REGULARIZER_TAGS:
            raise ConfigError(
                f"unknown regularizer {self.tag!r}; expected one of {REGULARIZER_TAGS}"
            )
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")

    @property
    def needs_centroids(self) -> bool:
        return self.tag == "cosine_margin"


@dataclass
class ClassCentroids:
    """EMA class means used as fixed anchors by the cosine-margin penalty."""

    mu: np.ndarray                 # (C, D)
    momentum: float = 0.9
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.counts is None:
            self.counts = np.zeros(self.mu.shape[0], dtype=np.int64)

    @classmethod
    def empty(cls, num_classes: int, feature_dim: int,
              momentum: float = 0.9) -> "ClassCentroids":
        return cls(mu=np.zeros((num_classes, feature_dim)), momentum=momentum)


def _check_batch(h: np.ndarray, labels: np.ndarray, feature_dim: int):
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(labels)
    if h.ndim != 2 or h.shape[1] != feature_dim:
        raise ShapeMismatch(f"features shape {h.shape}, expected (N, {feature_dim})")
    if y.shape != (h.shape[0],):
        raise ShapeMismatch(f"labels shape {y.shape} != ({h.shape[0]},)")
    return h, y


def _check_labels(y: np.ndarray, num_classes: int):
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {num_classes})")


def ccar_l2(h, labels, partition: SubspacePartition):
    """Mean squared forbidden energy, normalized by the forbidden size."""
    h, y = _check_batch(h, labels, partition.feature_dim)
    _check_labels(y, partition.num_classes)
    n = h.shape[0]
    off = partition.forbidden_size
    masked = h * partition.forbidden_rows(y)
    loss = float((masked ** 2).sum() / (n * off))
    dh = 2.0 * masked / (n * off)
    return loss, dh


def l1_penalty(h, labels, partition: SubspacePartition):
    """Unnormalized L1 norm of the forbidden activations (subgradient 0 at 0)."""
    h, y = _check_batch(h, labels, partition.feature_dim)
    _check_labels(y, partition.num_classes)
    n = h.shape[0]
    masked = h * partition.forbidden_rows(y)
    loss = float(np.abs(masked).sum() / n)
    dh = np.sign(masked) / n
    return loss, dh


def cosine_margin(h, labels, centroids: ClassCentroids, margin: float):
    """Hinged cosine gap to the hardest competing class centroid.

    Per sample: max(0, max_{k != y} cos(h, mu_k) - cos(h, mu_y) + margin).
    Centroids are constants (stop-gradient); only dL/dh is returned.
    """
    mu = centroids.mu
    h, y = _check_batch(h, labels, mu.shape[1])
    _check_labels(y, mu.shape[0])
    if mu.shape[0] < 2:
        raise ShapeMismatch("cosine margin needs at least 2 classes")
    n = h.shape[0]

    h_norm = np.linalg.norm(h, axis=1)
    mu_norm = np.linalg.norm(mu, axis=1)
    if (h_norm <= NORM_FLOOR).any() or (mu_norm <= NORM_FLOOR).any():
        raise DegenerateNorm("feature or centroid row with numerically zero norm")

    cos = (h @ mu.T) / (h_norm[:, None] * mu_norm[None, :])
    rows = np.arange(n)
    cos_own = cos[rows, y]
    rival = cos.copy()
    rival[rows, y] = -np.inf
    k_star = rival.argmax(axis=1)
    gap = rival[rows, k_star] - cos_own + margin
    active = gap > 0.0
    loss = float(np.where(active, gap, 0.0).mean())

    # d cos(h, u)/dh = u / (|h||u|) - cos * h / |h|^2, per active sample.
    mu_k = mu[k_star]
    mu_y = mu[y]
    unit_term = (mu_k / mu_norm[k_star, None] - mu_y / mu_norm[y, None]) / h_norm[:, None]
    cos_term = (cos[rows, k_star] - cos_own)[:, None] * h / (h_norm ** 2)[:, None]
    dh = np.where(active[:, None], unit_term - cos_term, 0.0) / n
    return loss, dh


def energy_ratio(h, labels, partition: SubspacePartition, eps: float):
    """Log ratio of forbidden to active energy, log(1 + off / (aligned + eps))."""
    h, y = _check_batch(h, labels, partition.feature_dim)
    _check_labels(y, partition.num_classes)
    n = h.shape[0]
    forbid = partition.forbidden_rows(y)
    active = 1.0 - forbid
    sq = h ** 2
    off = (sq * forbid).sum(axis=1)
    aligned = (sq * active).sum(axis=1)
    loss = float(np.log1p(off / (aligned + eps)).mean())

    total = aligned + eps + off
    coeff = forbid / total[:, None] + active * (1.0 / total - 1.0 / (aligned + eps))[:, None]
    dh = 2.0 * h * coeff / n
    return loss, dh


def orthogonal_projection(h, labels, partition: SubspacePartition):
    """Squared norm of the feature component outside the class block.

    With the diagonal mask projector this is exactly the forbidden-size
    multiple of ccar_l2 per sample; kept separate because it is a distinct
    variant with its own scale.
    """
    h, y = _check_batch(h, labels, partition.feature_dim)
    _check_labels(y, partition.num_classes)
    n = h.shape[0]
    masked = h * partition.forbidden_rows(y)
    loss = float((masked ** 2).sum() / n)
    dh = 2.0 * masked / n
    return loss, dh


def update_centroids(centroids: ClassCentroids, h, labels) -> ClassCentroids:
    """EMA-update centroids for classes present in the batch (in place).

    A class's first observed batch sets its centroid to that batch mean;
    later batches blend with momentum m: mu <- m * mu + (1 - m) * mean.
    """
    h, y = _check_batch(h, labels, centroids.mu.shape[1])
    _check_labels(y, centroids.mu.shape[0])
    m = centroids.momentum
    for c in np.unique(y):
        batch_mean = h[y == c].mean(axis=0)
        if centroids.counts[c] == 0:
            centroids.mu[c] = batch_mean
        else:
            centroids.mu[c] = m * centroids.mu[c] + (1.0 - m) * batch_mean
        centroids.counts[c] += int((y == c).sum())
    return centroids


def apply_regularizer(kind: RegularizerKind, h, labels,
                      partition: SubspacePartition,
                      centroids: ClassCentroids | None = None):
    """Dispatch on kind.tag; returns (loss, dL/dH)."""
    if kind.tag == "ccar_l2":
        return ccar_l2(h, labels, partition)
    if kind.tag == "l1":
        return l1_penalty(h, labels, partition)
    if kind.tag == "cosine_margin":
        if centroids is None:
            raise ConfigError("cosine_margin requires class centroids")
        return cosine_margin(h, labels, centroids, kind.margin)
    if kind.tag == "energy_ratio":
        return energy_ratio(h, labels, partition, kind.eps)
    if kind.tag == "orthogonal_projection":
        return orthogonal_projection(h, labels, partition)
    raise ConfigError(f"unknown regularizer {kind.tag!r}")
