"""Composite training loop: cross-entropy plus a scaled geometric penalty.

One run is fully determined by its TrainConfig: the same seed yields
bit-identical parameters and history. Label noise (when requested) is
injected once, before the first epoch, and the corrupted label set stays
fixed for the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import FeatureBatch
from .errors import LabelOutOfRange, NonFiniteLoss, ShapeMismatch
from .nn import Model, backward, cosine_lr, cross_entropy, forward, init_model, sgd_step
from .partition import build_partition
from .regularizers import (
    ClassCentroids,
    RegularizerKind,
    apply_regularizer,
    update_centroids,
)


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of one training run."""

    input_dim: int
    feature_dim: int
    num_classes: int
    hidden: tuple = (128,)
    epochs: int = 40
    batch_size: int = 256
    lr0: float = 0.1
    weight_decay: float = 5e-4
    reg_strength: float = 3.0
    regularizer: RegularizerKind = RegularizerKind("ccar_l2")
    noise_rate: float = 0.0
    seed: int = 0
    centroid_momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError("noise_rate must lie in [0, 1]")
        if self.reg_strength < 0:
            raise ValueError("reg_strength must be >= 0")


@dataclass
class EpochRecord:
    epoch: int
    ce_loss: float
    reg_loss: float
    train_accuracy: float
    forbidden_energy: float
    learning_rate: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    CSV_HEADER = ("epoch", "ce_loss", "reg_loss", "train_acc",
                  "forbidden_energy", "lr")

    def append(self, rec: EpochRecord):
        self.records.append(rec)

    def rows(self):
        return [
            (r.epoch, r.ce_loss, r.reg_loss, r.train_accuracy,
             r.forbidden_energy, r.learning_rate)
            for r in self.records
        ]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def inject_label_noise(labels, rate: float, num_classes: int, seed) -> np.ndarray:
    """Flip each label with probability `rate` to a uniform OTHER class.

    Deterministic given the seed; at rate=1 no label survives unchanged.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    y = np.array(labels, dtype=np.int64, copy=True)
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {num_classes})")
    rng = np.random.default_rng(seed)
    flip = rng.random(y.shape[0]) < rate
    draws = rng.integers(0, num_classes - 1, size=y.shape[0])
    flipped = np.where(draws < y, draws, draws + 1)
    y[flip] = flipped[flip]
    return y


def _batch_slices(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def _derive_seeds(seed):
    """Independent RNG streams for init, shuffling, and noise injection."""
    return np.random.SeedSequence(seed).spawn(3)


def resolve_noisy_labels(config: TrainConfig, dataset) -> np.ndarray:
    """The exact corrupted training labels a run with this config fits."""
    _, y_clean, _ = dataset.train()
    if config.noise_rate == 0:
        return np.array(y_clean, dtype=np.int64, copy=True)
    noise_seed = _derive_seeds(config.seed)[2]
    return inject_label_noise(y_clean, config.noise_rate,
                              config.num_classes, noise_seed)


def train(config: TrainConfig, dataset):
    """Run the composite objective over the dataset's training split.

    Per batch: forward, cross-entropy, penalty on the features, then one
    SGD step whose feature gradient carries strength * dL_reg/dH. With
    reg_strength == 0 the loop is exactly plain cross-entropy training.

    Returns (model, history).
    """
    x, y_clean, _ = dataset.train()
    if x.shape[0] == 0:
        raise ShapeMismatch("training split is empty")
    if x.shape[1] != config.input_dim:
        raise ShapeMismatch(
            f"dataset input width {x.shape[1]} != config input_dim {config.input_dim}"
        )
    c = config.num_classes
    if y_clean.max() >= c:
        raise LabelOutOfRange(f"dataset labels exceed num_classes={c}")

    init_seed, shuffle_seed, noise_seed = _derive_seeds(config.seed)

    if config.noise_rate > 0:
        y = inject_label_noise(y_clean, config.noise_rate, c, noise_seed)
    else:
        y = np.array(y_clean, dtype=np.int64, copy=True)

    partition = build_partition(config.feature_dim, c)
    model = init_model(config.input_dim, config.hidden, config.feature_dim,
                       c, seed=init_seed)

    lam = config.reg_strength
    kind = config.regularizer
    centroids = None
    if lam > 0 and kind.needs_centroids:
        centroids = ClassCentroids.empty(c, config.feature_dim,
                                         momentum=config.centroid_momentum)
        # Priming pass: seed every centroid from the untrained features so
        # the first batch never sees an all-zero anchor.
        h0, _, _ = forward(model, x)
        update_centroids(centroids, h0, y)

    shuffle_rng = np.random.default_rng(shuffle_seed)
    n = x.shape[0]
    history = TrainHistory()

    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.epochs, config.lr0)
        perm = shuffle_rng.permutation(n)
        ce_sum = reg_sum = forb_sum = 0.0
        correct = 0
        for batch_no, sl in enumerate(_batch_slices(n, config.batch_size)):
            idx = perm[sl]
            xb, yb = x[idx], y[idx]
            h, z, tape = forward(model, xb)
            ce, dz = cross_entropy(z, yb)

            if lam > 0:
                reg, dh_reg = apply_regularizer(kind, h, yb, partition, centroids)
                dh_extra = lam * dh_reg
            else:
                reg, dh_extra = 0.0, None

            total = ce + lam * reg
            if not np.isfinite(total):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch} batch {batch_no}: "
                    f"ce={ce} reg={reg}"
                )

            grads = backward(model, tape, dz, dh_extra)
            sgd_step(model, grads, lr, config.weight_decay)

            if centroids is not None:
                update_centroids(centroids, h, yb)

            nb = xb.shape[0]
            ce_sum += ce * nb
            reg_sum += reg * nb
            correct += int((z.argmax(axis=1) == yb).sum())
            forb_sum += float(((h * partition.forbidden_rows(yb)) ** 2).sum())

        history.append(EpochRecord(
            epoch=epoch,
            ce_loss=ce_sum / n,
            reg_loss=reg_sum / n,
            train_accuracy=correct / n,
            forbidden_energy=forb_sum / n,
            learning_rate=lr,
        ))

    return model, history


def extract_features(model: Model, inputs, labels=None) -> FeatureBatch:
    """Penultimate activations for `inputs`, with labels carried along."""
    h, _, _ = forward(model, inputs)
    if labels is None:
        labels = np.zeros(h.shape[0], dtype=np.int64)
    return FeatureBatch(features=h, labels=np.asarray(labels, dtype=np.int64))


def evaluate_accuracy(model: Model, inputs, labels) -> float:
    """Top-1 accuracy of the model's own classifier head."""
    _, z, _ = forward(model, inputs)
    return float((z.argmax(axis=1) == np.asarray(labels)).mean())
