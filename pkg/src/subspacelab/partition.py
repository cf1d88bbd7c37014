"""Fixed partition of the feature space into per-class index blocks.

Each of the C classes owns a contiguous block of K = floor(D / C) feature
indices; the D mod C leftover indices belong to no class and are treated as
forbidden for every label. Blocks are 0-indexed: class c owns
{c*K, ..., (c+1)*K - 1}. The assignment is deterministic and never changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClassOutOfRange, InvalidDimensions, LengthMismatch


@dataclass(frozen=True)
class ClassMask:
    """Binary forbidden-index mask for one class.

    bits[j] == 1.0 exactly when feature index j is outside the class's
    active block (remainder indices included).
    """

    class_id: int
    bits: np.ndarray


@dataclass(frozen=True)
class SubspacePartition:
    """Immutable class -> index-block assignment over D feature dimensions."""

    feature_dim: int
    num_classes: int
    block_size: int
    active_sets: tuple
    remainder_set: frozenset
    # Row y is the forbidden mask for class y; precomputed once, read-only.
    _masks: np.ndarray = field(repr=False)

    @property
    def forbidden_size(self) -> int:
        """Number of forbidden indices, identical for every class."""
        return self.feature_dim - self.block_size

    def owner_of(self, index: int) -> int | None:
        """Class owning a feature index, or None for remainder indices."""
        if index >= self.num_classes * self.block_size:
            return None
        return index // self.block_size

    def forbidden_rows(self, labels: np.ndarray) -> np.ndarray:
        """Stack of forbidden masks for a label vector, shape (N, D)."""
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ClassOutOfRange(
                f"labels must lie in [0, {self.num_classes})"
            )
        return self._masks[labels]

    def active_rows(self, labels: np.ndarray) -> np.ndarray:
        """Complement of forbidden_rows: 1.0 on each label's active block."""
        return 1.0 - self.forbidden_rows(labels)


def build_partition(feature_dim: int, num_classes: int) -> SubspacePartition:
    """Construct the fixed contiguous-block partition for (D, C).

    Raises InvalidDimensions unless C >= 2 and D >= C.
    """
    d, c = int(feature_dim), int(num_classes)
    if c < 2 or d < c:
        raise InvalidDimensions(
            f"need num_classes >= 2 and feature_dim >= num_classes, got D={d}, C={c}"
        )
    k = d // c
    active = tuple(frozenset(range(y * k, (y + 1) * k)) for y in range(c))
    remainder = frozenset(range(c * k, d))

    masks = np.ones((c, d), dtype=np.float64)
    for y in range(c):
        masks[y, y * k:(y + 1) * k] = 0.0
    masks.setflags(write=False)

    return SubspacePartition(
        feature_dim=d,
        num_classes=c,
        block_size=k,
        active_sets=active,
        remainder_set=remainder,
        _masks=masks,
    )


def forbidden_mask(partition: SubspacePartition, class_id: int) -> ClassMask:
    """Mask with 1.0 at every index forbidden for `class_id`."""
    y = int(class_id)
    if not 0 <= y < partition.num_classes:
        raise ClassOutOfRange(
            f"class {y} outside [0, {partition.num_classes})"
        )
    return ClassMask(class_id=y, bits=partition._masks[y])


def project(h: np.ndarray, mask: ClassMask) -> np.ndarray:
    """Zero out the active-block coordinates of h, keeping forbidden ones."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != mask.bits.shape[0]:
        raise LengthMismatch(
            f"vector length {h.shape[-1]} != mask length {mask.bits.shape[0]}"
        )
    return h * mask.bits
