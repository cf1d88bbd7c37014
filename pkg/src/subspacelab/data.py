"""Dataset construction: synthetic Gaussian blobs and IDX image files.

A Dataset is immutable after creation (arrays are write-protected) and
carries a per-sample train/test tag plus the pristine pre-noise labels.
Label corruption never touches the Dataset; training derives noisy copies.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, LabelRangeError, ShapeMismatch, TruncatedFile

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray        # (N, d_in)
    labels: np.ndarray        # (N,)
    clean_labels: np.ndarray  # (N,), identical to labels at creation
    is_test: np.ndarray       # (N,) bool split tag
    num_classes: int

    def __post_init__(self):
        n = self.inputs.shape[0]
        for name in ("labels", "clean_labels", "is_test"):
            if getattr(self, name).shape != (n,):
                raise ShapeMismatch(f"{name} length != {n}")
        if not np.isfinite(self.inputs).all():
            raise ShapeMismatch("inputs contain NaN or Inf")
        for arr in (self.inputs, self.labels, self.clean_labels, self.is_test):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def train(self):
        m = ~self.is_test
        return self.inputs[m], self.labels[m], self.clean_labels[m]

    def test(self):
        m = self.is_test
        return self.inputs[m], self.labels[m], self.clean_labels[m]

    def summary(self) -> dict:
        return {
            "n": int(self.n),
            "input_dim": int(self.input_dim),
            "num_classes": int(self.num_classes),
            "n_train": int((~self.is_test).sum()),
            "n_test": int(self.is_test.sum()),
        }


def generate_blobs(num_classes: int, input_dim: int, per_class: int,
                   separation: float, within_sigma: float, seed,
                   test_fraction: float = 0.2) -> Dataset:
    """Gaussian class blobs with means uniform on a sphere of radius
    `separation`, per-class isotropic spread `within_sigma`, and a
    stratified train/test split. Deterministic per seed."""
    if separation < 0:
        raise ValueError("separation must be >= 0")
    if within_sigma <= 0:
        raise ValueError("within_sigma must be > 0")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((num_classes, input_dim))
    means = separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)

    xs, ys, tags = [], [], []
    n_train = int(per_class * (1.0 - test_fraction))
    for c in range(num_classes):
        x = means[c] + within_sigma * rng.standard_normal((per_class, input_dim))
        tag = np.ones(per_class, dtype=bool)
        tag[rng.permutation(per_class)[:n_train]] = False
        xs.append(x)
        ys.append(np.full(per_class, c, dtype=np.int64))
        tags.append(tag)

    inputs = np.concatenate(xs)
    labels = np.concatenate(ys)
    return Dataset(inputs=inputs, labels=labels, clean_labels=labels.copy(),
                   is_test=np.concatenate(tags), num_classes=num_classes)


def _read_idx_header(data: bytes, path, expected_magic: int, n_dims: int):
    header_len = 4 + 4 * n_dims
    if len(data) < header_len:
        raise TruncatedFile(f"{path}: shorter than its header")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise BadMagic(f"{path}: magic {magic:#010x}, expected {expected_magic:#010x}")
    dims = struct.unpack(f">{n_dims}I", data[4:header_len])
    return dims, header_len


def load_idx(images_path, labels_path, limit: int | None = None,
             num_classes: int | None = None,
             test_fraction: float = 0.2) -> Dataset:
    """Load an IDX image/label file pair.

    Pixels are scaled to [0, 1] and flattened row-major. When
    `num_classes` is given, labels are validated against it; otherwise the
    class count is inferred. The split is sequential: the first 80% of
    records are train, the rest test.
    """
    img_data = open(images_path, "rb").read()
    lbl_data = open(labels_path, "rb").read()

    (n_img, rows, cols), img_off = _read_idx_header(
        img_data, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lbl,), lbl_off = _read_idx_header(
        lbl_data, labels_path, IDX_LABELS_MAGIC, 1)

    if len(img_data) < img_off + n_img * rows * cols:
        raise TruncatedFile(f"{images_path}: payload shorter than header claims")
    if len(lbl_data) < lbl_off + n_lbl:
        raise TruncatedFile(f"{labels_path}: payload shorter than header claims")
    if n_img != n_lbl:
        raise ShapeMismatch(f"{n_img} images but {n_lbl} labels")

    n = n_img if limit is None else min(limit, n_img)
    pixels = np.frombuffer(img_data, dtype=np.uint8, count=n * rows * cols,
                           offset=img_off)
    inputs = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_data, dtype=np.uint8, count=n,
                           offset=lbl_off).astype(np.int64)

    if num_classes is None:
        num_classes = int(labels.max()) + 1 if n else 0
    elif labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelRangeError(
            f"labels outside [0, {num_classes}): max={labels.max()}"
        )

    is_test = np.zeros(n, dtype=bool)
    is_test[int(n * (1.0 - test_fraction)):] = True
    return Dataset(inputs=inputs, labels=labels, clean_labels=labels.copy(),
                   is_test=is_test, num_classes=num_classes)
