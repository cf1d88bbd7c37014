import struct

import numpy as np
import pytest

from subspacelab.checkpoint import load_checkpoint, save_checkpoint
from subspacelab.data import generate_blobs, load_idx
from subspacelab.diagnostics import FeatureBatch
from subspacelab.errors import (
    BadMagic,
    CorruptCheckpoint,
    LabelRangeError,
    ShapeMismatch,
    TruncatedFile,
    VersionMismatch,
)
from subspacelab.nn import forward, init_model
from subspacelab.partition import build_partition
from subspacelab.probes import ProbeConfig, probe


# --- blobs ---

def test_blobs_balanced_and_split_covers():
    ds = generate_blobs(4, 6, 50, separation=3.0, within_sigma=1.0, seed=0)
    assert ds.n == 200
    for c in range(4):
        assert (ds.labels == c).sum() == 50
    x_tr, y_tr, _ = ds.train()
    x_te, y_te, _ = ds.test()
    assert x_tr.shape[0] + x_te.shape[0] == 200
    assert x_tr.shape[0] == 160  # stratified 80/20
    for c in range(4):
        assert (y_te == c).sum() == 10


def test_blobs_deterministic():
    a = generate_blobs(3, 5, 20, 2.0, 0.5, seed=99)
    b = generate_blobs(3, 5, 20, 2.0, 0.5, seed=99)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.is_test, b.is_test)


def test_blobs_immutable():
    ds = generate_blobs(2, 3, 10, 1.0, 1.0, seed=1)
    with pytest.raises(ValueError):
        ds.inputs[0, 0] = 5.0


def test_blobs_tiny_sigma_collapses_to_means():
    ds = generate_blobs(3, 6, 40, separation=4.0, within_sigma=1e-9, seed=2)
    x_tr, y_tr, _ = ds.train()
    x_te, y_te, _ = ds.test()
    acc = probe(FeatureBatch(x_tr, y_tr), FeatureBatch(x_te, y_te),
                ProbeConfig(kind="linear", epochs=30, batch_size=32), seed=0)
    assert acc == 1.0


def test_blobs_zero_separation_is_chance_level():
    ds = generate_blobs(4, 6, 200, separation=0.0, within_sigma=1.0, seed=3)
    x_tr, y_tr, _ = ds.train()
    x_te, y_te, _ = ds.test()
    acc = probe(FeatureBatch(x_tr, y_tr), FeatureBatch(x_te, y_te),
                ProbeConfig(kind="linear", epochs=20), seed=0)
    assert abs(acc - 0.25) < 0.08


def test_noise_never_touches_dataset_labels():
    from subspacelab.training import inject_label_noise
    ds = generate_blobs(3, 4, 20, 2.0, 1.0, seed=4)
    _, y, y_clean = ds.train()
    noisy = inject_label_noise(y, 0.8, 3, seed=0)
    assert np.array_equal(y, y_clean)
    assert not np.array_equal(noisy, y)


# --- IDX files ---

def write_idx_pair(tmp_path, images, labels):
    n, rows, cols = images.shape
    img_path = tmp_path / "images.idx"
    lbl_path = tmp_path / "labels.idx"
    img_path.write_bytes(struct.pack(">IIII", 0x00000803, n, rows, cols)
                         + images.astype(np.uint8).tobytes())
    lbl_path.write_bytes(struct.pack(">II", 0x00000801, len(labels))
                         + np.asarray(labels, dtype=np.uint8).tobytes())
    return img_path, lbl_path


@pytest.fixture
def idx_fixture(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(4, 2, 3))
    labels = [0, 1, 2, 1]
    return write_idx_pair(tmp_path, images, labels), images, labels


def test_load_idx_well_formed(idx_fixture):
    (img, lbl), images, labels = idx_fixture
    ds = load_idx(img, lbl, test_fraction=0.25)
    assert ds.n == 4
    assert ds.input_dim == 6
    np.testing.assert_allclose(ds.inputs[0], images[0].reshape(-1) / 255.0)
    np.testing.assert_array_equal(ds.labels, labels)
    assert ds.is_test.sum() == 1  # sequential tail split


def test_load_idx_limit(idx_fixture):
    (img, lbl), images, labels = idx_fixture
    ds = load_idx(img, lbl, limit=2, test_fraction=0.0)
    assert ds.n == 2
    np.testing.assert_array_equal(ds.labels, labels[:2])


def test_load_idx_bad_magic(idx_fixture, tmp_path):
    (img, lbl), _, _ = idx_fixture
    broken = tmp_path / "broken.idx"
    data = bytearray(img.read_bytes())
    data[3] = 0x99
    broken.write_bytes(bytes(data))
    with pytest.raises(BadMagic):
        load_idx(broken, lbl)


def test_load_idx_truncated(idx_fixture, tmp_path):
    (img, lbl), _, _ = idx_fixture
    cut = tmp_path / "cut.idx"
    cut.write_bytes(img.read_bytes()[:-5])
    with pytest.raises(TruncatedFile):
        load_idx(cut, lbl)


def test_load_idx_label_range(idx_fixture):
    (img, lbl), _, _ = idx_fixture
    with pytest.raises(LabelRangeError):
        load_idx(img, lbl, num_classes=2)


def test_load_idx_count_mismatch(idx_fixture, tmp_path):
    (img, _), _, _ = idx_fixture
    lbl3 = tmp_path / "short_labels.idx"
    lbl3.write_bytes(struct.pack(">II", 0x00000801, 3) + bytes([0, 1, 2]))
    with pytest.raises(ShapeMismatch):
        load_idx(img, lbl3)


# --- checkpoints ---

def roundtrip(tmp_path, model, partition, metadata=None):
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, partition, metadata or {"seed": 0}, path)
    return path, load_checkpoint(path)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    for trial in range(20):
        d_in, hidden, d = (int(v) for v in rng.integers(2, 12, size=3))
        c = int(rng.integers(2, min(d, 6) + 1)) if d >= 2 else 2
        model = init_model(d_in, [hidden], d, c, seed=trial)
        partition = build_partition(d, c)
        path = tmp_path / f"m{trial}.ckpt"
        save_checkpoint(model, partition, {"seed": trial, "epoch": 3}, path)
        loaded, p2, meta = load_checkpoint(path)
        assert meta == {"seed": trial, "epoch": 3}
        assert p2.feature_dim == d and p2.num_classes == c
        x = rng.normal(size=(5, d_in))
        h0, z0, _ = forward(model, x)
        h1, z1, _ = forward(loaded, x)
        assert np.array_equal(h0, h1)
        assert np.array_equal(z0, z1)


def test_checkpoint_truncated(tmp_path):
    model = init_model(3, [4], 6, 2, seed=0)
    path, _ = roundtrip(tmp_path, model, build_partition(6, 2))
    (tmp_path / "cut.ckpt").write_bytes(path.read_bytes()[:-9])
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(tmp_path / "cut.ckpt")


def test_checkpoint_version_bump(tmp_path):
    model = init_model(3, [4], 6, 2, seed=0)
    path, _ = roundtrip(tmp_path, model, build_partition(6, 2))
    data = bytearray(path.read_bytes())
    data[8] = 2  # little-endian version field
    (tmp_path / "v2.ckpt").write_bytes(bytes(data))
    with pytest.raises(VersionMismatch):
        load_checkpoint(tmp_path / "v2.ckpt")


def test_checkpoint_detects_single_byte_corruption(tmp_path):
    model = init_model(3, [4], 6, 2, seed=0)
    path, _ = roundtrip(tmp_path, model, build_partition(6, 2))
    clean = path.read_bytes()
    for pos in (0, 20, len(clean) // 2, len(clean) - 2):
        data = bytearray(clean)
        data[pos] ^= 0xFF
        bad = path.parent / f"bad{pos}.ckpt"
        bad.write_bytes(bytes(data))
        with pytest.raises((CorruptCheckpoint, VersionMismatch)):
            load_checkpoint(bad)
