"""Versioned binary checkpoints with CRC integrity.

Layout: 8-byte magic, u32 format version, u32 header length, JSON header
(layer shapes, activation tags, partition {D, C, K}, seed, epoch, config
echo), raw little-endian float64 parameter payload, u32 CRC32 trailer over
everything before it. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .errors import CorruptCheckpoint, VersionMismatch
from .nn import DenseLayer, Model
from .partition import SubspacePartition, build_partition

MAGIC = b"SSLABCK1"
FORMAT_VERSION = 1


def save_checkpoint(model: Model, partition: SubspacePartition,
                    metadata: dict, path) -> None:
    """Write model + partition header + metadata to `path`."""
    header = {
        "layers": [
            {"in": l.in_features, "out": l.out_features, "activation": l.activation}
            for l in model.layers
        ],
        "num_classes": model.num_classes,
        "feature_dim": model.feature_dim,
        "partition": {
            "D": partition.feature_dim,
            "C": partition.num_classes,
            "K": partition.block_size,
        },
        "metadata": metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    payload = b"".join(
        np.ascontiguousarray(p, dtype="<f8").tobytes()
        for p in model.param_tensors()
    )
    body = (MAGIC
            + struct.pack("<I", FORMAT_VERSION)
            + struct.pack("<I", len(header_bytes))
            + header_bytes
            + payload)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(body + struct.pack("<I", crc))


def load_checkpoint(path):
    """Read a checkpoint. Returns (model, partition, metadata).

    Raises VersionMismatch for an unsupported format version and
    CorruptCheckpoint for bad magic, truncation, or a CRC failure.
    """
    data = open(path, "rb").read()
    if len(data) < len(MAGIC) + 12:
        raise CorruptCheckpoint(f"{path}: file too short")
    if data[:len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic")
    version = struct.unpack("<I", data[8:12])[0]
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")

    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptCheckpoint(f"{path}: CRC mismatch")

    header_len = struct.unpack("<I", data[12:16])[0]
    header_end = 16 + header_len
    if header_end > len(data) - 4:
        raise CorruptCheckpoint(f"{path}: header overruns file")
    header = json.loads(data[16:header_end].decode("utf-8"))

    payload = data[header_end:-4]
    offset = 0

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count,
                            offset=offset).reshape(shape).copy()
        offset += count * 8
        return arr

    expected = sum(
        spec["out"] * spec["in"] + spec["out"] for spec in header["layers"]
    ) + header["num_classes"] * header["feature_dim"] + header["num_classes"]
    if len(payload) != expected * 8:
        raise CorruptCheckpoint(
            f"{path}: payload holds {len(payload) // 8} floats, expected {expected}"
        )

    layers = [
        DenseLayer(take((spec["out"], spec["in"])), take((spec["out"],)),
                   spec["activation"])
        for spec in header["layers"]
    ]
    cls_w = take((header["num_classes"], header["feature_dim"]))
    cls_b = take((header["num_classes"],))
    model = Model(layers=layers, classifier_w=cls_w, classifier_b=cls_b)

    part_hdr = header["partition"]
    partition = build_partition(part_hdr["D"], part_hdr["C"])
    if partition.block_size != part_hdr["K"]:
        raise CorruptCheckpoint(
            f"{path}: partition header K={part_hdr['K']} inconsistent with D/C"
        )
    return model, partition, header["metadata"]
