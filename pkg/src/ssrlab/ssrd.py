"""SSRD binary embedding format.

Layout (little-endian): magic "SSRD", u16 version, u32 N, u32 d, u32 M,
u8 flags (bit0 = has true labels, bit1 = has noisy mask), then N*d float32
features row-major, N u32 observed labels, optionally N int32 true labels
(-1 = open-set sentinel) and N u8 noisy mask. Pools are stored with M = 0.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import NoisyDataset, validate
from .errors import DataError

MAGIC = b"SSRD"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIB")

FLAG_TRUE_LABELS = 0x01
FLAG_NOISY_MASK = 0x02


def write_dataset(path, dataset: NoisyDataset) -> None:
    _write(path, dataset.features, dataset.observed_labels, dataset.num_classes,
           dataset.true_labels, dataset.is_noisy)


def write_pool(path, features: np.ndarray) -> None:
    feats = np.asarray(features, dtype=np.float64)
    _write(path, feats, np.zeros(feats.shape[0], dtype=np.int64), 0, None, None)


def _write(path, features, observed_labels, num_classes,
           true_labels, noisy_mask) -> None:
    n, d = features.shape
    flags = 0
    if true_labels is not None:
        flags |= FLAG_TRUE_LABELS
    if noisy_mask is not None:
        flags |= FLAG_NOISY_MASK
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d, num_classes, flags))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(observed_labels, dtype="<u4").tobytes())
        if true_labels is not None:
            fh.write(np.ascontiguousarray(true_labels, dtype="<i4").tobytes())
        if noisy_mask is not None:
            fh.write(np.ascontiguousarray(noisy_mask, dtype=np.uint8).tobytes())


def _read(path) -> dict:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise DataError("BAD_MAGIC", f"{path} is not an SSRD file")
    magic, version, n, d, m, flags = _HEADER.unpack_from(data)
    if version != VERSION:
        raise DataError("BAD_MAGIC", f"unsupported SSRD version {version}")
    off = _HEADER.size

    def take(dtype, count):
        nonlocal off
        nbytes = np.dtype(dtype).itemsize * count
        if off + nbytes > len(data):
            raise DataError("TRUNCATED_FILE",
                            f"{path} ends before its declared payload")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += nbytes
        return arr

    feats = take("<f4", n * d).reshape(n, d).astype(np.float64)
    obs = take("<u4", n).astype(np.int64)
    true = take("<i4", n).astype(np.int64) if flags & FLAG_TRUE_LABELS else None
    mask = take(np.uint8, n).astype(bool) if flags & FLAG_NOISY_MASK else None
    return {"features": feats, "observed_labels": obs, "num_classes": int(m),
            "true_labels": true, "is_noisy": mask}


def load_embeddings(path) -> NoisyDataset:
    """Read a dataset file and validate it. Files without the true-label
    section load fine; evaluation metrics are simply unavailable for them."""
    raw = _read(path)
    if raw["num_classes"] == 0:
        raise DataError("SHAPE_MISMATCH",
                        f"{path} is a pool file (M = 0), not a dataset")
    ds = NoisyDataset(**raw)
    validate(ds)
    return ds


def load_pool(path) -> np.ndarray:
    raw = _read(path)
    if raw["num_classes"] != 0:
        raise DataError("SHAPE_MISMATCH", f"{path} is a dataset, not a pool")
    return raw["features"]
