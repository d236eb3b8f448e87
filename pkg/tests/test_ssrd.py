import struct

import numpy as np
import pytest

from ssrlab import (OPEN_SET, NoisyDataset, load_embeddings, load_pool,
                    write_dataset, write_pool)
from ssrlab.errors import DataError


def f32_dataset(seed=0, n=25, d=6, m=3, with_truth=True):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, d)).astype(np.float32).astype(np.float64)
    obs = rng.integers(0, m, n)
    true = None
    if with_truth:
        true = obs.copy()
        true[:3] = (obs[:3] + 1) % m
        true[3] = OPEN_SET
    return NoisyDataset(feats, obs, m, true)


def test_round_trip_exact(tmp_path):
    ds = f32_dataset()
    path = tmp_path / "data.ssrd"
    write_dataset(path, ds)
    back = load_embeddings(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.observed_labels, ds.observed_labels)
    assert back.num_classes == ds.num_classes
    assert np.array_equal(back.true_labels, ds.true_labels)
    assert np.array_equal(back.is_noisy, ds.is_noisy)


def test_round_trip_without_truth(tmp_path):
    ds = f32_dataset(with_truth=False)
    path = tmp_path / "plain.ssrd"
    write_dataset(path, ds)
    back = load_embeddings(path)
    assert back.true_labels is None
    assert back.is_noisy is None
    assert np.array_equal(back.features, ds.features)


def test_pool_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    pool = rng.normal(size=(12, 4)).astype(np.float32).astype(np.float64)
    path = tmp_path / "pool.ssrd"
    write_pool(path, pool)
    assert np.array_equal(load_pool(path), pool)


def test_pool_and_dataset_not_interchangeable(tmp_path):
    ds_path = tmp_path / "d.ssrd"
    pool_path = tmp_path / "p.ssrd"
    write_dataset(ds_path, f32_dataset())
    write_pool(pool_path, np.ones((3, 2)))
    with pytest.raises(DataError) as exc:
        load_embeddings(pool_path)
    assert exc.value.code == "SHAPE_MISMATCH"
    with pytest.raises(DataError):
        load_pool(ds_path)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ssrd"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(DataError) as exc:
        load_embeddings(path)
    assert exc.value.code == "BAD_MAGIC"


def test_unsupported_version(tmp_path):
    path = tmp_path / "v9.ssrd"
    path.write_bytes(struct.pack("<4sHIIIB", b"SSRD", 9, 1, 1, 2, 0) + b"\x00" * 8)
    with pytest.raises(DataError) as exc:
        load_embeddings(path)
    assert exc.value.code == "BAD_MAGIC"


def test_truncated_payload(tmp_path):
    path = tmp_path / "cut.ssrd"
    write_dataset(path, f32_dataset())
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) // 2])
    with pytest.raises(DataError) as exc:
        load_embeddings(path)
    assert exc.value.code == "TRUNCATED_FILE"


def test_loaded_dataset_validates(tmp_path):
    # a file with a label >= M must be rejected at load time
    ds = f32_dataset()
    path = tmp_path / "corrupt.ssrd"
    write_dataset(path, ds)
    blob = bytearray(path.read_bytes())
    # observed labels start right after the feature block
    off = 19 + ds.n_samples * ds.dim * 4
    blob[off:off + 4] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError) as exc:
        load_embeddings(path)
    assert exc.value.code == "LABEL_OUT_OF_RANGE"
