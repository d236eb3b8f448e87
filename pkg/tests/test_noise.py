import numpy as np
import pytest

from ssrlab import (OPEN_SET, NoiseSpec, SynthSpec, apply_noise,
                    inject_asymmetric, inject_combined, inject_symmetric,
                    make_gaussian_dataset)
from ssrlab.errors import ConfigError, DataError


def one_nn_accuracy(train, test):
    d2 = ((test.features[:, None, :] - train.features[None, :, :]) ** 2).sum(-1)
    pred = train.observed_labels[d2.argmin(axis=1)]
    return float((pred == test.observed_labels).mean())


# --- synthetic generation ----------------------------------------------------

def test_same_seed_bitwise_identical():
    spec = SynthSpec(num_classes=3, per_class=40, dim=8, seed=5)
    a = make_gaussian_dataset(spec)
    b = make_gaussian_dataset(spec)
    assert np.array_equal(a.train.features, b.train.features)
    assert np.array_equal(a.test.features, b.test.features)
    assert np.array_equal(a.ood_pool, b.ood_pool)


def test_zero_separation_chance_level():
    spec = SynthSpec(num_classes=4, per_class=500, dim=16, separation=0.0,
                     seed=0)
    synth = make_gaussian_dataset(spec)
    acc = one_nn_accuracy(synth.train, synth.test)
    assert abs(acc - 0.25) < 0.05


def test_large_separation_separable():
    spec = SynthSpec(num_classes=2, per_class=100, dim=16, separation=10.0,
                     seed=0, ood_classes=0)
    synth = make_gaussian_dataset(spec)
    assert one_nn_accuracy(synth.train, synth.test) >= 0.99


def test_centre_distances_match_separation():
    from ssrlab.noise import _simplex_centres
    centres = _simplex_centres(4, 8, 3.0)
    for i in range(4):
        for j in range(i + 1, 4):
            assert abs(np.linalg.norm(centres[i] - centres[j]) - 3.0) < 1e-12


def test_dim_too_small_for_centres():
    with pytest.raises(DataError):
        make_gaussian_dataset(SynthSpec(num_classes=4, per_class=5, dim=3,
                                        ood_classes=0))


def test_class_counts_override():
    spec = SynthSpec(num_classes=3, per_class=10, dim=8,
                     class_counts=(30, 20, 10), ood_classes=0)
    synth = make_gaussian_dataset(spec)
    assert np.bincount(synth.train.observed_labels).tolist() == [30, 20, 10]


# --- symmetric ---------------------------------------------------------------

def test_symmetric_zero_ratio_identity():
    synth = make_gaussian_dataset(SynthSpec(num_classes=3, per_class=30, dim=8))
    out = inject_symmetric(synth.train, 0.0, np.random.default_rng(0))
    assert np.array_equal(out.observed_labels, synth.train.observed_labels)
    assert not out.is_noisy.any()


def test_symmetric_full_ratio_uniform_redraw():
    rng = np.random.default_rng(1)
    n, m = 10_000, 10
    labels = rng.integers(0, m, n)
    from ssrlab import NoisyDataset
    ds = NoisyDataset(rng.normal(size=(n, 4)), labels, m, labels.copy())
    out = inject_symmetric(ds, 1.0, np.random.default_rng(2))
    match = (out.observed_labels == out.true_labels).mean()
    assert abs(match - 1 / m) < 0.02


def test_symmetric_noisy_count_bounded():
    synth = make_gaussian_dataset(SynthSpec(num_classes=4, per_class=50, dim=8))
    rng = np.random.default_rng(3)
    for ratio in [0.1, 0.3, 0.5, 0.9]:
        out = inject_symmetric(synth.train, ratio, rng)
        assert out.is_noisy.sum() <= int(ratio * out.n_samples)


# --- asymmetric --------------------------------------------------------------

def test_asymmetric_per_class_flip_counts():
    synth = make_gaussian_dataset(SynthSpec(num_classes=4, per_class=103, dim=8))
    pair = (1, 2, 3, 0)
    out = inject_asymmetric(synth.train, 0.4, pair, np.random.default_rng(4))
    for cls in range(4):
        members = synth.train.observed_labels == cls
        flipped = (out.observed_labels[members] != cls).sum()
        assert flipped == int(0.4 * members.sum())
        changed = out.observed_labels[members & out.is_noisy]
        assert np.all(changed == pair[cls])


def test_asymmetric_zero_ratio_identity():
    synth = make_gaussian_dataset(SynthSpec(num_classes=3, per_class=20, dim=8))
    out = inject_asymmetric(synth.train, 0.0, (1, 2, 0),
                            np.random.default_rng(0))
    assert np.array_equal(out.observed_labels, synth.train.observed_labels)


def test_asymmetric_flips_always_noisy():
    synth = make_gaussian_dataset(SynthSpec(num_classes=3, per_class=40, dim=8))
    out = inject_asymmetric(synth.train, 0.5, (1, 2, 0),
                            np.random.default_rng(5))
    assert out.is_noisy.sum() == sum(int(0.5 * c) for c in
                                     np.bincount(synth.train.observed_labels))


def test_asymmetric_missing_or_bad_pair_map():
    synth = make_gaussian_dataset(SynthSpec(num_classes=3, per_class=10, dim=8))
    rng = np.random.default_rng(0)
    with pytest.raises(DataError) as exc:
        inject_asymmetric(synth.train, 0.4, None, rng)
    assert exc.value.code == "MISSING_PAIR_MAP"
    with pytest.raises(DataError):
        inject_asymmetric(synth.train, 0.4, (0, 1, 2), rng)  # identity map


# --- combined ----------------------------------------------------------------

def test_combined_all_open():
    synth = make_gaussian_dataset(SynthSpec(num_classes=4, per_class=250,
                                            dim=16, seed=1))
    out = inject_combined(synth.train, synth.ood_pool, 0.3, 1.0,
                          np.random.default_rng(6))
    assert (out.true_labels == OPEN_SET).sum() == 300
    # observed labels untouched: open-set noise keeps the in-vocabulary label
    assert np.array_equal(out.observed_labels, synth.train.observed_labels)
    swapped = out.true_labels == OPEN_SET
    assert not np.array_equal(out.features[swapped],
                              synth.train.features[swapped])
    assert np.array_equal(out.features[~swapped],
                          synth.train.features[~swapped])


def test_combined_half_open():
    synth = make_gaussian_dataset(SynthSpec(num_classes=4, per_class=250,
                                            dim=16, seed=2))
    out = inject_combined(synth.train, synth.ood_pool, 0.3, 0.5,
                          np.random.default_rng(7))
    n_open = (out.true_labels == OPEN_SET).sum()
    assert n_open == 150
    n_closed_flips = ((out.observed_labels != synth.train.observed_labels)
                      & (out.true_labels != OPEN_SET)).sum()
    assert n_closed_flips <= 150  # uniform redraw may coincide
    changed_feats = (out.features != synth.train.features).any(axis=1)
    assert changed_feats.sum() == 150


def test_combined_open_zero_reduces_to_symmetric():
    synth = make_gaussian_dataset(SynthSpec(num_classes=3, per_class=100,
                                            dim=8, seed=3))
    sym = apply_noise(synth.train, NoiseSpec("symmetric", 0.4, seed=9))
    comb = apply_noise(synth.train,
                       NoiseSpec("combined", 0.4, open_ratio=0.0, seed=9),
                       synth.ood_pool)
    assert np.array_equal(sym.observed_labels, comb.observed_labels)
    assert np.array_equal(sym.features, comb.features)
    assert np.array_equal(sym.true_labels, comb.true_labels)


def test_combined_pool_too_small():
    synth = make_gaussian_dataset(SynthSpec(num_classes=3, per_class=100,
                                            dim=8))
    with pytest.raises(DataError) as exc:
        inject_combined(synth.train, np.ones((5, 8)), 0.5, 1.0,
                        np.random.default_rng(0))
    assert exc.value.code == "OOD_POOL_TOO_SMALL"


# --- spec validation and shared invariants -----------------------------------

def test_noise_spec_open_ratio_requires_combined():
    with pytest.raises(ConfigError):
        NoiseSpec("symmetric", 0.3, open_ratio=0.5)


def test_noise_spec_unknown_kind():
    with pytest.raises(ConfigError):
        NoiseSpec("saltpepper", 0.3)


def test_injectors_preserve_shape_and_features():
    synth = make_gaussian_dataset(SynthSpec(num_classes=4, per_class=60,
                                            dim=8, seed=4))
    for spec in [NoiseSpec("symmetric", 0.5, seed=1),
                 NoiseSpec("asymmetric", 0.4, pair_map=(1, 2, 3, 0), seed=1)]:
        out = apply_noise(synth.train, spec)
        assert out.features.shape == synth.train.features.shape
        assert np.array_equal(out.features, synth.train.features)
        assert out.is_noisy.mean() <= spec.total_ratio
