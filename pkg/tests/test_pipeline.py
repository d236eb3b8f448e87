import dataclasses

import numpy as np
import pytest

from ssrlab import (NoiseSpec, NoisyDataset, SynthSpec, TrainConfig,
                    apply_noise, compare_selection_modes, make_gaussian_dataset,
                    run_experiment, selection_metrics)
from ssrlab.data import LabelState
from ssrlab.errors import DataError
from ssrlab.pipeline import macro_f1


def small_config(**kwargs):
    defaults = dict(k_neighbours=10, epochs=3, batch_size=32,
                    record_timings=False, seed=0)
    defaults.update(kwargs)
    return TrainConfig(**defaults)


@pytest.fixture(scope="module")
def small_noisy():
    synth = make_gaussian_dataset(SynthSpec(num_classes=3, per_class=60,
                                            dim=8, separation=4.0, seed=0,
                                            ood_classes=0))
    noisy = apply_noise(synth.train, NoiseSpec("symmetric", 0.4, seed=0))
    return noisy, synth.test


# --- metric helpers ----------------------------------------------------------

def test_selection_metrics_perfect():
    labels = np.array([0, 1, 0, 1])
    true = np.array([0, 1, 1, 1])
    ds = NoisyDataset(np.ones((4, 2)), labels, 2, true)
    state = LabelState.initial(labels, 2)
    out = selection_metrics(np.array([True, True, False, True]), state, ds)
    assert out == {"precision": 1.0, "recall": 1.0, "fscore": 1.0}


def test_selection_metrics_select_everything():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 3, 50)
    true = labels.copy()
    true[:20] = (true[:20] + 1) % 3
    ds = NoisyDataset(np.ones((50, 2)), labels, 3, true)
    state = LabelState.initial(labels, 3)
    out = selection_metrics(np.ones(50, dtype=bool), state, ds)
    assert out["precision"] == 30 / 50
    assert out["recall"] == 1.0


def test_selection_metrics_empty_selection():
    labels = np.array([0, 1])
    ds = NoisyDataset(np.ones((2, 2)), labels, 2, labels.copy())
    state = LabelState.initial(labels, 2)
    out = selection_metrics(np.zeros(2, dtype=bool), state, ds)
    assert out == {"precision": 0.0, "recall": 0.0, "fscore": 0.0}


def test_selection_metrics_need_ground_truth():
    labels = np.array([0, 1])
    ds = NoisyDataset(np.ones((2, 2)), labels, 2)
    with pytest.raises(DataError):
        selection_metrics(np.ones(2, dtype=bool),
                          LabelState.initial(labels, 2), ds)


def test_macro_f1_perfect_and_degenerate():
    y = np.array([0, 1, 2, 0])
    assert macro_f1(y, y, 3) == 1.0
    assert macro_f1(np.zeros(4, dtype=int), y, 3) < 0.5


# --- run_experiment ----------------------------------------------------------

def test_same_seed_identical_record(small_noisy):
    noisy, test = small_noisy
    cfg = small_config()
    a = run_experiment(noisy, cfg, test=test).record
    b = run_experiment(noisy, cfg, test=test).record
    assert [dataclasses.asdict(e) for e in a.epochs] == \
           [dataclasses.asdict(e) for e in b.epochs]
    assert a.best_test_acc == b.best_test_acc


def test_zero_noise_high_recall():
    synth = make_gaussian_dataset(SynthSpec(num_classes=3, per_class=60,
                                            dim=8, separation=4.0, seed=0,
                                            ood_classes=0))
    out = run_experiment(synth.train, small_config(epochs=4), test=synth.test)
    for epoch in out.record.epochs[2:]:
        assert epoch.sel_recall >= 0.95


def test_best_last_and_ranges(small_noisy):
    noisy, test = small_noisy
    out = run_experiment(noisy, small_config(record_timings=True), test=test)
    record = out.record
    accs = [e.test_acc for e in record.epochs]
    assert record.best_test_acc == max(accs)
    assert record.last_test_acc == accs[-1]
    for e in record.epochs:
        for v in (e.relabelled_fraction, e.relabel_accuracy, e.sel_precision,
                  e.sel_recall, e.sel_fscore, e.test_acc):
            assert 0.0 <= v <= 1.0
        for t in (e.t_train_s, e.t_feat_s, e.t_select_s, e.t_relabel_s):
            assert t >= 0.0


def test_unknown_selection_mode(small_noisy):
    noisy, _ = small_noisy
    with pytest.raises(DataError):
        run_experiment(noisy, small_config(), selection_mode="magic")


def test_empty_selection_skips_training():
    # two tight clusters whose labels disagree with every neighbour vote: no
    # sample is self-consistent, and the fresh model is not confident either
    feats = np.array([[1.0, 0.0], [1.0, 0.01],
                      [0.0, 1.0], [0.0, 1.01]])
    labels = np.array([0, 1, 0, 1])
    ds = NoisyDataset(feats, labels, 2, labels.copy())
    cfg = small_config(k_neighbours=1, epochs=1, lambda_fc=0.0)
    out = run_experiment(ds, cfg)
    assert out.record.epochs[0].selected_count == 0


def test_lambda_zero_runs_without_views(small_noisy):
    noisy, test = small_noisy
    out = run_experiment(noisy, small_config(lambda_fc=0.0), test=test)
    assert len(out.record.epochs) == 3


# --- compare_selection_modes -------------------------------------------------

@pytest.fixture(scope="module")
def comparison(small_noisy):
    noisy, test = small_noisy
    return compare_selection_modes(noisy, small_config(epochs=6), test=test)


def test_comparison_contains_all_modes(comparison):
    assert set(comparison) == {"npk_automatic", "pmc_gmm_automatic",
                               "npk_predefined", "pmc_predefined",
                               "whole_dataset", "clean_subset"}


def test_clean_reference_beats_whole_dataset(comparison):
    assert comparison["clean_subset"].last_test_acc >= \
        comparison["whole_dataset"].last_test_acc


def test_whole_dataset_equals_degenerate_thresholds(comparison, small_noisy):
    noisy, test = small_noisy
    cfg = dataclasses.replace(small_config(epochs=6), theta_s=0.0, theta_r=1.0,
                              lambda_fc=0.0, sigma_strong=0.0, sigma_weak=0.0,
                              use_mixup=False)
    plain = run_experiment(noisy, cfg, test=test).record
    whole = comparison["whole_dataset"]
    assert [dataclasses.asdict(e) for e in plain.epochs] == \
           [dataclasses.asdict(e) for e in whole.epochs]


def test_comparison_needs_ground_truth():
    labels = np.array([0, 1] * 10)
    ds = NoisyDataset(np.random.default_rng(0).normal(size=(20, 4)),
                      labels, 2)
    with pytest.raises(DataError):
        compare_selection_modes(ds, small_config())
