"""Per-epoch orchestration: relabel, select, train, evaluate.

Each epoch runs, in order: softmax predictions on the raw features feed the
relabelling rule; current trunk embeddings feed the neighbour index and the
clean-subset selection; the selection (oversampled per class) is trained for
one pass with the composite loss; metrics are recorded against the hidden
ground truth without ever feeding back into training.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, asdict, replace
from typing import Optional

import numpy as np

from .data import LabelState, NoisyDataset, TrainConfig, validate
from .errors import DataError, NumericError
from .model import (MiniBatch, OptimizerState, PmcModel, cosine_lr, forward,
                    init_model, mixup_pair, oversample_balanced, sgd_step,
                    total_loss_grads, trunk_forward)
from .relabel import PredictionMatrix, relabel, relabel_metrics
from .selector import (baseline_gmm_loss, baseline_small_loss_predefined,
                       build_neighbour_index, compute_selection)

log = logging.getLogger(__name__)

SELECTION_MODES = ("consistency", "predefined_npk", "gmm", "predefined_pmc",
                   "all", "oracle_clean")


@dataclass
class EpochMetrics:
    epoch: int
    relabelled_fraction: float
    relabel_accuracy: float
    sel_precision: float
    sel_recall: float
    sel_fscore: float
    selected_count: int
    test_acc: float
    t_train_s: float
    t_feat_s: float
    t_select_s: float
    t_relabel_s: float


@dataclass
class ExperimentRecord:
    config: dict
    epochs: list
    best_test_acc: float
    last_test_acc: float


@dataclass
class ExperimentOutcome:
    record: ExperimentRecord
    model: PmcModel
    final_state: LabelState
    final_clean_mask: np.ndarray


def _fscore(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def selection_metrics(clean_mask: np.ndarray, state: LabelState,
                      dataset: NoisyDataset) -> dict:
    """Precision/recall/F of the clean subset against the true labels; a
    selected sample counts as a true positive iff its working label is true."""
    if dataset.true_labels is None:
        raise DataError("MISSING_GROUND_TRUTH",
                        "selection metrics need evaluation fields")
    correct = state.working_labels == dataset.true_labels
    tp = int((clean_mask & correct).sum())
    n_sel = int(clean_mask.sum())
    n_correct = int(correct.sum())
    precision = tp / n_sel if n_sel else 0.0
    recall = tp / n_correct if n_correct else 0.0
    return {"precision": precision, "recall": recall,
            "fscore": _fscore(precision, recall)}


def macro_f1(predicted: np.ndarray, true: np.ndarray, num_classes: int) -> float:
    scores = []
    for cls in range(num_classes):
        tp = int(((predicted == cls) & (true == cls)).sum())
        fp = int(((predicted == cls) & (true != cls)).sum())
        fn = int(((predicted != cls) & (true == cls)).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        scores.append(_fscore(p, r))
    return float(np.mean(scores))


def _per_sample_ce(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = probs[np.arange(probs.shape[0]), labels]
    return -np.log(np.maximum(p, 1e-12))


_NEIGHBOUR_MODES = ("consistency", "predefined_npk")


def _select(mode, dataset, state, embeddings, probs, config, tau):
    """Returns (clean_mask, consistency or None)."""
    n = dataset.n_samples
    if mode == "all":
        return np.ones(n, dtype=bool), None
    if mode == "oracle_clean":
        if dataset.is_noisy is None:
            raise DataError("MISSING_GROUND_TRUTH", "oracle mode needs is_noisy")
        return ~dataset.is_noisy, None
    if mode in ("gmm", "predefined_pmc"):
        losses = _per_sample_ce(probs, state.working_labels)
        if mode == "predefined_pmc":
            return baseline_small_loss_predefined(losses, tau), None
        try:
            return baseline_gmm_loss(losses), None
        except NumericError as exc:
            if exc.code != "DEGENERATE_FIT":
                raise
            fallback = tau if tau is not None else 0.5
            log.warning("GMM fit degenerate; falling back to predefined tau=%s",
                        fallback)
            return baseline_small_loss_predefined(losses, fallback), None
    index = build_neighbour_index(embeddings, config.k_neighbours)
    result = compute_selection(index, state, config.theta_s,
                               balance=config.balance_voting)
    if mode == "consistency":
        return result.clean_mask, result.consistency
    if mode == "predefined_npk":
        c = result.consistency
        m = math.ceil((1.0 - tau) * n)
        order = np.lexsort((np.arange(n), -c))
        mask = np.zeros(n, dtype=bool)
        mask[order[:m]] = True
        return mask, c
    raise DataError("SHAPE_MISMATCH", f"unknown selection mode {mode!r}")


def _train_pass(model, opt, lr, dataset, state, train_idx, config, rng, feat_std):
    n, d = dataset.features.shape
    m = dataset.num_classes
    xs = dataset.features
    eye = np.eye(m)
    strong = config.sigma_strong * feat_std
    weak = config.sigma_weak * feat_std
    use_fc = config.lambda_fc > 0
    fc_order = rng.permutation(n) if use_fc else None
    fc_pos = 0
    bs = config.batch_size
    steps = math.ceil(train_idx.size / bs)
    for s in range(steps):
        idx = train_idx[s * bs:(s + 1) * bs]
        x = xs[idx] + rng.standard_normal((idx.size, d)) * strong
        batch = MiniBatch(x, eye[state.working_labels[idx]])
        if config.use_mixup:
            batch = mixup_pair(batch, config.mixup_alpha, rng)
        v1 = v2 = None
        if use_fc:
            # consistency loss runs over the whole dataset, cycling a shuffle
            if fc_pos + idx.size > n:
                fc_order = rng.permutation(n)
                fc_pos = 0
            fb = fc_order[fc_pos:fc_pos + idx.size]
            fc_pos += idx.size
            v1 = xs[fb] + rng.standard_normal((fb.size, d)) * strong
            v2 = xs[fb] + rng.standard_normal((fb.size, d)) * weak
        _, grads, _ = total_loss_grads(model, batch, config.lambda_fc,
                                       fc_view1=v1, fc_view2=v2,
                                       distance=config.fc_distance,
                                       stop_gradient=config.stop_gradient)
        sgd_step(model, grads, opt, lr)


def run_experiment(dataset: NoisyDataset, config: TrainConfig,
                   test: Optional[NoisyDataset] = None,
                   selection_mode: str = "consistency",
                   tau: Optional[float] = None) -> ExperimentOutcome:
    """Train from scratch for config.epochs, applying relabel -> select ->
    train each epoch, and record per-epoch quality metrics."""
    validate(dataset)
    if selection_mode not in SELECTION_MODES:
        raise DataError("SHAPE_MISMATCH",
                        f"unknown selection mode {selection_mode!r}")
    rng = np.random.default_rng(config.seed)
    n, d = dataset.features.shape
    m = dataset.num_classes
    model = init_model(d, m, config.hidden_dims, config.proj_dim, rng)
    opt = OptimizerState.for_model(model, config.learning_rate, config.momentum,
                                   config.weight_decay)
    feat_std = dataset.features.std(axis=0)
    feat_std[feat_std == 0] = 1.0
    base_labels = dataset.observed_labels
    epochs = []
    state = LabelState.initial(base_labels, m)
    clean_mask = np.zeros(n, dtype=bool)
    clock = time.perf_counter if config.record_timings else (lambda: 0.0)
    for epoch in range(config.epochs):
        lr = cosine_lr(config.learning_rate, epoch, config.epochs)

        t0 = clock()
        preds = PredictionMatrix(forward(model, dataset.features)["probs"])
        state = relabel(preds, base_labels, config.theta_r)
        if config.persistent_relabel:
            base_labels = state.working_labels
        t_relabel = clock() - t0

        t0 = clock()
        embeddings = None
        if selection_mode in _NEIGHBOUR_MODES:
            embeddings, _ = trunk_forward(model, dataset.features)
        t_feat = clock() - t0

        t0 = clock()
        clean_mask, _ = _select(selection_mode, dataset, state, embeddings,
                                preds.probs, config, tau)
        t_select = clock() - t0

        t0 = clock()
        sel_idx = np.flatnonzero(clean_mask)
        if sel_idx.size == 0:
            # fall back to relabel-confident samples; skip the pass if none
            sel_idx = np.flatnonzero(preds.probs.max(axis=1) > config.theta_r)
            log.warning("epoch %d: empty selection, falling back to %d "
                        "relabel-confident samples", epoch, sel_idx.size)
        if sel_idx.size:
            if config.oversample:
                train_idx = oversample_balanced(sel_idx, state.working_labels, rng)
            else:
                train_idx = rng.permutation(sel_idx)
            _train_pass(model, opt, lr, dataset, state, train_idx, config,
                        rng, feat_std)
        t_train = clock() - t0

        re_metrics = {"relabelled_fraction": 0.0, "relabel_accuracy": 0.0}
        sel = {"precision": 0.0, "recall": 0.0, "fscore": 0.0}
        if dataset.has_ground_truth:
            re_metrics = relabel_metrics(state, dataset)
            sel = selection_metrics(clean_mask, state, dataset)
        test_acc = 0.0
        if test is not None:
            pred = forward(model, test.features)["probs"].argmax(axis=1)
            test_acc = float((pred == test.observed_labels).mean())
        epochs.append(EpochMetrics(
            epoch=epoch,
            relabelled_fraction=re_metrics["relabelled_fraction"],
            relabel_accuracy=re_metrics["relabel_accuracy"],
            sel_precision=sel["precision"],
            sel_recall=sel["recall"],
            sel_fscore=sel["fscore"],
            selected_count=int(clean_mask.sum()),
            test_acc=test_acc,
            t_train_s=t_train, t_feat_s=t_feat, t_select_s=t_select,
            t_relabel_s=t_relabel))

    record = ExperimentRecord(config=asdict(config), epochs=epochs,
                              best_test_acc=max(e.test_acc for e in epochs),
                              last_test_acc=epochs[-1].test_acc)
    return ExperimentOutcome(record, model, state, clean_mask)


def compare_selection_modes(dataset: NoisyDataset, config: TrainConfig,
                            test: Optional[NoisyDataset] = None) -> dict:
    """Run the four selector variants plus the whole-dataset and oracle-clean
    references, all with relabelling, strong jitter, and the consistency loss
    disabled so only the selection mechanism differs."""
    if dataset.is_noisy is None:
        raise DataError("MISSING_GROUND_TRUTH",
                        "mode comparison needs the noisy mask for tau")
    tau = float(dataset.is_noisy.mean())
    # strong augmentation (jitter + mixup), relabelling, and the consistency
    # loss are all switched off so only the selection mechanism differs
    base = replace(config, theta_r=1.0, lambda_fc=0.0,
                   sigma_strong=0.0, sigma_weak=0.0, use_mixup=False)
    runs = {}
    for name, mode in [("npk_automatic", "consistency"),
                       ("pmc_gmm_automatic", "gmm"),
                       ("npk_predefined", "predefined_npk"),
                       ("pmc_predefined", "predefined_pmc"),
                       ("whole_dataset", "all"),
                       ("clean_subset", "oracle_clean")]:
        runs[name] = run_experiment(dataset, base, test=test,
                                    selection_mode=mode, tau=tau).record
    return runs
