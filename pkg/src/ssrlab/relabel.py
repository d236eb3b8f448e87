"""Confidence-based relabelling from classifier softmax outputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import OPEN_SET, LabelState, NoisyDataset
from .errors import ConfigError, DataError

_ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class PredictionMatrix:
    """Row-stochastic softmax outputs, one row per sample."""

    probs: np.ndarray  # (N, M)

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))


def _check_rows(probs: np.ndarray) -> None:
    bad = np.flatnonzero((probs < -_ROW_SUM_TOL).any(axis=1)
                         | (np.abs(probs.sum(axis=1) - 1.0) > _ROW_SUM_TOL))
    if bad.size:
        raise DataError("INVALID_PROBABILITY_ROW",
                        f"row {bad[0]} is not a probability vector")


def relabel(preds: PredictionMatrix, observed_labels: np.ndarray,
            theta_r: float) -> LabelState:
    """Overwrite a sample's label with the argmax prediction when the maximum
    confidence strictly exceeds theta_r; keep the observed label otherwise.

    Pure function of its arguments: labels are recomputed from the observed
    labels every call, nothing persists across epochs.
    """
    if not 0.0 < theta_r <= 1.0:
        raise ConfigError("RANGE_ERROR", f"theta_r={theta_r} not in (0, 1]")
    probs = preds.probs
    _check_rows(probs)
    observed = np.asarray(observed_labels, dtype=np.int64)
    conf = probs.max(axis=1)
    arg = probs.argmax(axis=1)  # first max: ties broken by ascending class index
    working = np.where(conf > theta_r, arg, observed)
    return LabelState.from_working(working, observed, probs.shape[1])


def relabel_metrics(state: LabelState, dataset: NoisyDataset) -> dict:
    """Fraction of samples whose label changed, and how often the new label
    matches the true one. Open-set samples always count as incorrect relabels."""
    if dataset.true_labels is None:
        raise DataError("MISSING_GROUND_TRUTH",
                        "relabel metrics need evaluation fields")
    mask = state.relabel_mask
    n_re = int(mask.sum())
    # working labels are always in [0, M), so OPEN_SET entries never match
    correct = int((state.working_labels[mask] == dataset.true_labels[mask]).sum())
    return {
        "relabelled_fraction": n_re / mask.shape[0],
        "relabel_accuracy": correct / max(n_re, 1),
    }
