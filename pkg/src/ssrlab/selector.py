"""Clean-sample selection: neighbour index, balanced voting, consistency.

The non-parametric neighbour classifier votes with the working labels of each
sample's K nearest neighbours under cosine similarity; the vote is rebalanced
by the inverse class counts and compared against the sample's own label. Also
hosts the two loss-based baseline selectors used for comparison runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabelState
from .errors import ConfigError, DataError, NumericError

_NORM_EPS = 1e-12


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < _NORM_EPS or nb < _NORM_EPS:
        raise NumericError("ZERO_NORM_VECTOR", "cannot take cosine of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class NeighbourIndex:
    """Top-K neighbours per sample, sorted by descending similarity.

    Self is excluded; ties are broken by ascending sample index.
    """

    neighbour_ids: np.ndarray    # (N, K) int64
    neighbour_sims: np.ndarray   # (N, K) float64 in [-1, 1]

    @property
    def k(self) -> int:
        return self.neighbour_ids.shape[1]

    @property
    def n_samples(self) -> int:
        return self.neighbour_ids.shape[0]


def build_neighbour_index(features: np.ndarray, k: int) -> NeighbourIndex:
    """Exhaustive cosine top-K; deterministic for fixed input."""
    feats = np.asarray(features, dtype=np.float64)
    n = feats.shape[0]
    if not 1 <= k <= n - 1:
        raise DataError("K_TOO_LARGE", f"k={k} must be in [1, {n - 1}]")
    norms = np.linalg.norm(feats, axis=1)
    bad = np.flatnonzero(norms < _NORM_EPS)
    if bad.size:
        raise NumericError("ZERO_NORM_VECTOR", f"feature row {bad[0]} has zero norm")
    unit = feats / norms[:, None]
    sims = unit @ unit.T
    np.clip(sims, -1.0, 1.0, out=sims)
    np.fill_diagonal(sims, -np.inf)
    ids = _topk_desc(sims, k)
    rows = np.arange(n)[:, None]
    return NeighbourIndex(ids, sims[rows, ids])


def _topk_desc(sims: np.ndarray, k: int) -> np.ndarray:
    """Row-wise top-k indices by (descending value, ascending index)."""
    n = sims.shape[0]
    rows = np.arange(n)[:, None]
    part = np.argpartition(-sims, k - 1, axis=1)[:, :k]
    part_vals = sims[rows, part]
    kth = part_vals.min(axis=1)
    order = np.lexsort((part, -part_vals), axis=1)
    ids = np.take_along_axis(part, order, axis=1)
    # Ties straddling the k-th position need the index tie-break applied over
    # the whole boundary group, which argpartition does not guarantee.
    tie_rows = np.flatnonzero((sims >= kth[:, None]).sum(axis=1) > k)
    for i in tie_rows:
        cand = np.flatnonzero(sims[i] >= kth[i])
        cand = cand[np.lexsort((cand, -sims[i, cand]))]
        ids[i] = cand[:k]
    return ids.astype(np.int64)


def neighbour_label_counts(index: NeighbourIndex, state: LabelState) -> np.ndarray:
    """(N, M) integer matrix: votes for class j among neighbours of sample i."""
    labels = state.working_labels[index.neighbour_ids]
    n, k = labels.shape
    m = state.class_counts.shape[0]
    counts = np.zeros((n, m), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(n), k), labels.ravel()), 1)
    return counts


def neighbour_label_distribution(index: NeighbourIndex, state: LabelState) -> np.ndarray:
    """Normalised neighbour label distribution (rows sum to 1)."""
    return neighbour_label_counts(index, state) / index.k


def balance_distribution(q_raw: np.ndarray, class_counts: np.ndarray) -> np.ndarray:
    """Divide each column by its class count; columns with zero count stay zero."""
    pi = np.asarray(class_counts, dtype=np.float64)
    out = np.zeros_like(q_raw, dtype=np.float64)
    np.divide(q_raw, pi[None, :], out=out, where=pi[None, :] > 0)
    return out


def consistency_measure(q_balanced_row: np.ndarray, working_label: int) -> float:
    """Ratio of the balanced vote at the sample's label to the row maximum."""
    row = np.asarray(q_balanced_row, dtype=np.float64)
    top = row.max()
    if top <= 0:
        raise NumericError("ALL_ZERO_ROW", "balanced vote row is all zero")
    return float(row[int(working_label)] / top)


def exact_top_mask(counts: np.ndarray, class_counts: np.ndarray,
                   working_labels: np.ndarray, balanced: bool = True) -> np.ndarray:
    """True where the sample's label attains the row maximum of the balanced
    vote, decided by integer cross-multiplication (no float equality)."""
    counts = np.asarray(counts, dtype=np.int64)
    pi = np.asarray(class_counts, dtype=np.int64)
    n = counts.shape[0]
    lab = np.asarray(working_labels, dtype=np.int64)
    count_l = counts[np.arange(n), lab]
    if balanced:
        # count_l / pi_l >= count_j / pi_j  <=>  count_l*pi_j >= count_j*pi_l
        lhs = count_l[:, None] * pi[None, :]
        rhs = counts * pi[lab][:, None]
    else:
        lhs = np.broadcast_to(count_l[:, None], counts.shape)
        rhs = counts
    return np.all(lhs >= rhs, axis=1)


@dataclass(frozen=True)
class SelectionResult:
    consistency: np.ndarray   # (N,) in [0, 1]; exactly 1.0 iff label attains row max
    clean_mask: np.ndarray    # (N,) bool
    q_raw: np.ndarray         # (N, M)
    q_balanced: np.ndarray    # (N, M)


def compute_selection(index: NeighbourIndex, state: LabelState, theta_s: float,
                      balance: bool = True) -> SelectionResult:
    counts = neighbour_label_counts(index, state)
    q_raw = counts / index.k
    q_bal = balance_distribution(q_raw, state.class_counts) if balance else q_raw.copy()
    n = counts.shape[0]
    lab = state.working_labels
    top = q_bal.max(axis=1)
    c = np.zeros(n, dtype=np.float64)
    nz = top > 0
    c[nz] = q_bal[np.arange(n), lab][nz] / top[nz]
    exact = exact_top_mask(counts, state.class_counts, lab, balanced=balance)
    # Pin c to exactly 1.0 iff the integer predicate holds, so thresholding at
    # theta_s = 1 is an exact argmax-membership test rather than a float compare.
    c = np.where(exact, 1.0, np.minimum(c, np.nextafter(1.0, 0.0)))
    return SelectionResult(c, select_clean(c, theta_s), q_raw, q_bal)


def select_clean(consistency: np.ndarray, theta_s: float) -> np.ndarray:
    if not 0.0 <= theta_s <= 1.0:
        raise ConfigError("RANGE_ERROR", f"theta_s={theta_s} not in [0, 1]")
    return np.asarray(consistency, dtype=np.float64) >= theta_s


def baseline_small_loss_predefined(losses: np.ndarray, tau: float) -> np.ndarray:
    """Select the ceil((1-tau)*N) smallest-loss samples; ties by ascending index."""
    if not 0.0 <= tau < 1.0:
        raise ConfigError("RANGE_ERROR", f"tau={tau} not in [0, 1)")
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.shape[0]
    m = math.ceil((1.0 - tau) * n)
    order = np.argsort(losses, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:m]] = True
    return mask


def baseline_gmm_loss(losses: np.ndarray, max_iter: int = 100, tol: float = 1e-6,
                      mu_init: np.ndarray | None = None) -> np.ndarray:
    """Two-component 1-D Gaussian mixture on the loss values via EM; selects the
    samples whose posterior under the lower-mean component exceeds 0.5."""
    x = np.asarray(losses, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise DataError("EMPTY_DATASET", "need at least 2 losses for a mixture fit")
    if not np.all(np.isfinite(x)):
        raise NumericError("NON_FINITE_INPUT", "losses contain non-finite values")
    var0 = float(x.var())
    if var0 < 1e-8:
        raise NumericError("DEGENERATE_FIT", "loss variance collapsed")
    if mu_init is None:
        mu = np.percentile(x, [10.0, 90.0])
    else:
        mu = np.asarray(mu_init, dtype=np.float64).copy()
    var = np.array([var0, var0])
    w = np.array([0.5, 0.5])
    prev_ll = -np.inf
    resp = None
    for _ in range(max_iter):
        log_pdf = (np.log(w)[None, :]
                   - 0.5 * np.log(2.0 * np.pi * var)[None, :]
                   - (x[:, None] - mu[None, :]) ** 2 / (2.0 * var)[None, :])
        lse = np.logaddexp(log_pdf[:, 0], log_pdf[:, 1])
        resp = np.exp(log_pdf - lse[:, None])
        ll = float(lse.mean())
        nk = resp.sum(axis=0)
        w = nk / n
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = (resp * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk
        if var.min() < 1e-8:
            raise NumericError("DEGENERATE_FIT", "component variance collapsed")
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll
    low = int(np.argmin(mu))
    return resp[:, low] > 0.5
