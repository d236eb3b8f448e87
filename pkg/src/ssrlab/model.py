"""Small MLP classifier with hand-derived gradients.

Encoder trunk (ReLU hidden layers, linear embedding output), softmax head,
and linear projector/predictor heads for the feature-consistency loss.
Training uses SGD with momentum, weight decay, and cosine-annealed learning
rate; mixup interpolates inputs and soft labels within each batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, NumericError

_NORM_EPS = 1e-12
_PROB_CLAMP = 1e-12


@dataclass
class PmcModel:
    trunk: list        # [(W, b)] chaining d -> h1 -> ... -> e
    head: tuple        # (W, b), e -> M
    projector: tuple   # (W, b), e -> e'
    predictor: tuple   # (W, b), e' -> e'

    def param_pairs(self):
        """All (W, b) pairs in a fixed order."""
        return [*self.trunk, self.head, self.projector, self.predictor]

    def arrays(self):
        out = []
        for w, b in self.param_pairs():
            out.extend((w, b))
        return out


def init_model(dim: int, num_classes: int, hidden_dims=(64, 32),
               proj_dim: Optional[int] = None, rng=None) -> PmcModel:
    rng = np.random.default_rng(rng)
    dims = [dim, *hidden_dims]
    trunk = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = rng.normal(0.0, math.sqrt(2.0 / d_in), size=(d_in, d_out))
        trunk.append((w, np.zeros(d_out)))
    e = dims[-1]
    e2 = e if proj_dim is None else proj_dim
    # zero head: the untrained classifier starts at uniform confidence, so
    # epoch-0 relabelling stays inert
    head = (np.zeros((e, num_classes)), np.zeros(num_classes))
    projector = (rng.normal(0.0, math.sqrt(1.0 / e), size=(e, e2)), np.zeros(e2))
    predictor = (rng.normal(0.0, math.sqrt(1.0 / e2), size=(e2, e2)), np.zeros(e2))
    return PmcModel(trunk, head, projector, predictor)


def zeros_like_model(model: PmcModel) -> PmcModel:
    z = lambda layer: (np.zeros_like(layer[0]), np.zeros_like(layer[1]))
    return PmcModel([z(l) for l in model.trunk], z(model.head),
                    z(model.projector), z(model.predictor))


def add_scaled(acc: PmcModel, grads: PmcModel, scale: float = 1.0) -> PmcModel:
    for (aw, ab), (gw, gb) in zip(acc.param_pairs(), grads.param_pairs()):
        aw += scale * gw
        ab += scale * gb
    return acc


def trunk_forward(model: PmcModel, x: np.ndarray):
    """Returns (embeddings, cache) where cache holds per-layer inputs and
    pre-activations for the backward pass."""
    acts = [x]
    pre = []
    h = x
    last = len(model.trunk) - 1
    for i, (w, b) in enumerate(model.trunk):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    return h, (acts, pre)


def trunk_backward(model: PmcModel, cache, grad_emb: np.ndarray) -> list:
    acts, pre = cache
    g = grad_emb
    grads = [None] * len(model.trunk)
    for i in range(len(model.trunk) - 1, -1, -1):
        w, _ = model.trunk[i]
        grads[i] = (acts[i].T @ g, g.sum(axis=0))
        if i > 0:
            g = (g @ w.T) * (pre[i - 1] > 0)
    return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: PmcModel, inputs: np.ndarray) -> dict:
    x = np.asarray(inputs, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericError("NON_FINITE_INPUT", "inputs contain non-finite values")
    emb, _ = trunk_forward(model, x)
    wh, bh = model.head
    logits = emb @ wh + bh
    return {"logits": logits, "probs": softmax(logits), "embeddings": emb}


def cross_entropy_loss(probs: np.ndarray, soft_labels: np.ndarray):
    """Mean cross-entropy against soft labels; gradient is w.r.t. the logits."""
    b = probs.shape[0]
    loss = float(-(soft_labels * np.log(np.maximum(probs, _PROB_CLAMP))).sum() / b)
    grad_logits = (probs - soft_labels) / b
    return loss, grad_logits


@dataclass
class MiniBatch:
    inputs: np.ndarray           # (B, d)
    soft_labels: np.ndarray      # (B, M), rows sum to 1
    view2: Optional[np.ndarray] = None  # second augmented view for the fc loss


def sample_beta(alpha: float, rng) -> float:
    """Beta(alpha, alpha) via two gamma draws from the given generator."""
    g1 = rng.standard_gamma(alpha)
    g2 = rng.standard_gamma(alpha)
    return float(g1 / (g1 + g2))


def mixup_pair(batch: MiniBatch, alpha: float, rng,
               gamma: Optional[float] = None) -> MiniBatch:
    """Interpolate each row with a uniformly drawn partner row using a single
    Beta(alpha, alpha) coefficient for the batch.

    The drawn coefficient is folded to max(gamma, 1-gamma) so each output row
    stays dominated by its own sample.
    """
    if gamma is None:
        gam = sample_beta(alpha, rng)
        gam = max(gam, 1.0 - gam)
    else:
        gam = float(gamma)
    b = batch.inputs.shape[0]
    partner = rng.integers(0, b, size=b)
    mixed_x = gam * batch.inputs + (1.0 - gam) * batch.inputs[partner]
    mixed_y = gam * batch.soft_labels + (1.0 - gam) * batch.soft_labels[partner]
    return MiniBatch(mixed_x, mixed_y, batch.view2)


def classification_grads(model: PmcModel, inputs: np.ndarray,
                         soft_labels: np.ndarray):
    """Cross-entropy loss and gradients for all trunk/head parameters."""
    emb, cache = trunk_forward(model, inputs)
    wh, bh = model.head
    probs = softmax(emb @ wh + bh)
    loss, grad_logits = cross_entropy_loss(probs, soft_labels)
    grads = zeros_like_model(model)
    grads.head[0][:] = emb.T @ grad_logits
    grads.head[1][:] = grad_logits.sum(axis=0)
    grad_emb = grad_logits @ wh.T
    for slot, (gw, gb) in zip(grads.trunk, trunk_backward(model, cache, grad_emb)):
        slot[0][:] = gw
        slot[1][:] = gb
    return loss, grads


def _fc_head_grad(h1, h2, distance):
    """Per-batch loss and d(loss)/d(h1), d(loss)/d(h2) for the consistency loss."""
    b = h1.shape[0]
    n1 = np.linalg.norm(h1, axis=1)
    n2 = np.linalg.norm(h2, axis=1)
    if n1.min() < _NORM_EPS or n2.min() < _NORM_EPS:
        raise NumericError("ZERO_NORM_EMBEDDING",
                           "consistency-loss embedding has zero norm")
    u = h1 / n1[:, None]
    v = h2 / n2[:, None]
    cos = (u * v).sum(axis=1)
    if distance == "cosine":
        loss = float(-cos.mean())
        scale = 1.0
    elif distance == "l2":
        # squared L2 between the normalized embeddings: 2 - 2*cos
        loss = float((2.0 - 2.0 * cos).mean())
        scale = 2.0
    else:
        raise DataError("SHAPE_MISMATCH", f"unknown fc distance {distance!r}")
    gh1 = -scale * (v - cos[:, None] * u) / n1[:, None] / b
    gh2 = -scale * (u - cos[:, None] * v) / n2[:, None] / b
    return loss, gh1, gh2


def feature_consistency_loss(model: PmcModel, view1: np.ndarray, view2: np.ndarray,
                             distance: str = "cosine", stop_gradient: bool = True):
    """Consistency between predictor(projector(f(view1))) and projector(f(view2)).

    With stop_gradient (the default) the view2 branch is treated as a constant:
    its trunk and projector activations receive no gradient.
    """
    wp, bp = model.projector
    wq, bq = model.predictor
    emb1, cache1 = trunk_forward(model, view1)
    z1 = emb1 @ wp + bp
    h1 = z1 @ wq + bq
    emb2, cache2 = trunk_forward(model, view2)
    h2 = emb2 @ wp + bp
    loss, gh1, gh2 = _fc_head_grad(h1, h2, distance)

    grads = zeros_like_model(model)
    grads.predictor[0][:] = z1.T @ gh1
    grads.predictor[1][:] = gh1.sum(axis=0)
    gz1 = gh1 @ wq.T
    grads.projector[0][:] = emb1.T @ gz1
    grads.projector[1][:] = gz1.sum(axis=0)
    for slot, (gw, gb) in zip(grads.trunk,
                              trunk_backward(model, cache1, gz1 @ wp.T)):
        slot[0][:] = gw
        slot[1][:] = gb
    if not stop_gradient:
        grads.projector[0][:] += emb2.T @ gh2
        grads.projector[1][:] += gh2.sum(axis=0)
        for slot, (gw, gb) in zip(grads.trunk,
                                  trunk_backward(model, cache2, gh2 @ wp.T)):
            slot[0][:] += gw
            slot[1][:] += gb
    return loss, grads


def total_loss_grads(model: PmcModel, batch: MiniBatch, lambda_fc: float,
                     fc_view1: Optional[np.ndarray] = None,
                     fc_view2: Optional[np.ndarray] = None,
                     distance: str = "cosine", stop_gradient: bool = True):
    """Composite objective: cross-entropy plus lambda_fc times the consistency
    loss. With lambda_fc = 0 the consistency branch is never evaluated."""
    ce, grads = classification_grads(model, batch.inputs, batch.soft_labels)
    fc = 0.0
    if lambda_fc > 0:
        v1 = batch.inputs if fc_view1 is None else fc_view1
        v2 = batch.view2 if fc_view2 is None else fc_view2
        fc, fc_grads = feature_consistency_loss(model, v1, v2, distance,
                                                stop_gradient)
        add_scaled(grads, fc_grads, lambda_fc)
    return ce + lambda_fc * fc, grads, {"ce": ce, "fc": fc}


@dataclass
class OptimizerState:
    velocity: PmcModel
    base_lr: float
    momentum: float
    weight_decay: float
    epoch: int = 0

    @classmethod
    def for_model(cls, model: PmcModel, base_lr: float, momentum: float,
                  weight_decay: float) -> "OptimizerState":
        return cls(zeros_like_model(model), base_lr, momentum, weight_decay)


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


def sgd_step(model: PmcModel, grads: PmcModel, opt: OptimizerState,
             lr: Optional[float] = None) -> PmcModel:
    """In-place SGD update: v <- mu*v + g + wd*theta; theta <- theta - lr*v."""
    if lr is None:
        lr = opt.base_lr
    for (w, b), (gw, gb), (vw, vb) in zip(model.param_pairs(),
                                          grads.param_pairs(),
                                          opt.velocity.param_pairs()):
        vw *= opt.momentum
        vw += gw + opt.weight_decay * w
        w -= lr * vw
        vb *= opt.momentum
        vb += gb + opt.weight_decay * b
        b -= lr * vb
    return model


def oversample_balanced(selected_indices: np.ndarray, working_labels: np.ndarray,
                        rng) -> np.ndarray:
    """Repeat minority-class indices (with replacement) until every class in
    the selection appears as often as the largest one, then shuffle."""
    sel = np.asarray(selected_indices, dtype=np.int64)
    if sel.size == 0:
        raise DataError("EMPTY_SELECTION", "no samples to oversample")
    labels = np.asarray(working_labels, dtype=np.int64)[sel]
    classes = np.unique(labels)
    target = int(np.bincount(labels).max())
    parts = []
    for cls in classes:
        members = sel[labels == cls]
        parts.append(members)
        short = target - members.size
        if short > 0:
            parts.append(rng.choice(members, size=short, replace=True))
    out = np.concatenate(parts)
    rng.shuffle(out)
    return out
