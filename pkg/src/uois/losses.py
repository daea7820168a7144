"""Training losses as pure (value, gradient) functions.

Gradients are taken with respect to the loss inputs as given: post-softmax
probabilities and post-normalization direction vectors. Chaining through a
softmax or a normalization layer is left to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FIXED_DIRECTION,
    FIRST_INSTANCE,
    BinaryMask,
    DirectionField,
    InstanceLabelMap,
    SemanticLabels,
    SemanticProbs,
)

PROB_FLOOR = 1e-12
LAMBDA_BT = 0.1


def _as_probs(pred) -> np.ndarray:
    return pred.probs if isinstance(pred, SemanticProbs) else np.asarray(pred, dtype=np.float64)


def _as_labels(gt) -> np.ndarray:
    return gt.labels if isinstance(gt, SemanticLabels) else np.asarray(gt, dtype=np.int64)


def _as_dirs(v) -> np.ndarray:
    return v.dirs if isinstance(v, DirectionField) else np.asarray(v, dtype=np.float64)


def class_balanced_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Per-pixel weights inversely proportional to class frequency, summing to 1.

    Classes absent from ``labels`` receive no weight.
    """
    labels = np.asarray(labels)
    counts = np.bincount(labels.ravel(), minlength=num_classes).astype(np.float64)
    inv = np.zeros_like(counts)
    present = counts > 0
    inv[present] = 1.0 / counts[present]
    w = inv[labels]
    total = w.sum()
    return w / total if total > 0 else w


@dataclass(frozen=True, eq=False)
class DirectionLossWeights:
    alpha: np.ndarray
    beta: np.ndarray
    lambda_bt: float = LAMBDA_BT

    @classmethod
    def from_instances(cls, instances: InstanceLabelMap, lambda_bt: float = LAMBDA_BT) -> "DirectionLossWeights":
        """Each instance's pixels share weight 1; background and table share 1."""
        lab = instances.labels
        counts = np.bincount(lab.ravel(), minlength=FIRST_INSTANCE + instances.num_instances).astype(np.float64)
        obj = lab >= FIRST_INSTANCE
        alpha = np.zeros(lab.shape)
        alpha[obj] = 1.0 / counts[lab[obj]]
        bt = ~obj
        beta = np.zeros(lab.shape)
        nbt = int(bt.sum())
        if nbt:
            beta[bt] = 1.0 / nbt
        return cls(alpha, beta, lambda_bt)


def _weighted_ce(probs: np.ndarray, labels: np.ndarray, fault: bool = False):
    if probs.shape[:2] != labels.shape:
        raise ValueError(f"prediction grid {probs.shape[:2]} does not match labels {labels.shape}")
    c = probs.shape[2]
    w = class_balanced_weights(labels, c)
    p_true = np.take_along_axis(probs, labels[..., None], axis=2)[..., 0]
    clamped = np.maximum(p_true, PROB_FLOOR)
    value = float(np.sum(w * -np.log(clamped)))
    grad = np.zeros_like(probs)
    g = np.where(p_true > PROB_FLOOR, -w / clamped, 0.0)
    if fault:
        g = 0.5 * g
    np.put_along_axis(grad, labels[..., None], g[..., None], axis=2)
    return value, grad


def semantic_loss(pred, gt, *, _fault: bool = False):
    """Class-balanced cross entropy over C classes.

    Returns (value, gradient w.r.t. ``pred`` probabilities). Probabilities
    are floored at 1e-12 before the log; floored entries get zero gradient.
    """
    return _weighted_ce(_as_probs(pred), _as_labels(gt), _fault)


def rrn_loss(pred_probs, gt: BinaryMask, *, _fault: bool = False):
    """Foreground/background version of :func:`semantic_loss` (C = 2)."""
    probs = _as_probs(pred_probs)
    if probs.shape[2] != 2:
        raise ValueError("refinement loss expects two-class probabilities")
    labels = (gt.pixels if isinstance(gt, BinaryMask) else np.asarray(gt, bool)).astype(np.int64)
    return _weighted_ce(probs, labels, _fault)


def direction_loss(pred, gt, gt_instances: InstanceLabelMap, lambda_bt: float = LAMBDA_BT, *, _fault: bool = False):
    """Instance-balanced cosine loss on object pixels plus a fixed-direction term elsewhere.

    value = 1/2 sum_O alpha (1 - pred.gt) + lambda_bt/2 sum_BT beta (1 - pred.up)
    """
    v_hat = _as_dirs(pred)
    v = _as_dirs(gt)
    lab = gt_instances.labels
    if v_hat.shape != v.shape or v_hat.shape[:2] != lab.shape:
        raise ValueError("prediction, ground truth and instance map grids must match")
    wts = DirectionLossWeights.from_instances(gt_instances, lambda_bt)
    obj = lab >= FIRST_INSTANCE
    target = np.where(obj[..., None], v, FIXED_DIRECTION)
    weight = np.where(obj, 0.5 * wts.alpha, 0.5 * lambda_bt * wts.beta)
    cos = np.sum(v_hat * target, axis=2)
    value = float(np.sum(weight * (1.0 - cos)))
    grad = -weight[..., None] * target
    if _fault:
        grad = -grad
    return value, grad


def total_loss(sem_pred, sem_gt, dir_pred, dir_gt, gt_instances: InstanceLabelMap, lambda_bt: float = LAMBDA_BT):
    """Sum of the semantic and direction losses, with both gradients."""
    ls, gs = semantic_loss(sem_pred, sem_gt)
    ld, gd = direction_loss(dir_pred, dir_gt, gt_instances, lambda_bt)
    return ls + ld, (gs, gd)
