"""L1 loss with optional binary masking; subgradient at 0 is 0."""

from __future__ import annotations

import numpy as np

from .tensor import as_array


def _masked_count(pred, target, mask):
    pred = as_array(pred)
    target = as_array(target)
    if pred.shape != target.shape:
        raise ValueError(f"pred/target shape mismatch: {pred.shape} vs {target.shape}")
    if mask is None:
        return pred, target, None, pred.size
    mask = as_array(mask)
    if mask.shape != pred.shape:
        raise ValueError(f"mask shape mismatch: {mask.shape} vs {pred.shape}")
    count = float(mask.sum())
    if count == 0:
        raise ValueError("empty mask")
    return pred, target, mask, count


def l1_loss(pred, target, mask=None) -> float:
    """Mean |pred - target| over all (or masked) entries."""
    pred, target, mask, count = _masked_count(pred, target, mask)
    diff = np.abs(pred - target)
    if mask is not None:
        diff = diff * mask
    return float(diff.sum() / count)


def l1_loss_grad(pred, target, mask=None) -> np.ndarray:
    """d(l1_loss)/d(pred); sign convention sign(0) = 0."""
    pred, target, mask, count = _masked_count(pred, target, mask)
    grad = np.sign(pred - target) / count
    if mask is not None:
        grad = grad * mask
    return grad
