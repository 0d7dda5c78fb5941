"""Presence-masked squared-error loss on 9 x 9 output grids."""

from __future__ import annotations

import numpy as np


def _check(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"grid shapes differ: {pred.shape} vs {target.shape}")
    if pred.ndim not in (2, 3) or pred.shape[-2:] != (9, 9):
        raise ValueError(f"expected 9 x 9 grids, got {pred.shape}")
    return pred, target


def yoho_loss(pred, target, presence_weight: float = 1.0, regression_weight: float = 1.0) -> float:
    """Sum over bins and classes of presence error plus, where the target
    presence is 1, start and end error. Batches are averaged over examples."""
    return yoho_loss_and_grad(pred, target, presence_weight, regression_weight)[0]


def yoho_loss_and_grad(pred, target, presence_weight=1.0, regression_weight=1.0):
    pred, target = _check(pred, target)
    diff = pred - target
    weights = np.empty_like(diff)
    presence = target[..., 0::3]
    weights[..., 0::3] = presence_weight
    weights[..., 1::3] = regression_weight * presence
    weights[..., 2::3] = regression_weight * presence
    n = pred.shape[0] if pred.ndim == 3 else 1
    loss = float(np.sum(weights * diff * diff, dtype=np.float64)) / n
    return loss, (2.0 / n) * weights * diff
