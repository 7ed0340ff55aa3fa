"""Classification scores on a node mask."""

from __future__ import annotations

import numpy as np


def _masked(pred, truth, mask):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if mask is None:
        mask = np.ones(len(truth), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no nodes")
    return pred[mask], truth[mask]


def macro_f1(pred, truth, mask=None) -> float:
    """Unweighted mean of per-class F1 over classes seen in truth or prediction.

    A class absent from both is ignored; a class never predicted but present
    in the truth scores 0.
    """
    p, t = _masked(pred, truth, mask)
    classes = np.union1d(p, t)
    # one-hot confusion counts per class
    tp = np.array([np.sum((p == c) & (t == c)) for c in classes], dtype=np.float64)
    fp = np.array([np.sum((p == c) & (t != c)) for c in classes], dtype=np.float64)
    fn = np.array([np.sum((p != c) & (t == c)) for c in classes], dtype=np.float64)
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())


def accuracy(pred, truth, mask=None) -> float:
    p, t = _masked(pred, truth, mask)
    return float(np.mean(p == t))
