"""Training losses and their gradients with respect to the prediction.

The regression losses act on raw 3x3 model outputs; projection onto SO(3)
only happens at inference.
"""

from typing import NamedTuple

import numpy as np

from . import octahedral as octa

LN_24 = float(np.log(octa.N_FLIPS))


class LossValue(NamedTuple):
    value: float
    grad: np.ndarray


def naive_l2(pred, r, omega):
    """``||pred - r omega||_F^2`` and its gradient ``2 (pred - r omega)``."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(r) @ np.asarray(omega)
    return LossValue(float(np.sum(diff * diff)), 2.0 * diff)


def quotient_l2(pred, r, omega):
    """Squared distance from ``pred`` to the nearest of ``r Q omega``.

    The gradient is that of the active branch ``Q*``; on (near-)ties the
    lowest flip index is active, which makes it a valid subgradient there.

    Returns
    -------
    loss : LossValue
    argmin : int
        Index of ``Q*``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    targets = np.asarray(r) @ octa.ELEMENTS @ np.asarray(omega)
    diff = pred - targets
    values = np.einsum("kij,kij->k", diff, diff)
    k = octa.argmin_lowest(values)
    return LossValue(float(values[k]), 2.0 * diff[k]), k


def quotient_l2_batch(preds, r, omega=None):
    """Vectorised :func:`quotient_l2` over a batch.

    Parameters
    ----------
    preds, r : ndarray of shape (B, 3, 3)
    omega : ndarray of shape (B, 3, 3), optional
        Orientations of the unrotated shapes; identity when omitted.

    Returns
    -------
    values : ndarray of shape (B,)
    grads : ndarray of shape (B, 3, 3)
    argmin : ndarray of shape (B,)
    """
    orbit = np.einsum("bij,kjl->bkil", r, octa.ELEMENTS)
    if omega is not None:
        orbit = orbit @ omega[:, None]
    diff = preds[:, None] - orbit
    values = np.einsum("bkij,bkij->bk", diff, diff)
    best = values.min(axis=1, keepdims=True)
    k = np.argmax(values <= best + octa.TIE_ATOL, axis=1)
    rows = np.arange(len(preds))
    return values[rows, k], 2.0 * diff[rows, k], k


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def flip_cross_entropy(logits, target):
    """``-log softmax(logits)[target]`` with gradient ``softmax - onehot``."""
    logp = log_softmax(logits)
    if not 0 <= int(target) < logp.shape[-1]:
        raise IndexError(f"target {target} out of range")
    grad = np.exp(logp)
    grad[int(target)] -= 1.0
    return LossValue(float(-logp[int(target)]), grad)


def flip_cross_entropy_batch(logits, targets):
    logp = log_softmax(logits)
    rows = np.arange(len(logits))
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return -logp[rows, targets], grad
