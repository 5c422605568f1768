"""Contrastive and regression objectives, each returning the loss and its gradients."""
from __future__ import annotations

import numpy as np

TAU = 0.1


def info_nce_loss(anchor, positive, negative, tau: float = TAU, with_grad: bool = False):
    """Modified InfoNCE over N triplets.

    For triplet i the logits are ``a_i.p_i / tau`` (positive) and
    ``a_i.n_j / tau`` for every j != i (negatives); the loss is the mean
    cross-entropy of picking the positive.  Inputs are (N, d) arrays of
    already-normalized embeddings.  With ``with_grad`` returns
    ``(loss, (d_anchor, d_positive, d_negative))``.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    a = np.atleast_2d(np.asarray(anchor, dtype=np.float64))
    p = np.atleast_2d(np.asarray(positive, dtype=np.float64))
    n = np.atleast_2d(np.asarray(negative, dtype=np.float64))
    if not (a.shape == p.shape == n.shape) or a.shape[0] < 1:
        raise ValueError("anchor, positive and negative must share a non-empty (N, d) shape")
    N = a.shape[0]
    pos = (a * p).sum(axis=1) / tau
    neg = (a @ n.T) / tau
    # logits row i: column 0 = positive, columns 1..N = negatives with j == i masked out
    logits = np.concatenate([pos[:, None], neg], axis=1)
    mask = np.zeros_like(logits, dtype=bool)
    mask[np.arange(N), np.arange(N) + 1] = True
    logits = np.where(mask, -np.inf, logits)
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    loss = float(np.mean(lse - pos))
    if not with_grad:
        return loss
    w = np.exp(logits - lse[:, None])
    g = w / (N * tau)
    g[:, 0] -= 1.0 / (N * tau)
    g_pos, g_neg = g[:, 0], g[:, 1:]
    d_a = g_pos[:, None] * p + g_neg @ n
    d_p = g_pos[:, None] * a
    d_n = g_neg.T @ a
    return loss, (d_a, d_p, d_n)


def mse_head_loss(pred, truth, with_grad: bool = False):
    """Mean over the batch of the squared L2 norm of the strength residual."""
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if pred.shape != truth.shape:
        raise ValueError(f"prediction/truth shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.shape[0] == 0:
        raise ValueError("empty batch")
    r = pred - truth
    loss = float((r * r).sum(axis=1).mean())
    if not with_grad:
        return loss
    return loss, 2.0 * r / pred.shape[0]
