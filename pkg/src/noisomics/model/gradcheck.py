"""Central-difference verification of the hand-written gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .losses import TAU, info_nce_loss, mse_head_loss
from .network import (EncoderConfig, encoder_backward, encoder_forward, head_backward,
                      head_forward)

EPS_RANGE = (1e-7, 1e-3)
# gradients smaller than this are compared in absolute terms
REL_FLOOR = 1e-7


class NumericFailure(ArithmeticError):
    pass


def grad_check(fn: Callable[[np.ndarray], tuple[float, np.ndarray]], params: np.ndarray,
               epsilon: float = 1e-6, indices=None) -> float:
    """Max relative error between ``fn``'s analytic gradient and central differences.

    ``fn(params) -> (loss, grad)``.  Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, REL_FLOOR)``.
    """
    if not EPS_RANGE[0] <= epsilon <= EPS_RANGE[1]:
        raise ValueError(f"epsilon must lie in {EPS_RANGE}")
    p = np.array(params, dtype=np.float64)
    loss, grad = fn(p)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NumericFailure(f"non-finite loss or gradient: {loss}")
    idx = range(p.size) if indices is None else indices
    worst = 0.0
    for i in idx:
        old = p[i]
        p[i] = old + epsilon
        up = fn(p)[0]
        p[i] = old - epsilon
        down = fn(p)[0]
        p[i] = old
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericFailure(f"non-finite loss while perturbing parameter {i}")
        num = (up - down) / (2 * epsilon)
        err = abs(grad[i] - num) / max(abs(grad[i]), abs(num), REL_FLOOR)
        worst = max(worst, err)
    return worst


def contrastive_objective(cfg: EncoderConfig, anchors, positives, negatives, tau: float = TAU):
    """Loss/gradient over the encoder vector for one triplet batch."""
    n = len(anchors)
    x = np.concatenate([anchors, positives, negatives])

    def fn(enc):
        emb, cache = encoder_forward(cfg, enc, x)
        loss, (da, dp, dn) = info_nce_loss(emb[:n], emb[n:2 * n], emb[2 * n:], tau, with_grad=True)
        return loss, encoder_backward(cfg, enc, cache, np.concatenate([da, dp, dn]))
    return fn


def mse_objective(cfg: EncoderConfig, n_encoder: int, x, y):
    """Loss/gradient over the concatenated [encoder, head] vector for a labeled batch."""
    def fn(params):
        enc, head = params[:n_encoder], params[n_encoder:]
        emb, cache = encoder_forward(cfg, enc, x)
        pred, hcache = head_forward(cfg, head, emb)
        loss, d_pred = mse_head_loss(pred, y, with_grad=True)
        g_head, d_emb = head_backward(cfg, head, hcache, d_pred)
        return loss, np.concatenate([encoder_backward(cfg, enc, cache, d_emb), g_head])
    return fn


def check_model(cfg: EncoderConfig, encoder: np.ndarray, head: np.ndarray, loss: str, batch,
                epsilon: float = 1e-6) -> float:
    """``batch`` is (anchors, positives, negatives) for ``contrastive`` or (x, y) for ``mse``."""
    if loss == "contrastive":
        return grad_check(contrastive_objective(cfg, *batch), encoder, epsilon)
    if loss == "mse":
        return grad_check(mse_objective(cfg, encoder.size, *batch),
                          np.concatenate([encoder, head]), epsilon)
    raise ValueError(f"loss must be 'contrastive' or 'mse', got {loss!r}")


TOY_CONFIG = EncoderConfig(input_size=8, conv_channels=(3, 4), hidden=8, embed_dim=8,
                           head_hidden=6)
