"""Two-stage training: contrastive pretraining, frozen-encoder head fitting,
plus the from-scratch and joint baselines used for comparison.

Everything is single-threaded and driven by :class:`~noisomics.rng.RngStream`
derivations, so a run is a pure function of its inputs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..engine import (DEFAULT_ORDER, NoiseStrengths, compose, sample_strengths)
from ..rng import GENERATOR_NAME, RngStream
from .checkpoint import Checkpoint, initial_checkpoint
from .losses import TAU, info_nce_loss, mse_head_loss
from .network import (EncoderConfig, encoder_backward, encoder_forward, head_backward,
                      head_forward)

log = logging.getLogger(__name__)

POSITIVE_MODES = ("shared", "fresh")


@dataclass(frozen=True)
class Schedule:
    epochs: int = 10
    batch_size: int = 16
    lr: float = 0.05
    momentum: float = 0.9
    tau: float = TAU
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr >= 0 are required")

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
                "momentum": self.momentum, "tau": self.tau, "optimizer": self.optimizer}


OPTIMIZERS = ("sgd", "adam")


class _Optimizer:
    """SGD with optional momentum, or Adam; state is keyed by parameter block."""

    def __init__(self, schedule: Schedule):
        self.kind = schedule.optimizer
        self.lr, self.momentum = schedule.lr, schedule.momentum
        self.state: dict[int, list] = {}

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if self.lr == 0:
            return
        key = id(params)
        if self.kind == "sgd":
            v = self.state.get(key)
            v = grad.copy() if v is None else self.momentum * v + grad
            self.state[key] = v
            params -= self.lr * v
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        m, v, t = self.state.get(key, (np.zeros_like(grad), np.zeros_like(grad), 0))
        t += 1
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        self.state[key] = (m, v, t)
        params -= self.lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)


def stack(images: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(im, dtype=np.float64) for im in images])


def encode_batch(ckpt: Checkpoint, x: np.ndarray, chunk: int = 512) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    cfg = ckpt.config
    if x.shape[1:] != (cfg.channels, cfg.input_size, cfg.input_size):
        raise ValueError(f"input shape {x.shape[1:]} does not match the encoder's "
                         f"{(cfg.channels, cfg.input_size, cfg.input_size)}")
    out = [encoder_forward(cfg, ckpt.encoder, x[i:i + chunk])[0] for i in range(0, len(x), chunk)]
    return np.concatenate(out)


def encode(ckpt: Checkpoint, x: np.ndarray) -> np.ndarray:
    return encode_batch(ckpt, x)[0]


def predict_batch(ckpt: Checkpoint, x: np.ndarray) -> np.ndarray:
    emb = encode_batch(ckpt, x)
    return head_forward(ckpt.config, ckpt.head, emb)[0]


def predict_strengths(ckpt: Checkpoint, x: np.ndarray) -> NoiseStrengths:
    if ckpt.stage != "finetuned":
        raise ValueError(f"predict_strengths needs a finetuned checkpoint, got stage {ckpt.stage!r}")
    return NoiseStrengths.from_vector(predict_batch(ckpt, x)[0])


# -- data synthesis ---------------------------------------------------------

def make_labeled(images: Sequence[np.ndarray], rng: RngStream, order=DEFAULT_ORDER,
                 modes=None) -> tuple[np.ndarray, np.ndarray]:
    """One composite corruption per clean image; returns (X, Y)."""
    xs, ys = [], []
    for i, img in enumerate(images):
        s = rng.derive("sample", i)
        eta = sample_strengths(s.derive("strengths"))
        xs.append(compose(img, eta, s.derive("noise"), order=order, modes=modes).corrupted)
        ys.append(eta.vector())
    return stack(xs), np.array(ys)


def make_triplets(images: Sequence[np.ndarray], anchor: int, positives: Sequence[int],
                  rng: RngStream, positive_mode: str = "fresh"):
    """Contrastive triplets around one anchor clean image.

    Triplet i: anchor ``A + N_i``, positive ``B_i + N_i`` (same strengths and,
    in ``shared`` mode, the same per-stage draws), negative ``A + M_i`` with an
    independent noise gene ``M_i``.  Returns (anchors, positives, negatives,
    anchor strengths) as arrays.
    """
    if positive_mode not in POSITIVE_MODES:
        raise ValueError(f"positive_mode must be one of {POSITIVE_MODES}")
    A = images[anchor]
    a, p, n, y = [], [], [], []
    for i, b in enumerate(positives):
        gene = rng.derive("gene", i)
        eta = sample_strengths(gene.derive("strengths"))
        noise = gene.derive("noise")
        p_noise = noise if positive_mode == "shared" else gene.derive("noise-positive")
        other = rng.derive("negative", i)
        a.append(compose(A, eta, noise).corrupted)
        p.append(compose(images[b], eta, p_noise).corrupted)
        n.append(compose(A, sample_strengths(other.derive("strengths")),
                         other.derive("noise")).corrupted)
        y.append(eta.vector())
    return stack(a), stack(p), stack(n), np.array(y)


def _positive_indices(n_images: int, anchor: int, count: int, rng: RngStream) -> list[int]:
    # uniform over the other images, so B != A always
    draws = rng.sampler().integers(0, n_images - 1, size=count)
    return [int(d) + (d >= anchor) for d in draws]


def contrastive_batches(n_images: int, n_triplets: int, batch_size: int, rng: RngStream):
    """Yield (step, anchor index, positive indices, stream) for one epoch."""
    order = rng.derive("anchors").sampler().permutation(n_images)
    steps = max(1, -(-n_triplets // batch_size))
    for step in range(steps):
        size = min(batch_size, n_triplets - step * batch_size)
        anchor = int(order[step % n_images])
        s = rng.derive("batch", step)
        yield step, anchor, _positive_indices(n_images, anchor, size, s.derive("positives")), s


# -- losses over the network ------------------------------------------------

def contrastive_step(cfg: EncoderConfig, enc: np.ndarray, anchors, positives, negatives,
                     tau: float = TAU):
    """Loss and encoder gradient for a triplet batch."""
    N = len(anchors)
    x = np.concatenate([anchors, positives, negatives])
    emb, cache = encoder_forward(cfg, enc, x)
    loss, (da, dp, dn) = info_nce_loss(emb[:N], emb[N:2 * N], emb[2 * N:], tau, with_grad=True)
    grad = encoder_backward(cfg, enc, cache, np.concatenate([da, dp, dn]))
    return loss, grad


def mse_step(cfg: EncoderConfig, enc: np.ndarray, head: np.ndarray, x, y,
             train_encoder: bool = True):
    """Loss, encoder gradient (None if frozen) and head gradient for a labeled batch."""
    emb, cache = encoder_forward(cfg, enc, x)
    pred, hcache = head_forward(cfg, head, emb)
    loss, d_pred = mse_head_loss(pred, y, with_grad=True)
    g_head, d_emb = head_backward(cfg, head, hcache, d_pred)
    g_enc = encoder_backward(cfg, enc, cache, d_emb) if train_encoder else None
    return loss, g_enc, g_head


def joint_step(cfg: EncoderConfig, enc, head, anchors, positives, negatives, x, y,
               tau: float = TAU):
    """Contrastive + MSE with weight 1:1; returns (total, contrastive, mse, g_enc, g_head)."""
    c_loss, g_c = contrastive_step(cfg, enc, anchors, positives, negatives, tau)
    m_loss, g_m, g_head = mse_step(cfg, enc, head, x, y)
    return c_loss + m_loss, c_loss, m_loss, g_c + g_m, g_head


def evaluate_mse(ckpt: Checkpoint, x, y) -> float:
    return mse_head_loss(predict_batch(ckpt, x), y)


# -- training entry points ---------------------------------------------------

def _provenance(mode: str, schedule: Schedule, rng: RngStream, **extra) -> dict:
    return {"mode": mode, "schedule": schedule.to_dict(), "generator": GENERATOR_NAME,
            "root_seed": rng.root_seed, "stream": rng.path_string(), **extra}


def pretrain(config: EncoderConfig, images: Sequence[np.ndarray], schedule: Schedule,
             rng: RngStream, positive_mode: str = "fresh",
             triplets_per_epoch: int | None = None) -> Checkpoint:
    """Contrastive pretraining with on-the-fly triplet synthesis."""
    if len(images) < 2:
        raise ValueError("pretraining needs at least 2 clean images")
    ckpt = initial_checkpoint(config)
    enc = ckpt.encoder.copy()
    opt = _Optimizer(schedule)
    per_epoch = triplets_per_epoch or len(images)
    trace = []
    for epoch in range(schedule.epochs):
        er = rng.derive("epoch", epoch)
        losses = []
        for step, anchor, pos, s in contrastive_batches(len(images), per_epoch,
                                                          schedule.batch_size, er):
            a, p, n, _ = make_triplets(images, anchor, pos, s, positive_mode)
            loss, grad = contrastive_step(config, enc, a, p, n, schedule.tau)
            opt.step(enc, grad)
            losses.append(loss)
        trace.append((epoch, "train", float(np.mean(losses))))
        log.debug("pretrain epoch %d loss %.5f", epoch, trace[-1][2])
    return Checkpoint(config, enc, ckpt.head.copy(), stage="pretrained",
                      provenance=_provenance("pretrain", schedule, rng,
                                             positive_mode=positive_mode,
                                             n_images=len(images)),
                      log=trace)


def _minibatches(n: int, batch_size: int, rng: RngStream):
    order = rng.sampler().permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def finetune(pretrained: Checkpoint, x: np.ndarray, y: np.ndarray, schedule: Schedule,
             rng: RngStream, val: tuple[np.ndarray, np.ndarray] | None = None) -> Checkpoint:
    """Fit the head on frozen encoder features; the encoder block is never written."""
    if pretrained.stage not in ("pretrained", "init"):
        raise ValueError(f"finetune expects a pretrained (or init) checkpoint, "
                         f"got stage {pretrained.stage!r}")
    cfg = pretrained.config
    enc = pretrained.encoder.copy()
    head = pretrained.head.copy()
    feats = encode_batch(pretrained, x)
    val_feats = encode_batch(pretrained, val[0]) if val is not None else None
    opt = _Optimizer(schedule)
    trace = []
    for epoch in range(schedule.epochs):
        losses = []
        for idx in _minibatches(len(x), schedule.batch_size, rng.derive("epoch", epoch)):
            pred, hcache = head_forward(cfg, head, feats[idx])
            loss, d_pred = mse_head_loss(pred, y[idx], with_grad=True)
            opt.step(head, head_backward(cfg, head, hcache, d_pred)[0])
            losses.append(loss)
        trace.append((epoch, "train", float(np.mean(losses))))
        if val_feats is not None:
            trace.append((epoch, "val", mse_head_loss(head_forward(cfg, head, val_feats)[0], val[1])))
    prov = _provenance("finetune", schedule, rng, base_stage=pretrained.stage,
                       base=pretrained.provenance)
    return Checkpoint(cfg, enc, head, stage="finetuned", provenance=prov,
                      log=list(pretrained.log) + trace if pretrained.stage == "pretrained" else trace)


def train_scratch(config: EncoderConfig, x: np.ndarray, y: np.ndarray, schedule: Schedule,
                  rng: RngStream, val: tuple[np.ndarray, np.ndarray] | None = None) -> Checkpoint:
    """End-to-end supervised training of encoder and head from initialization."""
    ckpt = initial_checkpoint(config)
    enc, head = ckpt.encoder.copy(), ckpt.head.copy()
    opt = _Optimizer(schedule)
    trace = []
    for epoch in range(schedule.epochs):
        losses = []
        for idx in _minibatches(len(x), schedule.batch_size, rng.derive("epoch", epoch)):
            loss, g_enc, g_head = mse_step(config, enc, head, x[idx], y[idx])
            opt.step(enc, g_enc)
            opt.step(head, g_head)
            losses.append(loss)
        trace.append((epoch, "train", float(np.mean(losses))))
        if val is not None:
            trace.append((epoch, "val", _mse(config, enc, head, *val)))
    return Checkpoint(config, enc, head, stage="finetuned",
                      provenance=_provenance("scratch", schedule, rng), log=trace)


def train_joint(config: EncoderConfig, images: Sequence[np.ndarray], x: np.ndarray,
                y: np.ndarray, schedule: Schedule, rng: RngStream,
                val: tuple[np.ndarray, np.ndarray] | None = None,
                positive_mode: str = "fresh") -> Checkpoint:
    """Simultaneous contrastive + MSE training (weight 1:1) of encoder and head.

    Each labeled minibatch is paired with a contrastive triplet batch of the
    same size synthesized from ``images``.
    """
    if len(images) < 2:
        raise ValueError("joint training needs at least 2 clean images")
    ckpt = initial_checkpoint(config)
    enc, head = ckpt.encoder.copy(), ckpt.head.copy()
    opt = _Optimizer(schedule)
    trace = []
    for epoch in range(schedule.epochs):
        er = rng.derive("epoch", epoch)
        batches = contrastive_batches(len(images), len(x), schedule.batch_size, er.derive("contrastive"))
        losses = []
        for idx, (step, anchor, pos, s) in zip(_minibatches(len(x), schedule.batch_size, er), batches):
            a, p, n, _ = make_triplets(images, anchor, pos[:len(idx)], s, positive_mode)
            total, _, _, g_enc, g_head = joint_step(config, enc, head, a, p, n, x[idx], y[idx],
                                                    schedule.tau)
            opt.step(enc, g_enc)
            opt.step(head, g_head)
            losses.append(total)
        trace.append((epoch, "train", float(np.mean(losses))))
        if val is not None:
            trace.append((epoch, "val", _mse(config, enc, head, *val)))
    return Checkpoint(config, enc, head, stage="finetuned",
                      provenance=_provenance("joint", schedule, rng), log=trace)


def _mse(cfg, enc, head, x, y) -> float:
    emb = encoder_forward(cfg, enc, x)[0]
    return mse_head_loss(head_forward(cfg, head, emb)[0], y)


def with_stage(ckpt: Checkpoint, stage: str) -> Checkpoint:
    return replace(ckpt, stage=stage)
