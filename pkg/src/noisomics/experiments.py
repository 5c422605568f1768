"""Desk-scale training comparisons.

A seed's run pretrains one encoder contrastively on an unlabeled pool of
procedural textures, then fits heads on labeled sets of several sizes.  The
same labeled sets train the from-scratch (and optionally joint) baselines
under the same head schedule, and every arm is scored on one held-out set.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import textures
from .analysis.embedding import mmd_rbf
from .engine import PRIMITIVES, NoiseStrengths, compose, sample_strengths
from .model.checkpoint import Checkpoint
from .model.network import EncoderConfig
from .model.training import (Schedule, encode_batch, finetune, make_labeled, pretrain,
                             train_joint, train_scratch)
from .rng import RngStream

NOISE_CLASSES = PRIMITIVES[:-1]
PROTOCOL_HEAD_HIDDEN = 64


@dataclass(frozen=True)
class ToyProtocol:
    image_size: int = 32
    pool_size: int = 512
    val_size: int = 256
    sizes: tuple[int, ...] = (64, 256, 1024)
    joint_size: int = 256
    pretrain_epochs: int = 10
    pretrain_lr: float = 0.003
    head_epochs: int = 30
    head_lr: float = 0.001
    batch_size: int = 16
    positive_mode: str = "fresh"
    mmd_size: int = 256
    mmd_per_class: int = 48

    def pretrain_schedule(self) -> Schedule:
        return Schedule(epochs=self.pretrain_epochs, batch_size=self.batch_size,
                        lr=self.pretrain_lr, optimizer="adam")

    def head_schedule(self) -> Schedule:
        return Schedule(epochs=self.head_epochs, batch_size=self.batch_size, lr=self.head_lr,
                        optimizer="adam")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d


def final_val(ckpt: Checkpoint) -> float:
    vals = [v for _, kind, v in ckpt.log if kind == "val"]
    if not vals:
        raise ValueError("checkpoint log has no validation entries")
    return float(vals[-1])


def val_curve(ckpt: Checkpoint) -> list[float]:
    return [float(v) for _, kind, v in ckpt.log if kind == "val"]


@dataclass
class SeedRun:
    seed: int
    final: dict[str, dict[int, float]] = field(default_factory=dict)
    curves: dict[str, dict[int, list[float]]] = field(default_factory=dict)
    pretrained: Checkpoint | None = None
    scratch: dict[int, Checkpoint] = field(default_factory=dict)

    def record(self, arm: str, n: int, ckpt: Checkpoint) -> None:
        self.final.setdefault(arm, {})[n] = final_val(ckpt)
        self.curves.setdefault(arm, {})[n] = val_curve(ckpt)


def run_seed(seed: int, protocol: ToyProtocol = ToyProtocol(),
             config: EncoderConfig | None = None, joint_sizes: tuple[int, ...] = ()) -> SeedRun:
    """CoP, scratch (and joint at ``joint_sizes``) for every labeled size."""
    p = protocol
    root = RngStream(seed)
    cfg = config or EncoderConfig(input_size=p.image_size, init_seed=seed)
    pool = textures.texture_set(p.pool_size, p.image_size, root.derive("pool"))
    val_images = textures.texture_set(p.val_size, p.image_size, root.derive("val-images"))
    val = make_labeled(val_images, root.derive("val"))
    run = SeedRun(seed)
    run.pretrained = pretrain(cfg, pool, p.pretrain_schedule(), root.derive("pretrain"),
                              positive_mode=p.positive_mode, triplets_per_epoch=p.pool_size)
    sizes = sorted(set(p.sizes) | set(joint_sizes))
    for n in sizes:
        images = textures.texture_set(n, p.image_size, root.derive("train-images"))
        x, y = make_labeled(images, root.derive("labels"))
        head_rng = root.derive("head", n)
        if n in p.sizes:
            run.record("cop", n, finetune(run.pretrained, x, y, p.head_schedule(), head_rng, val=val))
            sc = train_scratch(cfg, x, y, p.head_schedule(), head_rng, val=val)
            run.record("scratch", n, sc)
            run.scratch[n] = sc
        if n in joint_sizes:
            run.record("joint", n, train_joint(cfg, pool, x, y, p.head_schedule(), head_rng,
                                               val=val, positive_mode=p.positive_mode))
    return run


def conditioned_strengths(rng: RngStream, dominant: str, count: int) -> list[NoiseStrengths]:
    """Softmax draws rejected until ``dominant`` is the argmax component."""
    out, i = [], 0
    while len(out) < count:
        eta = sample_strengths(rng.derive("draw", i))
        i += 1
        if eta.dominant() == dominant:
            out.append(eta)
    return out


def family_embeddings(ckpt: Checkpoint, rng: RngStream, per_class: int,
                      image_size: int) -> dict[str, dict[str, np.ndarray]]:
    """Embeddings per (dominant class, texture family).

    Both families receive the same strength vectors and the same per-sample
    streams, so the only difference between the two sets is image content.
    """
    out: dict[str, dict[str, np.ndarray]] = {}
    fams = sorted(textures.FAMILIES)
    clean = {f: textures.texture_set(per_class, image_size, rng.derive("family", k), family=f)
             for k, f in enumerate(fams)}
    for c, cls in enumerate(NOISE_CLASSES):
        genes = conditioned_strengths(rng.derive("genes", c), cls, per_class)
        out[cls] = {}
        for f in fams:
            x = np.stack([compose(img, eta, rng.derive("noise", c).derive("sample", i)).corrupted
                          for i, (img, eta) in enumerate(zip(clean[f], genes))])
            out[cls][f] = encode_batch(ckpt, x)
    return out


def family_mmd(ckpt: Checkpoint, rng: RngStream, per_class: int = 48,
               image_size: int = 32) -> dict[str, float]:
    """Cross-family MMD^2 per dominant class, plus their mean under ``mean``."""
    emb = family_embeddings(ckpt, rng, per_class, image_size)
    res = {cls: mmd_rbf(*(sets[f] for f in sorted(sets))) for cls, sets in emb.items()}
    res["mean"] = float(np.mean(list(res.values())))
    return res


def compare_mmd(run: SeedRun, protocol: ToyProtocol = ToyProtocol()) -> dict[str, dict[str, float]]:
    """Family MMD for the pretrained encoder and the scratch encoder at ``mmd_size``."""
    rng = RngStream(run.seed).derive("mmd")
    scratch = run.scratch[protocol.mmd_size]
    return {"pretrained": family_mmd(run.pretrained, rng, protocol.mmd_per_class,
                                     protocol.image_size),
            "scratch": family_mmd(scratch, rng, protocol.mmd_per_class, protocol.image_size)}


# -- classical baseline suite -------------------------------------------------

BASELINE_ETAS = (0.1, 0.2, 0.4)


def matching_estimate(name: str, x, clean) -> float:
    """The per-primitive estimator that targets ``name``'s strength."""
    from . import baselines as b

    if name == "gaussian":
        return b.estimate_gaussian_sigma(x, clean)
    if name == "salt_pepper":
        return b.estimate_sp_fraction(x)
    if name == "poisson":
        return b.estimate_poisson_gain(x, clean)
    if name == "quantization":
        return b.estimate_quant_step(x)
    if name == "anisotropic":
        return b.estimate_anisotropic_sigma(x, clean)
    raise ValueError(f"no matching estimator for {name!r}")


def baseline_trials(seed: int, trials: int = 100, etas=BASELINE_ETAS, size: int = 128):
    """Single-source corruptions of smooth mid-range textures.

    Yields ``(primitive, eta, trial, estimate, identified dominant)``.
    Textures span [0.3, 0.7] so clamping never reaches the central half of
    the residual distribution that the MAD-based estimators rely on.
    """
    from .baselines import estimate_strengths

    root = RngStream(seed).derive("baseline-suite")
    clean = textures.texture_set(trials, size, root.derive("clean"), family="smooth",
                                 lo=0.3, hi=0.7)
    for p, name in enumerate(NOISE_CLASSES):
        for e, eta in enumerate(etas):
            for t in range(trials):
                s = NoiseStrengths.only(name, eta)
                x = compose(clean[t], s, root.derive("noise", p).derive("eta", e).derive("trial", t)).corrupted
                yield name, eta, t, matching_estimate(name, x, clean[t]), \
                    estimate_strengths(x, clean[t]).dominant()
