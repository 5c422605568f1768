"""A small convolutional encoder and quantification head with hand-written backprop.

Parameters live in flat float64 vectors (one for the encoder, one for the
head) so checkpoints, optimizers and finite-difference checks can treat them
uniformly.  Layers read views into the flat vector.

Encoder: [conv 3x3 stride 2 -> act] x 2 -> global mean pool (or flatten)
         -> dense -> act -> dense -> L2 normalize.
Head:    sqrt(d) * embedding -> dense -> tanh -> dense -> logistic.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..engine import N_PRIMITIVES
from ..rng import RngStream

# Full-size reference architecture, kept for provenance only; never instantiated here.
FULL_SCALE = {
    "arch": "vit-b", "input_size": 192, "depth": 12, "embed_dim": 768, "heads": 12,
    "layerscale_init": 0.1, "stochastic_depth": 0.1, "outputs": N_PRIMITIVES,
}

ACTIVATIONS = ("silu", "tanh", "relu", "softplus")
POOLS = ("mean", "flatten")
INPUT_CENTER = 0.5


@dataclass(frozen=True)
class EncoderConfig:
    input_size: int = 32
    channels: int = 1
    conv_channels: tuple[int, ...] = (16, 32)
    kernel: int = 3
    stride: int = 2
    hidden: int = 64
    embed_dim: int = 64
    head_hidden: int = 32
    activation: str = "silu"
    pool: str = "mean"
    normalize: bool = True
    init_seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 8:
            raise ValueError("embed_dim must be >= 8")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.kernel % 2 == 0:
            raise ValueError("kernel must be odd")
        if self.pool not in POOLS:
            raise ValueError(f"pool must be one of {POOLS}")
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        if "conv_channels" in d:
            d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)

    def conv_sizes(self) -> list[int]:
        sizes = [self.input_size]
        pad = self.kernel // 2
        for _ in self.conv_channels:
            sizes.append((sizes[-1] + 2 * pad - self.kernel) // self.stride + 1)
        return sizes


@dataclass
class Layout:
    """Name -> (offset, shape) map over a flat parameter vector."""
    entries: dict[str, tuple[int, tuple[int, ...]]] = field(default_factory=dict)
    size: int = 0

    def add(self, name: str, shape: tuple[int, ...]):
        self.entries[name] = (self.size, shape)
        self.size += int(np.prod(shape))

    def view(self, flat: np.ndarray, name: str) -> np.ndarray:
        off, shape = self.entries[name]
        return flat[off:off + int(np.prod(shape))].reshape(shape)


def encoder_layout(cfg: EncoderConfig) -> Layout:
    lay = Layout()
    cin = cfg.channels
    for i, cout in enumerate(cfg.conv_channels):
        lay.add(f"conv{i}.w", (cin * cfg.kernel * cfg.kernel, cout))
        lay.add(f"conv{i}.b", (cout,))
        cin = cout
    side = cfg.conv_sizes()[-1]
    lay.add("fc0.w", (cin if cfg.pool == "mean" else cin * side * side, cfg.hidden))
    lay.add("fc0.b", (cfg.hidden,))
    lay.add("fc1.w", (cfg.hidden, cfg.embed_dim))
    lay.add("fc1.b", (cfg.embed_dim,))
    return lay


def head_layout(cfg: EncoderConfig) -> Layout:
    lay = Layout()
    lay.add("h0.w", (cfg.embed_dim, cfg.head_hidden))
    lay.add("h0.b", (cfg.head_hidden,))
    lay.add("h1.w", (cfg.head_hidden, N_PRIMITIVES))
    lay.add("h1.b", (N_PRIMITIVES,))
    return lay


def _init_block(lay: Layout, stream: RngStream) -> np.ndarray:
    flat = np.zeros(lay.size)
    for i, (name, (off, shape)) in enumerate(lay.entries.items()):
        if name.endswith(".w"):
            fan_in = shape[0]
            w = stream.derive(name, i).sampler().normal(shape, std=np.sqrt(1.0 / fan_in))
            flat[off:off + w.size] = w.ravel()
    return flat


def init_encoder(cfg: EncoderConfig) -> np.ndarray:
    return _init_block(encoder_layout(cfg), RngStream(cfg.init_seed).derive("encoder"))


def init_head(cfg: EncoderConfig) -> np.ndarray:
    lay = head_layout(cfg)
    flat = _init_block(lay, RngStream(cfg.init_seed).derive("head"))
    # start every output at the mean strength 1/k of a softmax draw
    lay.view(flat, "h1.b")[...] = -np.log(N_PRIMITIVES - 1.0)
    return flat


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "silu":
        return z * _sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.logaddexp(0.0, z)


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "silu":
        sig = _sigmoid(z)
        return sig * (1.0 + z * (1.0 - sig))
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return _sigmoid(z)


def _im2col(x: np.ndarray, k: int, stride: int):
    """(B, C, H, W) zero-padded -> (B, Ho*Wo, C*k*k)."""
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho * wo, c * k * k), ho, wo


def _col2im(dcols: np.ndarray, shape, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    b, c, h, w = shape
    pad = k // 2
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    d = dcols.reshape(b, ho, wo, c, k, k)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                d[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, pad:pad + h, pad:pad + w]


def encoder_forward(cfg: EncoderConfig, params: np.ndarray, x: np.ndarray):
    """Embeddings for a batch ``x`` of shape (B, C, H, W); returns (emb, cache)."""
    lay = encoder_layout(cfg)
    cache = []
    h = x - INPUT_CENTER
    for i, cout in enumerate(cfg.conv_channels):
        cols, ho, wo = _im2col(h, cfg.kernel, cfg.stride)
        z = cols @ lay.view(params, f"conv{i}.w") + lay.view(params, f"conv{i}.b")
        a = _act(cfg.activation, z)
        cache.append(("conv", i, h.shape, cols, ho, wo, z, a))
        h = a.reshape(x.shape[0], ho, wo, cout).transpose(0, 3, 1, 2)
    flat = h.mean(axis=(2, 3)) if cfg.pool == "mean" else h.reshape(x.shape[0], -1)
    z0 = flat @ lay.view(params, "fc0.w") + lay.view(params, "fc0.b")
    a0 = _act(cfg.activation, z0)
    raw = a0 @ lay.view(params, "fc1.w") + lay.view(params, "fc1.b")
    if cfg.normalize:
        norm = np.sqrt((raw * raw).sum(axis=1, keepdims=True))
        emb = raw / norm
    else:
        norm = None
        emb = raw
    return emb, (cache, h.shape, flat, z0, a0, raw, norm, emb)


def encoder_backward(cfg: EncoderConfig, params: np.ndarray, fwd_cache, d_emb: np.ndarray,
                     want_input_grad: bool = False):
    lay = encoder_layout(cfg)
    cache, h_shape, flat, z0, a0, raw, norm, emb = fwd_cache
    grad = np.zeros_like(params)
    if cfg.normalize:
        # d(raw/|raw|) = (I - e e^T) / |raw|
        d_raw = (d_emb - emb * (d_emb * emb).sum(axis=1, keepdims=True)) / norm
    else:
        d_raw = d_emb
    lay.view(grad, "fc1.w")[...] = a0.T @ d_raw
    lay.view(grad, "fc1.b")[...] = d_raw.sum(axis=0)
    d_a0 = d_raw @ lay.view(params, "fc1.w").T
    d_z0 = d_a0 * _act_grad(cfg.activation, z0, a0)
    lay.view(grad, "fc0.w")[...] = flat.T @ d_z0
    lay.view(grad, "fc0.b")[...] = d_z0.sum(axis=0)
    d_flat = d_z0 @ lay.view(params, "fc0.w").T
    if cfg.pool == "mean":
        d_h = np.broadcast_to((d_flat / (h_shape[2] * h_shape[3]))[:, :, None, None], h_shape)
    else:
        d_h = d_flat.reshape(h_shape)
    for _, i, in_shape, cols, ho, wo, z, a in reversed(cache):
        cout = z.shape[-1]
        d_a = d_h.transpose(0, 2, 3, 1).reshape(-1, ho * wo, cout)
        d_z = d_a * _act_grad(cfg.activation, z, a)
        lay.view(grad, f"conv{i}.w")[...] = cols.reshape(-1, cols.shape[-1]).T @ d_z.reshape(-1, cout)
        lay.view(grad, f"conv{i}.b")[...] = d_z.sum(axis=(0, 1))
        if i == 0 and not want_input_grad:
            break
        d_cols = d_z @ lay.view(params, f"conv{i}.w").T
        d_h = _col2im(d_cols, in_shape, cfg.kernel, cfg.stride, ho, wo)
    return grad


def head_forward(cfg: EncoderConfig, params: np.ndarray, emb: np.ndarray):
    lay = head_layout(cfg)
    inp = emb * np.sqrt(cfg.embed_dim)
    z = inp @ lay.view(params, "h0.w") + lay.view(params, "h0.b")
    a = np.tanh(z)
    logits = a @ lay.view(params, "h1.w") + lay.view(params, "h1.b")
    pred = _sigmoid(logits)
    return pred, (inp, a, pred)


def head_backward(cfg: EncoderConfig, params: np.ndarray, fwd_cache, d_pred: np.ndarray):
    """Returns (head gradient, gradient w.r.t. the embedding)."""
    lay = head_layout(cfg)
    inp, a, pred = fwd_cache
    grad = np.zeros_like(params)
    d_logits = d_pred * pred * (1.0 - pred)
    lay.view(grad, "h1.w")[...] = a.T @ d_logits
    lay.view(grad, "h1.b")[...] = d_logits.sum(axis=0)
    d_z = (d_logits @ lay.view(params, "h1.w").T) * (1.0 - a * a)
    lay.view(grad, "h0.w")[...] = inp.T @ d_z
    lay.view(grad, "h0.b")[...] = d_z.sum(axis=0)
    d_emb = (d_z @ lay.view(params, "h0.w").T) * np.sqrt(cfg.embed_dim)
    return grad, d_emb
