"""Per-modality feature extraction.

Each modality gets an independent transformer encoder that maps a raw,
padded feature sequence to hidden states, followed by a label-wise
attention that pools the sequence into one vector per label.  Padded
positions are excluded from every softmax via a large negative bias, so
they neither attend nor are attended to.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .nn import LayerNorm, Linear, Module
from .ops import MASK_BIAS, softmax
from .precision import active_dtype
from .tensor import Tensor, concat

MODALITIES = ("t", "v", "a")


@dataclass
class ModalityConfig:
    """Geometry of one modality's extractor."""
    modality: str
    raw_dim: int
    seq_len: int
    layers: int = 1
    heads: int = 4
    ffn_dim: int = 0      # 0 -> 4 * hidden
    hidden: int = 32

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise InputError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.layers < 1:
            raise InputError("layers must be >= 1")
        if self.hidden % self.heads != 0:
            raise InputError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if self.ffn_dim <= 0:
            self.ffn_dim = 4 * self.hidden


def sinusoidal_positions(n, d):
    """Fixed sin/cos positional table of shape (n, d)."""
    pos = np.arange(n)[:, None].astype(np.float64)
    dim = np.arange(d)[None, :].astype(np.float64)
    angle = pos / np.power(10000.0, 2.0 * (dim // 2) / d)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(active_dtype())


class SelfAttention(Module):
    """Multi-head self-attention with key-side padding masks."""

    def __init__(self, d, heads, rng):
        self.d = d
        self.heads = heads
        self.d_head = d // heads
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.wo = Linear(d, d, rng)

    def __call__(self, x, mask):
        # x: (B, n, d), mask: (B, n) bool; False = padded
        B, n, d = x.shape
        h, dh = self.heads, self.d_head

        def split(t):
            return t.reshape(B, n, h, dh).transpose((0, 2, 1, 3))  # (B, h, n, dh)

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(dh))  # (B, h, n, n)
        bias = np.where(mask, 0.0, MASK_BIAS).astype(x.data.dtype)
        scores = scores + bias[:, None, None, :]
        attn = softmax(scores, axis=-1)
        out = (attn @ v).transpose((0, 2, 1, 3)).reshape(B, n, d)
        return self.wo(out)


class EncoderLayer(Module):
    def __init__(self, d, heads, ffn_dim, rng):
        self.attn = SelfAttention(d, heads, rng)
        self.norm1 = LayerNorm(d)
        self.ffn1 = Linear(d, ffn_dim, rng)
        self.ffn2 = Linear(ffn_dim, d, rng)
        self.norm2 = LayerNorm(d)

    def __call__(self, x, mask):
        x = self.norm1(x + self.attn(x, mask))
        x = self.norm2(x + self.ffn2(self.ffn1(x).tanh()))
        return x


class TransformerExtractor(Module):
    """Raw sequence (B, n_m, d_m) -> hidden sequence (B, n_m, d)."""

    def __init__(self, cfg: ModalityConfig, rng):
        self.cfg = cfg
        self.proj = Linear(cfg.raw_dim, cfg.hidden, rng)
        self.layers_ = [EncoderLayer(cfg.hidden, cfg.heads, cfg.ffn_dim, rng)
                        for _ in range(cfg.layers)]
        self._pos = sinusoidal_positions(cfg.seq_len, cfg.hidden)

    def __call__(self, x, mask):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[None, :]
        if not mask.any(axis=1).all():
            raise InputError("every sequence needs at least one unmasked position")
        n = x.shape[-2]
        h = self.proj(x) + Tensor(self._pos[:n])
        for layer in self.layers_:
            h = layer(h, mask)
        return h


class LabelAttention(Module):
    """Label-wise attention pooling over unmasked positions (one query per label)."""

    def __init__(self, n_labels, d, rng):
        self.weight = Tensor(
            (rng.standard_normal((n_labels, d)) / np.sqrt(d)).astype(active_dtype()),
            requires_grad=True)

    def __call__(self, h, mask):
        # h: (B, n, d) -> (B, C, d); attention normalized over unmasked i
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[None, :]
        scores = h @ self.weight.transpose((1, 0))              # (B, n, C)
        bias = np.where(mask, 0.0, MASK_BIAS).astype(h.data.dtype)
        scores = scores + bias[:, :, None]
        alpha = softmax(scores, axis=1)                          # weights over positions
        return alpha.transpose((0, 2, 1)) @ h                    # (B, C, d)

    def attention_weights(self, h, mask):
        """The normalized coefficients, for inspection/testing."""
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[None, :]
        scores = h @ self.weight.transpose((1, 0))
        bias = np.where(mask, 0.0, MASK_BIAS).astype(h.data.dtype)
        return softmax(scores + bias[:, :, None], axis=1)


class ModalityExtractor(Module):
    """Transformer extractor plus label attention for one modality."""

    def __init__(self, cfg: ModalityConfig, n_labels, rng):
        self.encoder = TransformerExtractor(cfg, rng)
        self.label_attn = LabelAttention(n_labels, cfg.hidden, rng)

    def __call__(self, x, mask):
        h = self.encoder(x, mask)
        return self.label_attn(h, mask)
