"""Latent space, supervised contrastive loss, embedding queue and prototypes.

Every label-specific vector is projected into a shared latent space and
L2-normalized.  Embeddings are tagged by (modality, label, polarity); the
contrastive loss pulls same-tag embeddings together against the rest of a
pool that includes a FIFO queue of recent (gradient-free) embeddings.
Per-tag prototypes are maintained as momentum averages and queried to
produce the intrinsic vectors that drive reconstruction.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateVectorError, InputError
from .nn import MLP, Module
from .ops import MASK_BIAS, l2_normalize, softmax
from .precision import active_dtype
from .tensor import Tensor, concat

from .extraction import MODALITIES

POLARITIES = ("neg", "pos")
STAGES = ("o", "alpha", "beta")


@dataclass
class ContrastiveConfig:
    temperature: float = 0.1
    queue_capacity: int = 8192
    momentum: float = 0.99

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive", field="contrastive.temperature")
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError("momentum must lie in [0, 1]", field="contrastive.momentum")
        if self.queue_capacity < 0:
            raise ConfigError("queue capacity must be >= 0", field="contrastive.queue_capacity")


def relabel(modality, label, y_value, n_labels):
    """Integer class tag for (modality, label index, polarity of y)."""
    if label < 0 or label >= n_labels:
        raise InputError(f"label index {label} out of range [0, {n_labels})")
    if y_value not in (0, 1):
        raise InputError("label polarity source must be 0 or 1")
    m = MODALITIES.index(modality) if isinstance(modality, str) else int(modality)
    return (m * n_labels + label) * 2 + int(y_value)


def decode_tag(tag, n_labels):
    """Inverse of relabel: tag -> (modality, label, polarity)."""
    k = tag % 2
    rest = tag // 2
    return MODALITIES[rest // n_labels], rest % n_labels, POLARITIES[k]


def batch_tags(y, n_labels):
    """Tags for a batch, ordered (sample, modality, stage, label).

    y: (B, C) multi-hot.  Returns an int array of length B*M*S*C matching
    the row order used when batch embeddings are flattened for the pool.
    """
    B = y.shape[0]
    M, S, C = len(MODALITIES), len(STAGES), n_labels
    m_idx = np.arange(M)[None, :, None, None]
    j_idx = np.arange(C)[None, None, None, :]
    k = y[:, None, None, :].astype(np.int64)
    tags = (m_idx * C + j_idx) * 2 + k
    return np.broadcast_to(tags, (B, M, S, C)).reshape(-1)


class EmbeddingQueue:
    """FIFO store of recent latent embeddings with their class tags."""

    def __init__(self, capacity, dim):
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.vectors = np.zeros((0, dim), dtype=active_dtype())
        self.tags = np.zeros(0, dtype=np.int64)

    def __len__(self):
        return self.vectors.shape[0]

    def push(self, vectors, tags):
        """Append in order; evict oldest entries beyond capacity."""
        vectors = np.asarray(vectors, dtype=self.vectors.dtype)
        tags = np.asarray(tags, dtype=np.int64)
        if vectors.shape[0] != tags.shape[0]:
            raise InputError("vectors/tags length mismatch")
        if vectors.shape[0] == 0:
            return
        self.vectors = np.concatenate([self.vectors, vectors], axis=0)[-self.capacity:]
        self.tags = np.concatenate([self.tags, tags])[-self.capacity:]


class PrototypeBank:
    """One momentum-averaged unit vector per (modality, label, polarity)."""

    def __init__(self, n_labels, dim, rng):
        M = len(MODALITIES)
        mu = rng.standard_normal((M, n_labels, 2, dim))
        mu /= np.linalg.norm(mu, axis=-1, keepdims=True)
        self.mu = mu.astype(active_dtype())
        self.n_labels = n_labels

    def update(self, vectors, tags, momentum):
        """Moving-average update, applied sequentially in the given order."""
        if momentum == 1.0:
            return
        flat = self.mu.reshape(-1, self.mu.shape[-1])
        for vec, tag in zip(np.asarray(vectors), np.asarray(tags)):
            mixed = momentum * flat[tag] + (1.0 - momentum) * vec
            norm = np.linalg.norm(mixed)
            if norm <= 1e-12:
                raise DegenerateVectorError(f"prototype update for tag {tag} collapsed to zero")
            flat[tag] = mixed / norm

    def modality_slab(self, modality):
        m = MODALITIES.index(modality) if isinstance(modality, str) else int(modality)
        return self.mu[m]  # (C, 2, dim)


class LatentSpace(Module):
    """Per-modality encoder (d -> d -> d_z, rows normalized) and decoder."""

    def __init__(self, d, d_z, rng):
        self.enc = MLP(d, d, d_z, rng)
        self.dec = MLP(d_z, d, d, rng)

    def encode(self, u):
        return l2_normalize(self.enc(u), axis=-1)

    def decode(self, z):
        return self.dec(z)


def intrinsic_vectors(z, proto_slab, hard=False):
    """Prototype mixture queried by latent rows.

    z: (B, C, d_z) unit rows; proto_slab: (C, 2, d_z) constants for one
    modality.  Soft mode returns the softmax-weighted prototype mix used in
    training; hard mode returns the single prototype with the larger
    similarity, ties falling to the negative polarity.
    """
    mu = Tensor(proto_slab)
    zc = z.transpose((1, 0, 2))                    # (C, B, d_z)
    sims = zc @ mu.transpose((0, 2, 1))            # (C, B, 2)
    if hard:
        s = sims.data
        pick_pos = s[..., 1] > s[..., 0]           # strict: tie -> neg
        sel = np.where(pick_pos[..., None, None],
                       proto_slab[:, None, 1:2, :], proto_slab[:, None, 0:1, :])
        d = Tensor(sel[:, :, 0, :])
    else:
        alpha = softmax(sims, axis=-1)             # (C, B, 2)
        d = alpha @ mu                             # (C, B, d_z)
    return d.transpose((1, 0, 2))                  # (B, C, d_z)


def scl_loss(embeddings, tags, queue, temperature):
    """Supervised contrastive loss of a batch against batch + queue.

    embeddings: (N, d_z) tensor of unit rows (the anchors, with gradients);
    tags: (N,) int array aligned with the rows; queue entries join the pool
    as constants.  Each anchor is contrasted against the pool minus itself,
    averaged over its positive set; anchors without positives contribute 0.
    The anchor losses are summed.
    """
    if temperature <= 0:
        raise ConfigError("temperature must be positive", field="contrastive.temperature")
    tags = np.asarray(tags, dtype=np.int64)
    N = embeddings.shape[0]
    if N == 0:
        return Tensor(0.0)
    if queue is not None and len(queue) > 0:
        pool = concat([embeddings, Tensor(queue.vectors)], axis=0)
        pool_tags = np.concatenate([tags, queue.tags])
    else:
        pool = embeddings
        pool_tags = tags
    P = pool.shape[0]

    logits = (embeddings @ pool.transpose((1, 0))) * (1.0 / temperature)  # (N, P)
    self_bias = np.zeros((N, P), dtype=embeddings.data.dtype)
    self_bias[np.arange(N), np.arange(N)] = MASK_BIAS  # anchor i is pool row i
    logits = logits + self_bias

    pos = tags[:, None] == pool_tags[None, :]
    pos[np.arange(N), np.arange(N)] = False
    n_pos = pos.sum(axis=1)
    active = n_pos > 0

    # log-sum-exp over the pool minus self (the bias already removed self)
    m = logits.data.max(axis=1, keepdims=True)
    lse = (logits - m).exp().sum(axis=1, keepdims=True).log() + m   # (N, 1)

    anchor_w = active.astype(embeddings.data.dtype)
    pos_w = (pos / np.maximum(n_pos, 1)[:, None] * anchor_w[:, None]).astype(
        embeddings.data.dtype)
    loss = (lse.reshape(N) * Tensor(anchor_w)).sum() - (logits * Tensor(pos_w)).sum()
    return loss
