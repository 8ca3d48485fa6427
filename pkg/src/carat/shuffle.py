"""Sample-wise and modality-wise shuffles over stacked features, aggregation.

The stacked second-level representations (B, M, C, d) are shuffled with
independent per-label-slot permutations: first along the batch axis for
every (modality, label) slot, then along the modality axis for every
(sample, label) slot.  Provenance records track the (sample, modality)
origin of every slot so composed labels can be read off after shuffling.
"""

import numpy as np

from .errors import InputError
from .ops import bce_with_logits
from .tensor import Tensor

from .extraction import MODALITIES


class StackedFeatures:
    """Values (B, M, C, d) plus per-slot provenance of shape (B, M, C)."""

    def __init__(self, values, src_sample=None, src_modality=None):
        if values.ndim != 4:
            raise InputError(f"stacked features must be 4-d, got shape {values.shape}")
        B, M, C, _ = values.shape
        self.values = values
        if src_sample is None:
            src_sample = np.broadcast_to(np.arange(B)[:, None, None], (B, M, C)).copy()
        if src_modality is None:
            src_modality = np.broadcast_to(np.arange(M)[None, :, None], (B, M, C)).copy()
        self.src_sample = src_sample
        self.src_modality = src_modality

    @property
    def shape(self):
        return self.values.shape


def sample_wise_shuffle(stacked, rng):
    """Independent uniform permutation of the batch axis at every (m, j) slot."""
    B, M, C, d = stacked.shape
    if B < 1:
        raise InputError("need at least one sample")
    perms = np.empty((B, M, C), dtype=np.int64)
    for m in range(M):
        for j in range(C):
            perms[:, m, j] = rng.permutation(B)
    idx = np.broadcast_to(perms[..., None], (B, M, C, d))
    values = stacked.values.take_along_axis(idx, axis=0)
    return StackedFeatures(values,
                           np.take_along_axis(stacked.src_sample, perms, axis=0),
                           np.take_along_axis(stacked.src_modality, perms, axis=0))


def modality_wise_shuffle(stacked, rng):
    """Independent uniform permutation of the modality axis at every (i, j) slot."""
    B, M, C, d = stacked.shape
    if M < 1:
        raise InputError("need at least one modality")
    perms = np.empty((B, M, C), dtype=np.int64)
    for i in range(B):
        for j in range(C):
            perms[i, :, j] = rng.permutation(M)
    idx = np.broadcast_to(perms[..., None], (B, M, C, d))
    values = stacked.values.take_along_axis(idx, axis=1)
    return StackedFeatures(values,
                           np.take_along_axis(stacked.src_sample, perms, axis=1),
                           np.take_along_axis(stacked.src_modality, perms, axis=1))


def aggregate(stacked, labels):
    """Concatenate label rows into per-(sample, modality) vectors.

    Returns (q, composed) where q is (B, M, C*d) and composed (B, M, C) holds
    the label value of each slot's source sample:
    composed[i, m, j] = labels[src_sample[i, m, j], j].
    """
    B, M, C, d = stacked.shape
    q = stacked.values.reshape(B, M, C * d)
    labels = np.asarray(labels)
    composed = labels[stacked.src_sample, np.arange(C)[None, None, :]]
    return q, composed


def agg_loss(head, q, q_hat, labels, labels_hat, gamma_sf):
    """Mean over modalities of BCE on clean and shuffled aggregates.

    head maps (..., C*d) -> (..., C) logits; the two BCE terms are computed
    per modality and averaged, the shuffled term scaled by gamma_sf.
    """
    M = q.shape[1]
    total = None
    for m in range(M):
        term = bce_with_logits(head(q[:, m]), labels)
        if gamma_sf != 0.0:
            term = term + gamma_sf * bce_with_logits(head(q_hat[:, m]), labels_hat[:, m])
        total = term if total is None else total + term
    return total * (1.0 / M)
