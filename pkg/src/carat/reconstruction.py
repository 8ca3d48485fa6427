"""Two-level cross-modal reconstruction, modality heads and their losses."""

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .nn import MLP, Module
from .ops import bce_with_logits, frobenius_norm, maxpool_stack
from .precision import active_dtype
from .tensor import Tensor, concat, stack

from .extraction import MODALITIES


@dataclass
class LossWeights:
    """Trade-off weights of the four-part objective.

    squared_rec switches the reconstruction residuals from plain Frobenius
    norms to squared ones; squared residuals anneal (gradient shrinks with
    the residual) instead of pushing with constant magnitude forever, which
    matters at desk scale.
    """
    gamma_o: float = 0.01
    gamma_alpha: float = 0.1
    gamma_beta: float = 1.0
    gamma_sf: float = 0.1
    gamma_s: float = 1.0
    gamma_r: float = 1.0
    squared_rec: bool = False

    def __post_init__(self):
        for name, value in vars(self).items():
            if value is not True and value is not False and value < 0:
                raise InputError(f"loss weight {name} must be >= 0")


class ReconstructionNets(Module):
    """Three networks, one per target modality, each (3d per label row) -> d.

    The same network is reused at both reconstruction levels.  Input order
    is always the fixed (t; v; a) concatenation along the feature axis.
    """

    def __init__(self, d, rng):
        self.to_t = MLP(3 * d, d, d, rng)
        self.to_v = MLP(3 * d, d, d, rng)
        self.to_a = MLP(3 * d, d, d, rng)

    def net(self, modality):
        return {"t": self.to_t, "v": self.to_v, "a": self.to_a}[modality]


def reconstruct_first_level(nets, u_tilde, d_tilde):
    """First-level reconstruction: each target's own slot carries its decoded
    intrinsic vectors, the other two slots the decoded semantics.

    u_tilde / d_tilde: dicts modality -> (B, C, d).  Returns dict of U_alpha.
    """
    shapes = {m: u_tilde[m].shape for m in MODALITIES}
    if len(set(shapes.values())) != 1 or any(d_tilde[m].shape != shapes[m] for m in MODALITIES):
        raise InputError(f"first-level inputs disagree in shape: {shapes}")
    out = {}
    for target in MODALITIES:
        slots = [d_tilde[m] if m == target else u_tilde[m] for m in MODALITIES]
        out[target] = nets.net(target)(concat(slots, axis=-1))
    return out


def reconstruct_second_level(nets, u_alpha):
    """Second-level reconstruction: all three targets read the same
    (t; v; a) concatenation of first-level outputs."""
    shapes = {m: u_alpha[m].shape for m in MODALITIES}
    if len(set(shapes.values())) != 1:
        raise InputError(f"second-level inputs disagree in shape: {shapes}")
    joint = concat([u_alpha[m] for m in MODALITIES], axis=-1)
    return {target: nets.net(target)(joint) for target in MODALITIES}


def reconstruction_loss(u_o, u_tilde, u_alpha, squared=False):
    """Sum over modalities of the two Frobenius-norm residuals (unsquared by
    default, squared when requested).

    Inputs are dicts modality -> (C, d) or (B, C, d); batched inputs are
    averaged over the batch so the scale is batch-size independent.  The
    targets u_o enter as constants under differentiation: the residual is
    a constraint on the reconstruction side, and letting it backpropagate
    into the extractor collapses the label representations to the trivial
    (constant, perfectly reconstructable) solution.
    """
    total = None
    for m in MODALITIES:
        if m not in u_o:
            continue
        target = Tensor(u_o[m].data)
        diff_dec = target - u_tilde[m]
        diff_rec = target - u_alpha[m]
        if squared:
            nd = diff_dec.ndim
            if nd == 2:
                term = (diff_dec * diff_dec).sum() + (diff_rec * diff_rec).sum()
            else:
                per = ((diff_dec * diff_dec).sum(axis=-1).sum(axis=-1).mean()
                       + (diff_rec * diff_rec).sum(axis=-1).sum(axis=-1).mean())
                term = per
        elif diff_dec.ndim == 2:
            term = frobenius_norm(diff_dec) + frobenius_norm(diff_rec)
        else:
            term = (frobenius_norm(diff_dec, axis=(-2, -1)).mean()
                    + frobenius_norm(diff_rec, axis=(-2, -1)).mean())
        total = term if total is None else total + term
    return total


class ModalityHeads(Module):
    """Per-modality, label-wise linear classifiers: logit_j = w_j . u_j + b_j."""

    def __init__(self, n_labels, d, rng):
        self.weights = [Tensor((rng.standard_normal((n_labels, d)) / np.sqrt(d))
                               .astype(active_dtype()), requires_grad=True)
                        for _ in MODALITIES]
        self.biases = [Tensor(np.zeros(n_labels, dtype=active_dtype()), requires_grad=True)
                       for _ in MODALITIES]

    def logits(self, modality, u):
        i = MODALITIES.index(modality)
        return (u * self.weights[i]).sum(axis=-1) + self.biases[i]


def modality_max_predict(u_by_modality, heads):
    """Max-pool the per-modality label logits; record which modality won.

    u_by_modality: dict modality -> (B, C, d) of one stage.  Returns the
    pooled logits (B, C) and an int array (B, C) with the argmax modality
    per label (ties -> lowest modality index).
    """
    logit_stack = stack([heads.logits(m, u_by_modality[m]) for m in MODALITIES], axis=0)
    pooled = maxpool_stack(logit_stack)          # (B, C)
    argmax = np.argmax(logit_stack.data, axis=0)  # first max = lowest index
    return pooled, argmax


def lsr_loss(s_o, s_alpha, s_beta, y, weights):
    """Stage-weighted BCE over the three pooled logit sets."""
    return (weights.gamma_o * bce_with_logits(s_o, y)
            + weights.gamma_alpha * bce_with_logits(s_alpha, y)
            + weights.gamma_beta * bce_with_logits(s_beta, y))
