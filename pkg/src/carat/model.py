"""The full pipeline: training forward pass, prediction, ablations, baselines."""

from dataclasses import dataclass, field

import numpy as np

from .contrastive import (STAGES, ContrastiveConfig, EmbeddingQueue, LatentSpace,
                          PrototypeBank, batch_tags, intrinsic_vectors, scl_loss)
from .errors import ConfigError, InputError
from .extraction import MODALITIES, ModalityConfig, ModalityExtractor
from .nn import Linear, Module
from .ops import bce_with_logits, sigmoid
from .precision import active_dtype
from .reconstruction import (LossWeights, ModalityHeads, ReconstructionNets,
                             lsr_loss, modality_max_predict, reconstruct_first_level,
                             reconstruct_second_level, reconstruction_loss)
from .shuffle import StackedFeatures, agg_loss, aggregate, modality_wise_shuffle, sample_wise_shuffle
from .tensor import Tensor, concat, no_grad, stack


@dataclass
class Batch:
    """Padded per-modality feature sequences, validity masks, multi-hot labels."""
    features: dict        # modality -> (B, n_m, d_m) float
    masks: dict           # modality -> (B, n_m) bool
    y: np.ndarray         # (B, C) in {0, 1}
    ids: np.ndarray = None

    @property
    def size(self):
        return self.y.shape[0]


@dataclass
class AblationConfig:
    """Variant switches mirroring the ablation table."""
    use_mrm_agg: bool = False     # simplified model, both branches
    use_mrm_only: bool = False
    use_agg_only: bool = False
    disable_scl: bool = False
    disable_en_de: bool = False
    disable_rec_loss: bool = False
    disable_alpha_recon: bool = False
    disable_beta_recon: bool = False
    disable_sws: bool = False
    disable_mws: bool = False

    def __post_init__(self):
        simplified = [self.use_mrm_agg, self.use_mrm_only, self.use_agg_only]
        if sum(simplified) > 1:
            raise ConfigError("use_mrm_agg / use_mrm_only / use_agg_only are mutually exclusive",
                              field="ablation")
        if any(simplified) and any([self.disable_scl, self.disable_en_de, self.disable_rec_loss,
                                    self.disable_alpha_recon, self.disable_beta_recon,
                                    self.disable_sws, self.disable_mws]):
            raise ConfigError("simplified variants cannot be combined with disable_* flags",
                              field="ablation")

    @property
    def simplified(self):
        return self.use_mrm_agg or self.use_mrm_only or self.use_agg_only


@dataclass
class ModelConfig:
    """Dimensions of every component."""
    n_labels: int = 6
    hidden: int = 32
    latent: int = 16
    heads: int = 4
    ffn_dim: int = 0
    layers: dict = field(default_factory=lambda: {"t": 1, "v": 1, "a": 1})
    raw_dims: dict = field(default_factory=lambda: {"t": 16, "v": 12, "a": 14})
    seq_lens: dict = field(default_factory=lambda: {"t": 20, "v": 20, "a": 20})

    def modality_config(self, m):
        return ModalityConfig(modality=m, raw_dim=self.raw_dims[m], seq_len=self.seq_lens[m],
                              layers=self.layers[m], heads=self.heads, ffn_dim=self.ffn_dim,
                              hidden=self.hidden)


class ContrastiveState:
    """Prototype bank plus FIFO embedding queue; mutated between forwards."""

    def __init__(self, cfg: ContrastiveConfig, n_labels, latent_dim, rng):
        self.cfg = cfg
        self.prototypes = PrototypeBank(n_labels, latent_dim, rng)
        self.queue = EmbeddingQueue(cfg.queue_capacity, latent_dim)

    def absorb(self, vectors, tags):
        """Update prototypes then the queue from detached batch embeddings."""
        self.prototypes.update(vectors, tags, self.cfg.momentum)
        self.queue.push(vectors, tags)


class CaratModel(Module):
    """All learnable parameter groups of the architecture."""

    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.extractors = [ModalityExtractor(cfg.modality_config(m), cfg.n_labels, rng)
                           for m in MODALITIES]
        self.latents = [LatentSpace(cfg.hidden, cfg.latent, rng) for _ in MODALITIES]
        self.recon_nets = ReconstructionNets(cfg.hidden, rng)
        self.heads = ModalityHeads(cfg.n_labels, cfg.hidden, rng)
        self.agg_head = Linear(cfg.n_labels * cfg.hidden, cfg.n_labels, rng)

    def extract(self, batch):
        return {m: self.extractors[i](Tensor(batch.features[m]), batch.masks[m])
                for i, m in enumerate(MODALITIES)}

    def latent(self, m):
        return self.latents[MODALITIES.index(m)]


def _stage_representations(model, state, u_o, ablation, hard):
    """From U_o to (U_tilde, U_alpha, U_beta, Z_o); latent parts None when bypassed."""
    if ablation.disable_en_de:
        u_tilde = dict(u_o)
        z_o = None
        if ablation.disable_alpha_recon:
            u_alpha = dict(u_o)
        else:
            joint = concat([u_o[m] for m in MODALITIES], axis=-1)
            u_alpha = {m: model.recon_nets.net(m)(joint) for m in MODALITIES}
    else:
        z_o = {m: model.latent(m).encode(u_o[m]) for m in MODALITIES}
        d_latent = {m: intrinsic_vectors(z_o[m], state.prototypes.modality_slab(m), hard=hard)
                    for m in MODALITIES}
        u_tilde = {m: model.latent(m).decode(z_o[m]) for m in MODALITIES}
        d_tilde = {m: model.latent(m).decode(d_latent[m]) for m in MODALITIES}
        if ablation.disable_alpha_recon:
            u_alpha = dict(u_tilde)
        else:
            u_alpha = reconstruct_first_level(model.recon_nets, u_tilde, d_tilde)
    if ablation.disable_beta_recon:
        u_beta = dict(u_alpha)
    else:
        u_beta = reconstruct_second_level(model.recon_nets, u_alpha)
    return u_tilde, u_alpha, u_beta, z_o


def _flatten_embeddings(z_by_stage, n_labels, y):
    """Stack stage embeddings into one (B*M*S*C, d_z) matrix in the canonical
    (sample, modality, stage, label) order, with matching tags."""
    mats = [z_by_stage[st][m] for m in MODALITIES for st in STAGES]
    stacked = stack(mats, axis=0)                       # (M*S, B, C, d_z)
    B, C = stacked.shape[1], stacked.shape[2]
    emb = stacked.transpose((1, 0, 2, 3)).reshape(B * len(mats) * C, stacked.shape[3])
    tags = batch_tags(y, n_labels)
    return emb, tags


def _aggregate_stage(u_by_modality, y, shuffle_rng, ablation):
    """Stack one stage's representations and run the two shuffles."""
    v = StackedFeatures(stack([u_by_modality[m] for m in MODALITIES], axis=1))
    v_shuf = v
    if not ablation.disable_sws:
        v_shuf = sample_wise_shuffle(v_shuf, shuffle_rng)
    if not ablation.disable_mws:
        v_shuf = modality_wise_shuffle(v_shuf, shuffle_rng)
    q, _ = aggregate(v, y)
    q_hat, y_hat = aggregate(v_shuf, y)
    return q, q_hat, y_hat


def forward_train(model, state, batch, weights, ablation, shuffle_rng):
    """One training forward pass.

    Returns (losses, caches): losses has the component scalars and "total";
    caches carries detached embeddings + tags for the state update and the
    per-label argmax modality records.
    """
    y = batch.y
    u_o = model.extract(batch)
    losses = {}
    caches = {"scl_vectors": None, "scl_tags": None}

    if ablation.simplified:
        zero = Tensor(0.0)
        losses["lsr"] = zero
        losses["agg"] = zero
        losses["scl"] = zero
        losses["rec"] = zero
        total = None
        if ablation.use_mrm_only or ablation.use_mrm_agg:
            s_o, argmax_o = modality_max_predict(u_o, model.heads)
            caches["argmax"] = argmax_o
            losses["lsr"] = bce_with_logits(s_o, y)
            total = losses["lsr"]
        if ablation.use_agg_only or ablation.use_mrm_agg:
            q, _ = aggregate(StackedFeatures(stack([u_o[m] for m in MODALITIES], axis=1)), y)
            losses["agg"] = agg_loss(model.agg_head, q, q, y,ue_labels(y), 0.0)
            total = losses["agg"] if total is None else total + losses["agg"]
        losses["total"] = total
        return losses, caches

    u_tilde, u_alpha, u_beta, z_o = _stage_representations(model, state, u_o, ablation, hard=False)

    s_o, _ = modality_max_predict(u_o, model.heads)
    s_alpha, _ = modality_max_predict(u_alpha, model.heads)
    s_beta, argmax_beta = modality_max_predict(u_beta, model.heads)
    caches["argmax"] = argmax_beta
    losses["lsr"] = lsr_loss(s_o, s_alpha, s_beta, y, weights)

    if ablation.disable_rec_loss or (ablation.disable_en_de and ablation.disable_alpha_recon):
        # with both bypasses U_alpha == U_o exactly; skip the zero norm rather
        # than differentiate sqrt at 0
        losses["rec"] = Tensor(0.0)
    elif ablation.disable_en_de:
        losses["rec"] = reconstruction_loss(u_o, u_o, u_alpha, squared=weights.squared_rec)
    else:
        losses["rec"] = reconstruction_loss(u_o, u_tilde, u_alpha, squared=weights.squared_rec)

    if ablation.disable_scl or ablation.disable_en_de:
        losses["scl"] = Tensor(0.0)
    else:
        z_by_stage = {"o": z_o,
                      "alpha": {m: model.latent(m).encode(u_alpha[m]) for m in MODALITIES},
                      "beta": {m: model.latent(m).encode(u_beta[m]) for m in MODALITIES}}
        emb, tags = _flatten_embeddings(z_by_stage, model.cfg.n_labels, y)
        losses["scl"] = scl_loss(emb, tags, state.queue, state.cfg.temperature)
        caches["scl_vectors"] = emb.data.copy()
        caches["scl_tags"] = tags

    q, q_hat, y_hat = _aggregate_stage(u_beta, y, shuffle_rng, ablation)
    losses["agg"] = agg_loss(model.agg_head, q, q_hat, y, y_hat, weights.gamma_sf)

    losses["total"] = (losses["agg"] + losses["lsr"]
                       + weights.gamma_s * losses["scl"] + weights.gamma_r * losses["rec"])
    return losses, caches


def ue_labels(y):
    """Unshuffled composed labels: every modality slot keeps its own sample's y."""
    y = np.asarray(y)
    return np.broadcast_to(y[:, None, :], (y.shape[0], len(MODALITIES), y.shape[1]))


def predict(model, state, batch, ablation=None, threshold=0.5):
    """Probabilities, binary decisions and argmax-modality records (no shuffling)."""
    ablation = ablation or AblationConfig()
    with no_grad():
        u_o = model.extract(batch)
        if ablation.simplified:
            parts = []
            argmax = None
            if ablation.use_mrm_only or ablation.use_mrm_agg:
                s_o, argmax = modality_max_predict(u_o, model.heads)
                parts.append(sigmoid(s_o).data)
            if ablation.use_agg_only or ablation.use_mrm_agg:
                q, _ = aggregate(StackedFeatures(stack([u_o[m] for m in MODALITIES], axis=1)),
                                 batch.y)
                probs_m = sigmoid(model.agg_head(q)).data       # (B, M, C)
                parts.append(probs_m.mean(axis=1))
            probs = np.mean(parts, axis=0)
            if argmax is None:
                argmax = np.zeros_like(batch.y, dtype=np.int64)
        else:
            _, _, u_beta, _ = _stage_representations(model, state, u_o, ablation, hard=True)
            s_beta, argmax = modality_max_predict(u_beta, model.heads)
            v = StackedFeatures(stack([u_beta[m] for m in MODALITIES], axis=1))
            q, _ = aggregate(v, batch.y)
            agg_probs = sigmoid(model.agg_head(q)).data.mean(axis=1)  # (B, C)
            probs = 0.5 * (agg_probs + sigmoid(s_beta).data)
    binary = (probs >= threshold).astype(np.int64)
    return probs, binary, argmax


def train_step_state_update(state, caches):
    """Absorb the step's detached embeddings into prototypes and queue."""
    if caches.get("scl_vectors") is not None:
        state.absorb(caches["scl_vectors"], caches["scl_tags"])


# ---------------------------------------------------------------------------
# Fusion baselines: extraction + one fusion mechanism, nothing else.
# ---------------------------------------------------------------------------

FUSION_KINDS = ("alignment", "aggregation", "reconstruction-simplified")


class FusionBaseline(Module):
    """Simplified models comparing alignment / aggregation / reconstruction fusion."""

    def __init__(self, kind, cfg: ModelConfig, rng):
        if kind not in FUSION_KINDS:
            raise ConfigError(f"unknown fusion kind {kind!r}", field="fusion.kind")
        self.kind = kind
        self.cfg = cfg
        self.extractors = [ModalityExtractor(cfg.modality_config(m), cfg.n_labels, rng)
                           for m in MODALITIES]
        d, C = cfg.hidden, cfg.n_labels
        if kind == "aggregation":
            self.fuse = Linear(3 * d, d, rng)
        if kind == "reconstruction-simplified":
            self.recon_nets = ReconstructionNets(d, rng)
            self.heads = ModalityHeads(C, d, rng)
        else:
            self.head_w = Tensor((rng.standard_normal((C, d)) / np.sqrt(d)).astype(
                active_dtype()), requires_grad=True)
            self.head_b = Tensor(np.zeros(C, dtype=active_dtype()), requires_grad=True)

    def extract(self, batch):
        return {m: self.extractors[i](Tensor(batch.features[m]), batch.masks[m])
                for i, m in enumerate(MODALITIES)}

    def _label_head(self, u):
        return (u * self.head_w).sum(axis=-1) + self.head_b

    def forward(self, batch):
        """Returns (loss, probs (B, C))."""
        y = batch.y
        u = self.extract(batch)
        if self.kind == "alignment":
            pairs = [(u["t"], u["v"]), (u["t"], u["a"]), (u["v"], u["a"])]
            align = None
            for a, b in pairs:
                diff = a - b
                term = (diff * diff).mean()
                align = term if align is None else align + term
            align = align * (1.0 / len(pairs))
            unified = (u["t"] + u["v"] + u["a"]) * (1.0 / 3.0)
            logits = self._label_head(unified)
            loss = bce_with_logits(logits, y) + align
            return loss, sigmoid(logits).data
        if self.kind == "aggregation":
            joint = concat([u[m] for m in MODALITIES], axis=-1)    # (B, C, 3d)
            unified = self.fuse(joint).tanh()
            logits = self._label_head(unified)
            loss = bce_with_logits(logits, y)
            return loss, sigmoid(logits).data
        # reconstruction-simplified: batch-averaged U as the intrinsic vectors,
        # one reconstruction level, max-pool heads
        mean_u = {m: u[m].mean(axis=0, keepdims=True).broadcast_to(u[m].shape)
                  for m in MODALITIES}
        u_alpha = reconstruct_first_level(self.recon_nets, u, mean_u)
        s, _ = modality_max_predict(u_alpha, self.heads)
        loss = bce_with_logits(s, y) + reconstruction_loss(u, u, u_alpha)
        return loss, sigmoid(s).data
