"""Training loop, evaluation, persistence glue.

All randomness is derived from (seed, epoch) or (seed, step), never from a
long-lived stream, so a run can be resumed from a checkpoint and continue
bit-identically to the uninterrupted run.
"""

import math
import os
import time

import numpy as np

from . import checkpoint as ckpt
from .contrastive import STAGES, batch_tags
from .errors import ConfigError, NumericError
from .extraction import MODALITIES
from .metrics import compute_metrics, correlation_matrix
from .model import (AblationConfig, Batch, CaratModel, ContrastiveState, forward_train,
                    predict, train_step_state_update, _stage_representations)
from .optim import Adam
from .precision import set_mode
from .synth import batch_iter, generate_dataset, load_dataset, pad_batch
from .tensor import no_grad

_ORDER_TAG = 11
_SHUFFLE_TAG = 101
_INIT_TAG = 23
_PROTO_TAG = 37


def prepare_datasets(cfg):
    """Load the three splits from cfg.data_dir, or generate them."""
    if cfg.data_dir:
        splits = {}
        for name in ("train", "val", "test"):
            path = os.path.join(cfg.data_dir, f"{name}.jsonl")
            if not os.path.exists(path):
                raise ConfigError(f"missing dataset file {path}", field="data.dir")
            splits[name] = load_dataset(path)
        # model geometry must match the files, not the config defaults
        spec = splits["train"].spec_echo
        cfg.model.n_labels = int(spec["n_labels"])
        cfg.model.seq_lens = {m: int(spec["seq_lens"][m]) for m in MODALITIES}
        cfg.model.raw_dims = {m: int(spec["raw_dims"][m]) for m in MODALITIES}
        cfg.data.n_labels = cfg.model.n_labels
        cfg.data.seq_lens = dict(cfg.model.seq_lens)
        cfg.data.raw_dims = dict(cfg.model.raw_dims)
        return splits
    return generate_dataset(cfg.data)


def build_model(cfg):
    model = CaratModel(cfg.model, np.random.default_rng([cfg.seed, _INIT_TAG]))
    state = ContrastiveState(cfg.contrastive, cfg.model.n_labels, cfg.model.latent,
                             np.random.default_rng([cfg.seed, _PROTO_TAG]))
    return model, state


def evaluate(model, state, dataset, batch_size, ablation=None):
    """Metrics + argmax-modality records + probabilities over a split."""
    all_y, all_bin, all_probs, all_argmax = [], [], [], []
    for batch in batch_iter(dataset, batch_size, shuffle=False):
        probs, binary, argmax = predict(model, state, batch, ablation)
        all_y.append(batch.y)
        all_bin.append(binary)
        all_probs.append(probs)
        all_argmax.append(argmax)
    y = np.concatenate(all_y)
    report = compute_metrics(y, np.concatenate(all_bin))
    argmax_records = np.concatenate(all_argmax)
    report.modality_label_freq = correlation_matrix(
        argmax_records, n_modalities=len(MODALITIES)).tolist()
    return report, argmax_records, np.concatenate(all_probs)


class Trainer:
    """Step-driven training with epoch-boundary evaluation and checkpointing."""

    def __init__(self, cfg, datasets=None):
        set_mode(cfg.precision)
        self.cfg = cfg
        self.datasets = datasets or prepare_datasets(cfg)
        self.model, self.state = build_model(cfg)
        self.n_train = len(self.datasets["train"])
        self.steps_per_epoch = math.ceil(self.n_train / cfg.batch_size)
        self.total_steps = cfg.epochs * self.steps_per_epoch
        warmup = max(1, int(round(cfg.warmup_frac * self.total_steps)))
        self.named = dict(self.model.named_params())
        self.opt = Adam(self.named.values(), peak_lr=cfg.peak_lr, warmup_steps=warmup,
                        total_steps=self.total_steps, beta1=cfg.beta1, beta2=cfg.beta2,
                        eps=cfg.eps)
        self.step = 0
        self.epoch_records = []
        self.best = {"micro_f1": -1.0, "epoch": -1}

    # -- single step ---------------------------------------------------------

    def _batch_at(self, step):
        epoch = step // self.steps_per_epoch
        pos = step % self.steps_per_epoch
        order = np.random.default_rng([self.cfg.seed, epoch, _ORDER_TAG]).permutation(self.n_train)
        idx = order[pos * self.cfg.batch_size:(pos + 1) * self.cfg.batch_size]
        records = [self.datasets["train"].records[i] for i in idx]
        return pad_batch(records, self.cfg.model.seq_lens)

    def train_step(self):
        batch = self._batch_at(self.step)
        shuffle_rng = np.random.default_rng([self.cfg.seed, self.step, _SHUFFLE_TAG])
        losses, caches = forward_train(self.model, self.state, batch, self.cfg.loss,
                                       self.cfg.ablation, shuffle_rng)
        total = losses["total"]
        if not np.isfinite(total.data).all():
            raise NumericError(f"non-finite training loss at step {self.step}")
        self.opt.zero_grad()
        total.backward()
        self.opt.step()
        train_step_state_update(self.state, caches)
        self.step += 1
        return {k: float(v.item()) for k, v in losses.items()}

    # -- epochs ----------------------------------------------------------------

    def run(self, out_dir=None, log=None, checkpoint_best=True):
        """Train to total_steps; returns the per-epoch metric records."""
        loss_sums = {}
        n_in_epoch = 0
        t0 = time.time()
        while self.step < self.total_steps:
            losses = self.train_step()
            for k, v in losses.items():
                loss_sums[k] = loss_sums.get(k, 0.0) + v
            n_in_epoch += 1
            if self.step % self.steps_per_epoch == 0:
                epoch = self.step // self.steps_per_epoch - 1
                record = self._finish_epoch(epoch, loss_sums, n_in_epoch, t0, out_dir,
                                            checkpoint_best)
                if log:
                    log(record)
                loss_sums, n_in_epoch, t0 = {}, 0, time.time()
        return self.epoch_records

    def _finish_epoch(self, epoch, loss_sums, n_steps, t0, out_dir, checkpoint_best):
        report, _, _ = evaluate(self.model, self.state, self.datasets["val"],
                                self.cfg.batch_size, self.cfg.ablation)
        record = {"epoch": epoch, "step": self.step,
                  "train_loss": {k: v / max(n_steps, 1) for k, v in loss_sums.items()},
                  "val": {"acc": report.acc, "precision": report.precision,
                          "recall": report.recall, "micro_f1": report.micro_f1},
                  "seconds": round(time.time() - t0, 3)}
        self.epoch_records.append(record)
        if report.micro_f1 > self.best["micro_f1"]:
            self.best = {"micro_f1": report.micro_f1, "epoch": epoch}
            if out_dir and checkpoint_best:
                self.save(os.path.join(out_dir, "best.ckpt"))
        if out_dir:
            self.save(os.path.join(out_dir, "last.ckpt"))
        return record

    # -- persistence -----------------------------------------------------------

    def save(self, path):
        arrays = {f"param.{name}": p.data for name, p in self.named.items()}
        m_list, v_list = self.opt.state_arrays()
        for (name, _), m_arr, v_arr in zip(self.named.items(), m_list, v_list):
            arrays[f"adam.m.{name}"] = m_arr
            arrays[f"adam.v.{name}"] = v_arr
        arrays["state.prototypes"] = self.state.prototypes.mu
        arrays["state.queue.vectors"] = self.state.queue.vectors
        arrays["state.queue.tags"] = self.state.queue.tags
        meta = {"config": self.cfg.to_flat(), "step": self.step,
                "adam_step": self.opt.step_count, "best": self.best,
                "epoch_records": self.epoch_records}
        ckpt.save_checkpoint(path, arrays, meta)

    def load(self, path):
        arrays, meta = ckpt.load_checkpoint(path)
        for name, p in self.named.items():
            p.data = arrays[f"param.{name}"].astype(p.data.dtype)
        m_list = [arrays[f"adam.m.{name}"] for name in self.named]
        v_list = [arrays[f"adam.v.{name}"] for name in self.named]
        self.opt.load_state(m_list, v_list, meta["adam_step"])
        self.state.prototypes.mu = arrays["state.prototypes"].astype(
            self.state.prototypes.mu.dtype)
        self.state.queue.vectors = arrays["state.queue.vectors"].astype(
            self.state.queue.vectors.dtype)
        self.state.queue.tags = arrays["state.queue.tags"]
        self.step = int(meta["step"])
        self.best = meta.get("best", self.best)
        self.epoch_records = meta.get("epoch_records", [])
        return meta


def restore_trainer(path, datasets=None):
    """Rebuild a Trainer from a checkpoint's config echo and stored state."""
    from .config import build_config
    arrays, meta = ckpt.load_checkpoint(path)
    cfg = build_config(meta["config"])
    trainer = Trainer(cfg, datasets=datasets)
    trainer.load(path)
    return trainer


def export_embeddings(model, state, dataset, path, batch_size=32):
    """TSV dump of latent embeddings: modality, label, polarity, stage, values."""
    pol = ("neg", "pos")
    with open(path + ".tmp", "w", encoding="utf-8") as fh:
        fh.write("sample\tmodality\tlabel\tpolarity\tstage\t"
                 + "\t".join(f"z{i}" for i in range(model.cfg.latent)) + "\n")
        with no_grad():
            for batch in batch_iter(dataset, batch_size, shuffle=False):
                u_o = model.extract(batch)
                _, u_alpha, u_beta, z_o = _stage_representations(
                    model, state, u_o, AblationConfig(), hard=False)
                z_by_stage = {
                    "o": z_o,
                    "alpha": {m: model.latent(m).encode(u_alpha[m]) for m in MODALITIES},
                    "beta": {m: model.latent(m).encode(u_beta[m]) for m in MODALITIES}}
                for st in STAGES:
                    for m in MODALITIES:
                        z = z_by_stage[st][m].data
                        for i in range(z.shape[0]):
                            for j in range(z.shape[1]):
                                row = [str(int(batch.ids[i])), m, str(j),
                                       pol[int(batch.y[i, j])], st]
                                row += [f"{v:.6g}" for v in z[i, j]]
                                fh.write("\t".join(row) + "\n")
    os.replace(path + ".tmp", path)
