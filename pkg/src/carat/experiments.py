"""Ablation table and fusion-baseline comparison harnesses."""

import dataclasses
import math

import numpy as np

from .errors import NumericError
from .metrics import compute_metrics, format_table
from .model import FUSION_KINDS, AblationConfig, FusionBaseline
from .optim import Adam
from .precision import set_mode
from .synth import batch_iter, pad_batch
from .tensor import no_grad
from .train import Trainer, evaluate, prepare_datasets

ABLATION_VARIANTS = [
    ("(1) MRM+AGG", {"use_mrm_agg": True}),
    ("(2) only MRM", {"use_mrm_only": True}),
    ("(3) only AGG", {"use_agg_only": True}),
    ("(4) w/o L_scl", {"disable_scl": True}),
    ("(5) w/o En,De", {"disable_en_de": True}),
    ("(6) w/o L_rec", {"disable_rec_loss": True}),
    ("(7) w/o alpha-recon", {"disable_alpha_recon": True}),
    ("(8) w/o beta-recon", {"disable_beta_recon": True}),
    ("(9) w/o alpha&beta-recon", {"disable_alpha_recon": True, "disable_beta_recon": True}),
    ("(10) w/o sw-shf", {"disable_sws": True}),
    ("(11) w/o mw-shf", {"disable_mws": True}),
    ("(12) w/o shf", {"disable_sws": True, "disable_mws": True}),
    ("(13) full", {}),
]


def run_ablation_table(cfg, log=None):
    """Train every ablation variant on the same data; returns (name, report) rows."""
    datasets = prepare_datasets(cfg)
    rows = []
    for name, flags in ABLATION_VARIANTS:
        vcfg = dataclasses.replace(cfg, ablation=AblationConfig(**flags))
        trainer = Trainer(vcfg, datasets=datasets)
        trainer.run()
        report, _, _ = evaluate(trainer.model, trainer.state, datasets["test"],
                                vcfg.batch_size, vcfg.ablation)
        rows.append((name, report))
        if log:
            log(f"{name}: acc={report.acc:.4f} P={report.precision:.4f} "
                f"R={report.recall:.4f} micro_f1={report.micro_f1:.4f}")
    return rows


def ablation_table_text(rows):
    return format_table([[name, r.acc, r.precision, r.recall, r.micro_f1]
                         for name, r in rows],
                        headers=["Variant", "Acc", "P", "R", "Micro-F1"])


def train_fusion_baseline(cfg, kind, datasets):
    """Train one simplified fusion model; returns (model, test MetricsReport)."""
    set_mode(cfg.precision)
    model = FusionBaseline(kind, cfg.model, np.random.default_rng([cfg.seed, 29]))
    named = dict(model.named_params())
    n_train = len(datasets["train"])
    steps_per_epoch = math.ceil(n_train / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    opt = Adam(named.values(), peak_lr=cfg.peak_lr,
               warmup_steps=max(1, int(round(cfg.warmup_frac * total_steps))),
               total_steps=total_steps, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    for step in range(total_steps):
        epoch = step // steps_per_epoch
        pos = step % steps_per_epoch
        order = np.random.default_rng([cfg.seed, epoch, 11]).permutation(n_train)
        idx = order[pos * cfg.batch_size:(pos + 1) * cfg.batch_size]
        batch = pad_batch([datasets["train"].records[i] for i in idx], cfg.model.seq_lens)
        loss, _ = model.forward(batch)
        if not np.isfinite(loss.data).all():
            raise NumericError(f"non-finite {kind} baseline loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
    report = evaluate_fusion(model, datasets["test"], cfg.batch_size)
    return model, report


def evaluate_fusion(model, dataset, batch_size, threshold=0.5):
    all_y, all_bin = [], []
    for batch in batch_iter(dataset, batch_size, shuffle=False):
        with no_grad():
            _, probs = model.forward(batch)
        all_y.append(batch.y)
        all_bin.append((probs >= threshold).astype(np.int64))
    return compute_metrics(np.concatenate(all_y), np.concatenate(all_bin))


def run_fusion_bench(cfg, log=None):
    """Train the three fusion baselines; returns (kind, report) rows."""
    datasets = prepare_datasets(cfg)
    rows = []
    for kind in FUSION_KINDS:
        _, report = train_fusion_baseline(cfg, kind, datasets)
        rows.append((kind, report))
        if log:
            log(f"{kind}: acc={report.acc:.4f} P={report.precision:.4f} "
                f"R={report.recall:.4f} micro_f1={report.micro_f1:.4f}")
    return rows


def fusion_table_text(rows):
    return format_table([[kind, r.acc, r.precision, r.recall, r.micro_f1]
                         for kind, r in rows],
                        headers=["Fusion", "Acc", "P", "R", "Micro-F1"])
