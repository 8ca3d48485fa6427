"""Synthetic multi-modal multi-label data with planted, modality-preferential
label signals.

Labels are drawn from per-label priors (optionally boosted by pairwise
co-occurrence), and each active label adds a fixed template vector to a
random contiguous window of its preferred modality's sequence (full
strength) and of the other modalities (one third strength).  Everything is
a pure function of the seed, so generation is reproducible byte for byte.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, InputError
from .model import Batch

MODALITIES = ("t", "v", "a")


@dataclass
class SynthSpec:
    n_samples: int = 2500
    n_labels: int = 6
    seq_lens: dict = field(default_factory=lambda: {"t": 20, "v": 20, "a": 20})
    raw_dims: dict = field(default_factory=lambda: {"t": 16, "v": 12, "a": 14})
    label_priors: list = None
    cooccur_boost: list = None          # C x C extra P(k | j active), default zeros
    preference: list = None             # label -> modality index, default round-robin
    signal: float = 2.0
    noise: float = 1.0
    seed: int = 0
    split_fractions: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        C = self.n_labels
        if self.label_priors is None:
            self.label_priors = [0.4, 0.35, 0.3, 0.3, 0.25, 0.2][:C] or [0.3] * C
            while len(self.label_priors) < C:
                self.label_priors.append(0.25)
        if len(self.label_priors) != C:
            raise ConfigError("label_priors length must equal n_labels", field="data.label_priors")
        if any(not 0.0 < p < 1.0 for p in self.label_priors):
            raise ConfigError("label priors must lie strictly inside (0, 1)",
                              field="data.label_priors")
        if self.cooccur_boost is None:
            self.cooccur_boost = [[0.0] * C for _ in range(C)]
        if self.preference is None:
            self.preference = [j % len(MODALITIES) for j in range(C)]
        if self.signal < 0:
            raise ConfigError("signal strength must be >= 0", field="data.signal")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1", field="data.split_fractions")

    def echo(self):
        d = dict(vars(self))
        d["split_fractions"] = list(self.split_fractions)
        return d


def _label_templates(spec, rng):
    """Unit template per (label, modality), fixed across the whole dataset."""
    return {m: np.array([t / np.linalg.norm(t) for t in
                         rng.standard_normal((spec.n_labels, spec.raw_dims[m]))])
            for m in MODALITIES}


def _draw_labels(spec, rng):
    y = (rng.random(spec.n_labels) < np.asarray(spec.label_priors)).astype(np.int64)
    boost = np.asarray(spec.cooccur_boost)
    if boost.any():
        for j in range(spec.n_labels):
            if not y[j]:
                continue
            for k in range(spec.n_labels):
                if k != j and not y[k] and boost[j, k] > 0 and rng.random() < boost[j, k]:
                    y[k] = 1
    return y


def _make_sample(spec, templates, rng, sample_id):
    record = {"id": sample_id}
    y = _draw_labels(spec, rng)
    lengths = {}
    for m in MODALITIES:
        n_m = spec.seq_lens[m]
        length = int(rng.integers(max(1, int(np.ceil(0.6 * n_m))), n_m + 1))
        lengths[m] = length
        x = spec.noise * rng.standard_normal((length, spec.raw_dims[m]))
        for j in range(spec.n_labels):
            if not y[j]:
                continue
            strength = spec.signal if spec.preference[j] == MODALITIES.index(m) else spec.signal / 3.0
            w = max(1, length // 3)
            start = int(rng.integers(0, length - w + 1))
            x[start:start + w] += strength * templates[m][j]
        record[m] = x.astype(np.float32)
    for m in MODALITIES:
        record[f"len_{m}"] = lengths[m]
    record["y"] = y
    return record


@dataclass
class Dataset:
    spec_echo: dict
    split: str
    records: list

    def __len__(self):
        return len(self.records)


def generate_dataset(spec):
    """Generate train/val/test splits; a pure function of ``spec.seed``."""
    rng = np.random.default_rng([spec.seed, 0x5EED])
    templates = _label_templates(spec, np.random.default_rng([spec.seed, 0x7E37]))
    records = [_make_sample(spec, templates, rng, i) for i in range(spec.n_samples)]
    n_train = int(round(spec.split_fractions[0] * spec.n_samples))
    n_val = int(round(spec.split_fractions[1] * spec.n_samples))
    splits = {"train": records[:n_train],
              "val": records[n_train:n_train + n_val],
              "test": records[n_train + n_val:]}
    return {name: Dataset(spec.echo(), name, recs) for name, recs in splits.items()}


def save_dataset(dataset, path):
    """JSON-lines: one header object, then one record object per line."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        header = {"type": "header", "split": dataset.split, "count": len(dataset.records),
                  "spec": dataset.spec_echo}
        fh.write(json.dumps(header) + "\n")
        for rec in dataset.records:
            obj = {"id": int(rec["id"]), "y": [int(v) for v in rec["y"]]}
            for m in MODALITIES:
                obj[m] = [[float(v) for v in row] for row in rec[m]]
                obj[f"len_{m}"] = int(rec[f"len_{m}"])
            fh.write(json.dumps(obj) + "\n")
    os.replace(tmp, path)


def load_dataset(path):
    records = []
    header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})", line=lineno)
            if lineno == 1:
                if obj.get("type") != "header":
                    raise FormatError(f"{path}:1: missing header object", line=1)
                header = obj
                continue
            rec = {"id": obj["id"], "y": np.asarray(obj["y"], dtype=np.int64)}
            for m in MODALITIES:
                try:
                    rec[m] = np.asarray(obj[m], dtype=np.float32)
                    rec[f"len_{m}"] = int(obj[f"len_{m}"])
                except (KeyError, ValueError) as exc:
                    raise FormatError(f"{path}:{lineno}: bad record ({exc})", line=lineno)
                if rec[m].ndim != 2 or rec[m].shape[0] != rec[f"len_{m}"]:
                    raise FormatError(f"{path}:{lineno}: feature shape mismatch for {m!r}",
                                      line=lineno)
            records.append(rec)
    if header is None:
        raise FormatError(f"{path}: empty file", line=0)
    if header["count"] != len(records):
        raise FormatError(f"{path}: header count {header['count']} != {len(records)} records",
                          line=0)
    return Dataset(header["spec"], header["split"], records)


def pad_batch(records, seq_lens):
    """Assemble padded arrays + masks + labels from a list of records."""
    B = len(records)
    y = np.stack([np.asarray(r["y"], dtype=np.int64) for r in records])
    features, masks = {}, {}
    for m in MODALITIES:
        n_m = seq_lens[m]
        d_m = records[0][m].shape[1]
        x = np.zeros((B, n_m, d_m), dtype=np.float32)
        mask = np.zeros((B, n_m), dtype=bool)
        for i, r in enumerate(records):
            length = r[f"len_{m}"]
            x[i, :length] = r[m]
            mask[i, :length] = True
        features[m] = x
        masks[m] = mask
    return Batch(features=features, masks=masks, y=y,
                 ids=np.asarray([r["id"] for r in records]))


def batch_iter(dataset, batch_size, seed=None, shuffle=True):
    """Yield batches covering every sample exactly once (last may be short)."""
    if batch_size < 1:
        raise InputError("batch size must be >= 1")
    n = len(dataset.records)
    order = np.arange(n)
    if shuffle:
        order = np.random.default_rng(seed).permutation(n)
    seq_lens = {m: int(dataset.spec_echo["seq_lens"][m]) for m in MODALITIES}
    for start in range(0, n, batch_size):
        chunk = [dataset.records[i] for i in order[start:start + batch_size]]
        yield pad_batch(chunk, seq_lens)
