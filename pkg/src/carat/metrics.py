"""Multi-label metrics and the modality-to-label correlation export.

Accuracy is the example-based Jaccard score (|y AND yhat| / |y OR yhat|,
with the empty/empty sample counted as 1); precision, recall and F1 are
micro-averaged over all (sample, label) cells.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass
class MetricsReport:
    acc: float
    precision: float
    recall: float
    micro_f1: float
    tp: list = field(default_factory=list)   # per-label counts
    fp: list = field(default_factory=list)
    fn: list = field(default_factory=list)
    modality_label_freq: list = None         # C x M row-stochastic, optional

    def to_dict(self):
        d = {"acc": self.acc, "precision": self.precision, "recall": self.recall,
             "micro_f1": self.micro_f1, "tp": self.tp, "fp": self.fp, "fn": self.fn}
        if self.modality_label_freq is not None:
            d["modality_label_freq"] = self.modality_label_freq
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def compute_metrics(y, y_hat):
    """MetricsReport from two {0,1} matrices of identical (N, C) shape."""
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.shape != y_hat.shape or y.ndim != 2:
        raise InputError(f"label matrices must share an (N, C) shape, got {y.shape} vs {y_hat.shape}")
    if not np.all((y == 0) | (y == 1)) or not np.all((y_hat == 0) | (y_hat == 1)):
        raise InputError("label matrices must be 0/1")

    tp = ((y == 1) & (y_hat == 1)).sum(axis=0)
    fp = ((y == 0) & (y_hat == 1)).sum(axis=0)
    fn = ((y == 1) & (y_hat == 0)).sum(axis=0)

    tp_total, fp_total, fn_total = tp.sum(), fp.sum(), fn.sum()
    precision = tp_total / (tp_total + fp_total) if tp_total + fp_total > 0 else 0.0
    recall = tp_total / (tp_total + fn_total) if tp_total + fn_total > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    inter = ((y == 1) & (y_hat == 1)).sum(axis=1)
    union = ((y == 1) | (y_hat == 1)).sum(axis=1)
    jaccard = np.where(union > 0, inter / np.maximum(union, 1), 1.0)

    return MetricsReport(acc=float(jaccard.mean()), precision=float(precision),
                         recall=float(recall), micro_f1=float(f1),
                         tp=tp.tolist(), fp=fp.tolist(), fn=fn.tolist())


def correlation_matrix(argmax_records, n_modalities=3):
    """Empirical distribution of each label's selected modality.

    argmax_records: (N, C) int array of per-sample per-label argmax modality
    indices.  Returns a (C, M) row-stochastic matrix.
    """
    records = np.asarray(argmax_records)
    if records.size == 0:
        raise InputError("no argmax records to correlate")
    if records.ndim != 2:
        raise InputError("argmax records must be an (N, C) matrix")
    n, c = records.shape
    freq = np.zeros((c, n_modalities))
    for m in range(n_modalities):
        freq[:, m] = (records == m).sum(axis=0)
    return freq / n


def format_table(rows, headers):
    """Aligned-column text table from a list of row lists."""
    cells = [[str(h) for h in headers]] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for r_i, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        if r_i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def metrics_table(report):
    return format_table([[report.acc, report.precision, report.recall, report.micro_f1]],
                        headers=["Acc", "P", "R", "Micro-F1"])


def write_correlation_csv(freq, path, labels=None, modalities=("t", "v", "a")):
    """CSV of the C x M correlation matrix for external heat-mapping."""
    freq = np.asarray(freq)
    labels = labels or [f"label_{j}" for j in range(freq.shape[0])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + list(modalities))
        for name, row in zip(labels, freq):
            writer.writerow([name] + [f"{v:.6f}" for v in row])
