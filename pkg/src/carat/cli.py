"""Command-line entry points.

Commands: gen-data, train, eval, gradcheck, ablate, fusion-bench.  Exit
codes: 0 success, 2 configuration/file errors (with the offending field
path), 3 numeric failures.  All outputs are written atomically.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import build_config, read_config_file
from .errors import CaratError, ConfigError, FormatError, GradCheckFailure, NumericError
from .experiments import (ablation_table_text, fusion_table_text, run_ablation_table,
                          run_fusion_bench)
from .metrics import metrics_table, write_correlation_csv
from .synth import generate_dataset, load_dataset, save_dataset
from .train import Trainer, build_model, evaluate, export_embeddings, prepare_datasets
from .verify import pipeline_gradcheck


def _write_text(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2) + "\n")


def _load_cfg(args):
    flat = read_config_file(args.config) if args.config else {}
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "precision", None):
        overrides["precision"] = args.precision
    return build_config(flat, preset=args.preset, overrides=overrides)


def cmd_gen_data(args):
    cfg = _load_cfg(args)
    if args.seed is not None:
        cfg.data.seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    splits = generate_dataset(cfg.data)
    for name, dataset in splits.items():
        path = os.path.join(args.out, f"{name}.jsonl")
        save_dataset(dataset, path)
        print(f"wrote {path} ({len(dataset)} samples)")
    return 0


def cmd_train(args):
    cfg = _load_cfg(args)
    out = args.out or "run"
    os.makedirs(out, exist_ok=True)
    log_path = os.path.join(out, "metrics.jsonl")
    lines = [json.dumps({"config": cfg.to_flat()})]

    def log(record):
        lines.append(json.dumps(record))
        val = record["val"]
        print(f"epoch {record['epoch']:>3}  loss {record['train_loss']['total']:.4f}  "
              f"val f1 {val['micro_f1']:.4f}  acc {val['acc']:.4f}  ({record['seconds']}s)")

    trainer = Trainer(cfg)
    trainer.run(out_dir=out, log=log)
    _write_text(log_path, "\n".join(lines) + "\n")

    best_path = os.path.join(out, "best.ckpt")
    if os.path.exists(best_path):
        trainer.load(best_path)
    report, argmax, _ = evaluate(trainer.model, trainer.state, trainer.datasets["test"],
                                 cfg.batch_size, cfg.ablation)
    _write_json(os.path.join(out, "report.json"),
                {"config": cfg.to_flat(), "best": trainer.best, "test": report.to_dict()})
    _write_text(os.path.join(out, "report.txt"), metrics_table(report) + "\n")
    write_correlation_csv(report.modality_label_freq, os.path.join(out, "correlation.csv"))
    print(f"best val micro-F1 {trainer.best['micro_f1']:.4f} (epoch {trainer.best['epoch']})")
    print("test: " + " ".join(f"{k}={v:.4f}" for k, v in
                              [("acc", report.acc), ("P", report.precision),
                               ("R", report.recall), ("micro_f1", report.micro_f1)]))
    return 0


def cmd_eval(args):
    from .checkpoint import load_checkpoint
    arrays, meta = load_checkpoint(args.checkpoint)
    cfg = build_config(meta["config"])
    from .precision import set_mode
    set_mode(cfg.precision)
    model, state = build_model(cfg)
    for name, p in model.named_params():
        p.data = arrays[f"param.{name}"].astype(p.data.dtype)
    state.prototypes.mu = arrays["state.prototypes"].astype(state.prototypes.mu.dtype)
    state.queue.vectors = arrays["state.queue.vectors"].astype(state.queue.vectors.dtype)
    state.queue.tags = arrays["state.queue.tags"]

    dataset = load_dataset(args.data)
    report, argmax, _ = evaluate(model, state, dataset, cfg.batch_size, cfg.ablation)
    print(metrics_table(report))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "report.json"),
                    {"config": cfg.to_flat(), "test": report.to_dict()})
        _write_text(os.path.join(args.out, "report.txt"), metrics_table(report) + "\n")
        write_correlation_csv(report.modality_label_freq,
                              os.path.join(args.out, "correlation.csv"))
    if args.dump_embeddings:
        export_embeddings(model, state, dataset, args.dump_embeddings, cfg.batch_size)
        print(f"wrote embeddings to {args.dump_embeddings}")
    return 0


def cmd_gradcheck(args):
    args.preset = args.preset if args.config is None else args.preset
    if args.config is None and args.preset == "desk":
        args.preset = "tiny"
    cfg = _load_cfg(args)
    print(f"gradient check (preset geometry, rel_tol {args.rel_tol:g}):")
    report = pipeline_gradcheck(cfg, rel_tol=args.rel_tol, log=print)
    print("PASS")
    return 0


def cmd_ablate(args):
    cfg = _load_cfg(args)
    rows = run_ablation_table(cfg, log=print)
    table = ablation_table_text(rows)
    print(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_text(os.path.join(args.out, "ablation.txt"), table + "\n")
        _write_json(os.path.join(args.out, "ablation.json"),
                    {"config": cfg.to_flat(),
                     "rows": [{"variant": name, **r.to_dict()} for name, r in rows]})
    return 0


def cmd_fusion_bench(args):
    cfg = _load_cfg(args)
    rows = run_fusion_bench(cfg, log=print)
    table = fusion_table_text(rows)
    print(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_text(os.path.join(args.out, "fusion.txt"), table + "\n")
        _write_json(os.path.join(args.out, "fusion.json"),
                    {"config": cfg.to_flat(),
                     "rows": [{"fusion": kind, **r.to_dict()} for kind, r in rows]})
    return 0


def _add_common(p, precision=True):
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--preset", default="desk", choices=["desk", "paper", "tiny"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    if precision:
        p.add_argument("--precision", default=None, choices=["standard", "verify"])


def build_parser():
    parser = argparse.ArgumentParser(prog="carat",
                                     description="multi-modal multi-label emotion recognition")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic dataset files")
    _add_common(p, precision=False)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model; writes checkpoints and metric logs")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--dump-embeddings", default=None,
                   help="write latent embeddings to this TSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss term")
    _add_common(p)
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and compare all ablation variants")
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("fusion-bench", help="train and compare the three fusion baselines")
    _add_common(p)
    p.set_defaults(func=cmd_fusion_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError) as exc:
        field = getattr(exc, "field", None) or getattr(exc, "line", None)
        print(f"config error{f' [{field}]' if field else ''}: {exc}", file=sys.stderr)
        return 2
    except (NumericError, GradCheckFailure) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except CaratError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
