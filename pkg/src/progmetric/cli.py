"""Command-line front door.

Subcommands: gen-data, train, eval, tune-demo, report.  All numeric output
goes to files; a short human summary goes to standard output.  Exit status
is 0 only when every declared output was written.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import synthetic
from .config import ConfigError, RunConfig, load_config
from .evaluation import evaluate, metrics_csv_lines, pca_apply, pca_reduce
from .model import forward
from .trainer import (
    Checkpoint,
    TRAIN_MODES,
    load_checkpoint,
    run_fixed,
    run_pla,
    save_checkpoint,
)
from .tuning import run_tuning, trace_csv_lines


def _write_lines(path, lines):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    return cfg


def cmd_gen_data(args):
    cfg = _load_run_config(args)
    import dataclasses
    spec = dataclasses.replace(cfg.data, seed=cfg.seed)
    dataset = synthetic.generate(spec)
    rng = np.random.default_rng(cfg.seed + 1)
    dataset = synthetic.split(dataset, cfg.split.query_per_identity, rng,
                              open_set=cfg.split.open_set,
                              test_fraction=cfg.split.test_fraction)
    out = Path(args.dataset or Path(cfg.out_dir) / "dataset.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    synthetic.save(dataset, out)
    print(f"wrote {len(dataset.labels)} samples "
          f"({len(np.unique(dataset.labels))} identities) to {out}")
    return 0


def cmd_train(args):
    cfg = _load_run_config(args)
    dataset = synthetic.load(args.dataset)
    features, labels = synthetic.train_partition(dataset)
    import dataclasses
    model_cfg = dataclasses.replace(cfg.model, d_in=features.shape[1])
    out = Path(cfg.out_dir)
    budget = args.epochs or cfg.epochs or cfg.pla.max_epochs
    if args.mode == "pla":
        result = run_pla(features, labels, cfg.pla, model_cfg, cfg.optimizer,
                         cfg.seed)
    else:
        result = run_fixed(features, labels, args.mode, cfg.fixed_w, budget,
                           model_cfg, cfg.optimizer, cfg.batch, cfg.seed)
    report = result.report
    _write_lines(out / "report.csv", report.epoch_csv_lines())
    if args.mode == "pla":
        _write_lines(out / "explorations.csv", report.exploration_csv_lines())
        _write_lines(out / "chosen.csv",
                     ["round,lambda,margin,k,p"]
                     + [f"{i + 1},{w.lam:.17g},{w.margin:.17g},{w.k},{w.p}"
                        for i, w in enumerate(report.chosen)])
    save_checkpoint(out / "checkpoint.bin",
                    Checkpoint.take(result.best_params,
                                    _fresh_adam(result.best_params),
                                    report.total_epochs))
    print(f"mode={args.mode} epochs={report.total_epochs} "
          f"best_loss={report.best_loss:.6g} -> {out}")
    return 0


def _fresh_adam(params):
    from .model import AdamState
    return AdamState.zeros_like(params)


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    dataset = synthetic.load(args.dataset)
    qg = synthetic.query_gallery(dataset)
    q_emb, _ = forward(ckpt.params, qg.query_embeddings)
    g_emb, _ = forward(ckpt.params, qg.gallery_embeddings)
    if args.target_dim is not None:
        pca = pca_reduce(np.vstack([g_emb, q_emb]), args.target_dim)
        q_emb = pca_apply(pca, q_emb)
        g_emb = pca_apply(pca, g_emb)
    qg.query_embeddings = q_emb
    qg.gallery_embeddings = g_emb
    metrics = evaluate(qg)
    out = Path(args.out or "metrics.csv")
    _write_lines(out, metrics_csv_lines(metrics))
    print(f"rank1={metrics.rank1:.4f} map={metrics.map:.4f} "
          f"excluded_queries={metrics.excluded_queries} -> {out}")
    return 0


def cmd_tune_demo(args):
    trace = run_tuning(args.seed if args.seed is not None else 0,
                       rounds=args.rounds, pool_size=args.pool,
                       n_initial=args.initial)
    out = Path(args.out or "tune_trace.csv")
    _write_lines(out, trace_csv_lines(trace))
    print(f"evaluations={len(trace)} best={trace[-1].best_so_far:.6g} -> {out}")
    return 0


def cmd_report(args):
    path = Path(args.report)
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    phases = {}
    for r in rows:
        phases[r["phase"]] = phases.get(r["phase"], 0) + 1
    print(f"{path}: {len(rows)} epochs " +
          " ".join(f"{k}={v}" for k, v in sorted(phases.items())))
    exploit = [r for r in rows if r["phase"] in ("exploit", "train")]
    if exploit:
        last = exploit[-1]
        print(f"final: lambda={last['lambda']} margin={last['margin']} "
              f"k={last['k']} p={last['p']} mean_total={last['mean_total']}")
        best = min(float(r["mean_total"]) for r in exploit)
        print(f"lowest epoch mean total: {best:.6g}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="progmetric",
        description="Progressive metric-learning experiments on synthetic identity clusters")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate and save a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--dataset", help="explicit dataset file path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model in one of the supported modes")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=TRAIN_MODES, default="pla")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--epochs", type=int, help="budget for fixed modes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="retrieval metrics for a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--target-dim", type=int, dest="target_dim")
    p.add_argument("--out", help="metrics file path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune-demo",
                       help="optimizer self-test on a built-in quadratic objective")
    p.add_argument("--seed", type=int)
    p.add_argument("--rounds", type=int, default=30)
    p.add_argument("--pool", type=int, default=256)
    p.add_argument("--initial", type=int, default=8)
    p.add_argument("--out", help="trace file path")
    p.set_defaults(func=cmd_tune_demo)

    p = sub.add_parser("report", help="summarize a run report CSV")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
