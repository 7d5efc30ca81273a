"""Command-line entry point: ``gstunlearn <subcommand> [config.json] [--key value ...]``.

Subcommands
-----------
embed            dataset -> embeddings CSV
train            dataset -> model snapshot JSON plus accuracy
unlearn          run the sequential unlearning experiment, write reports
validate-bounds  bound-dominance run with alpha = 0
gen-synthetic    write the synthetic benchmark as a TU directory

Every :class:`ExperimentConfig` field can be overridden with ``--field value``;
``--seed`` may be repeated.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .bench import (
    ExperimentConfig,
    emit_report,
    load_experiment_data,
    run_bound_validation,
    run_unlearning_experiment,
)
from .classifier import LossModel
from .errors import GSTUnlearnError
from .graph import random_split, write_dataset
from .scattering import embed_dataset, write_embeddings_csv
from .synthetic import make_synthetic
from .unlearn import Unlearner

log = logging.getLogger("gstunlearn")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gstunlearn", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("config", nargs="?", help="JSON experiment config")
        p.add_argument("--seed", action="append", type=int, dest="seeds_flag",
                       help="run seed (repeatable; replaces the config's seeds)")
        p.add_argument("--no-timing", action="store_true", help="zero all wall-time columns")
        for f in dataclasses.fields(ExperimentConfig):
            if f.name in ("seeds", "timing"):
                continue
            p.add_argument(f"--{f.name}", dest=f"set_{f.name}", metavar="VALUE")
        return p

    experiment("embed", "embed a dataset and write a CSV")
    experiment("train", "train on the training split, save the model")
    experiment("unlearn", "sequential unlearning experiment")
    p = experiment("validate-bounds", "check residual bounds with alpha = 0")
    p.add_argument("--count", type=int, default=None, help="requests per seed")

    p = sub.add_parser("gen-synthetic", help="write the synthetic dataset in TU layout")
    p.add_argument("outdir")
    p.add_argument("--graphs", type=int, default=200)
    p.add_argument("--min-nodes", type=int, default=8)
    p.add_argument("--max-nodes", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args) -> ExperimentConfig:
    overrides = {
        key[4:]: value for key, value in vars(args).items()
        if key.startswith("set_") and value is not None
    }
    if args.seeds_flag:
        overrides["seeds"] = list(args.seeds_flag)
    if args.no_timing:
        overrides["timing"] = False
    return ExperimentConfig.load(args.config, overrides)


def _cmd_embed(cfg: ExperimentConfig) -> int:
    ds = load_experiment_data(cfg)
    Z, y = embed_dataset(ds, cfg.scattering)
    out = Path(cfg.output) / "embeddings.csv"
    write_embeddings_csv(out, Z, cfg.scattering, [g.graph_id for g in ds.graphs], y)
    print(f"wrote {len(Z)} x {Z.shape[1]} embeddings to {out}")
    return 0


def _cmd_train(cfg: ExperimentConfig) -> int:
    ds = load_experiment_data(cfg)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        sp = random_split(ds.n, cfg.split, seed)
        train = [ds.graphs[i] for i in sp["train"]]
        test = [ds.graphs[i] for i in sp["test"]]
        engine = Unlearner(
            train, cfg.scattering, lam=cfg.lam, alpha=cfg.alpha, epsilon=cfg.epsilon,
            delta=cfg.delta, loss=LossModel.named(cfg.loss), seed=seed,
        )
        Zt, yt = embed_dataset(test, cfg.scattering)
        acc = engine.accuracy(Zt, yt)
        for k, model in enumerate(engine.models):
            model.meta = {"classes": engine.classes.tolist(), "model": k, "config": cfg.to_dict()}
            model.save(outdir / f"model_seed{seed}_k{k}.json")
        print(f"seed {seed}: train {engine.n} graphs, test accuracy {acc:.4f}")
    return 0


def _cmd_unlearn(cfg: ExperimentConfig) -> int:
    report = run_unlearning_experiment(cfg)
    paths = emit_report(report, cfg.output, prefix="unlearn")
    s = report.summary
    print(f"retrains per seed: {s['retrain_count']['per_seed']}")
    for arm, rows in s["arms"].items():
        if rows:
            print(f"{arm}: final accuracy {rows[-1]['accuracy_mean']:.4f}, "
                  f"cumulative time {rows[-1]['cum_time_mean']:.4f}s")
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_validate(cfg: ExperimentConfig, n_requests) -> int:
    cfg = dataclasses.replace(cfg, alpha=0.0)
    report = run_bound_validation(cfg, n_requests=n_requests, dump_dir=cfg.output)
    paths = emit_report(report, cfg.output, prefix="bounds")
    s = report.summary
    print(f"{s['requests']} requests, {s['violations']} violations; "
          f"worst case >= data-dependent on {s['worst_case_at_least_data_dependent']}")
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_gen(args) -> int:
    ds = make_synthetic(args.graphs, args.min_nodes, args.max_nodes, seed=args.seed)
    root = write_dataset(ds, args.outdir)
    print(f"wrote {ds.n} graphs to {root}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-synthetic":
            return _cmd_gen(args)
        cfg = config_from_args(args)
        if args.command == "embed":
            return _cmd_embed(cfg)
        if args.command == "train":
            return _cmd_train(cfg)
        if args.command == "unlearn":
            return _cmd_unlearn(cfg)
        return _cmd_validate(cfg, args.count)
    except (GSTUnlearnError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if not isinstance(exc, AssertionError) else 2


if __name__ == "__main__":
    sys.exit(main())
