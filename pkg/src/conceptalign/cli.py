"""Command-line entry point (``conceptalign`` / ``python -m conceptalign``)."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataio
from .autoencoder import binarize, encode, save_model
from .evalkit import ModelCache, TargetSplit
from .exceptions import ConfigError, DataError
from .gasearch import evolve, write_checkpoint
from .harness import (
    depth_sweep,
    load_config,
    method_comparison,
    prepare_domains,
    run_scenario,
)

EXIT_OK, EXIT_METHOD, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario config file")
    common.add_argument("--seed", type=int, help="run only this seed")
    common.add_argument("--out", help="output path (CSV or directory)")
    common.add_argument("--cache-dir", help="directory for trained stacks")
    common.add_argument("--depth", type=int, help="override stack depth")
    common.add_argument("--methods", help="comma-separated method list")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="conceptalign",
        description="Concept-level domain adaptation with stacked de-noising "
                    "auto-encoders and genetic mapping search.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare-data", parents=[common],
                   help="write balanced source/target splits as .npz")
    sub.add_parser("train", parents=[common],
                   help="train source, target and joint stacks")
    sub.add_parser("align", parents=[common],
                   help="search the target-to-source mapping")
    sub.add_parser("evaluate", parents=[common],
                   help="evaluate methods for the configured seeds")
    sub.add_parser("scenario", parents=[common],
                   help="run a full scenario")
    sweep = sub.add_parser("depth-sweep", parents=[common],
                           help="adjustment degree and accuracy per depth")
    sweep.add_argument("--depths", default="1,2,3,4,5",
                       help="comma-separated depths")
    sub.add_parser("compare", parents=[common],
                   help="compare joint, separate and concatenated methods")
    return parser


def _config(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.depth is not None:
        changes["depth"] = args.depth
    if args.methods:
        changes["methods"] = tuple(m.strip() for m in args.methods.split(",")
                                   if m.strip())
    if args.cache_dir:
        changes["cache_dir"] = args.cache_dir
    if args.out and args.command in ("evaluate", "scenario", "depth-sweep",
                                      "compare"):
        changes["output"] = args.out
    return replace(cfg, **changes) if changes else cfg


def _out_dir(args, default):
    path = Path(args.out or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_prepare(cfg, args):
    out = _out_dir(args, "data")
    for seed in cfg.seeds:
        parts = zip(("source_train", "target_train", "target_eval"),
                    prepare_domains(cfg, seed))
        for name, ds in parts:
            dataio.save_dataset(ds, out / f"{name}_seed{seed}.npz")
    return EXIT_OK


def cmd_train(cfg, args):
    out = _out_dir(args, "models")
    cache = ModelCache(cfg.cache_dir)
    for seed in cfg.seeds:
        source, target, _ = prepare_domains(cfg, seed)
        stacks = {
            "source": source.X,
            "target": target.X,
            "joint": np.vstack([source.X, target.X]),
        }
        for name, X in stacks.items():
            model = cache.get(X, cfg.sdae, cfg.depth, seed)
            save_model(model, out / f"{name}_seed{seed}_depth{cfg.depth}.sdae")
    return EXIT_OK


def cmd_align(cfg, args):
    out = _out_dir(args, "alignment")
    cache = ModelCache(cfg.cache_dir)
    for seed in cfg.seeds:
        source, target, target_eval = prepare_domains(cfg, seed)
        split = TargetSplit.make(target, target_eval, cfg.search_fraction,
                                 seed, cfg.transductive)
        m_s = cache.get(source.X, cfg.sdae, cfg.depth, seed)
        m_t = cache.get(target.X, cfg.sdae, cfg.depth, seed)
        ctx = split.context(binarize(encode(m_s, source.X)), source.y,
                            binarize(encode(m_t, split.X)))
        result = evolve(ctx, replace(cfg.ga, seed=seed))
        write_checkpoint(result, out / f"seed{seed}")
        print(f"seed={seed} search_fitness={result.best_fitness:.4f} "
              f"report_accuracy={result.report_accuracy:.4f} "
              f"generations={result.generations_run}")
    return EXIT_OK


def _report(record):
    for r in record.reports:
        adj = "" if r.adjustment_degree is None else \
            f" adjustment={r.adjustment_degree:.1f}%"
        depth = "" if r.depth is None else f" depth={r.depth}"
        print(f"{r.scenario} {r.method} seed={r.seed}{depth} "
              f"accuracy={r.accuracy:.4f}{adj}")
    for method, seed, depth, err in record.failures:
        print(f"FAILED {method} seed={seed} depth={depth}: {err}",
              file=sys.stderr)
    return EXIT_OK if record.ok else EXIT_METHOD


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "prepare-data":
            return cmd_prepare(cfg, args)
        if args.command == "train":
            return cmd_train(cfg, args)
        if args.command == "align":
            return cmd_align(cfg, args)
        if args.command in ("evaluate", "scenario"):
            return _report(run_scenario(cfg))
        if args.command == "depth-sweep":
            depths = [int(d) for d in args.depths.split(",") if d.strip()]
            return _report(depth_sweep(cfg, depths))
        if args.command == "compare":
            return _report(method_comparison(cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
