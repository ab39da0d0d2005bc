"""Command-line entry point.

Subcommands:
  run                --config <path> --out <dir>
  partition-preview  --config <path>
  compare            --runs <dir>... --threshold <acc> [--out <csv>]

Exit codes: 0 success, 1 config error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .errors import ConfigError, FedSimError
from .federation import build_partition, load_source, run_federation, TRAIN_RATIO
from .data import split_train_test
from .reporting import (
    compare_runs,
    emit_metrics,
    make_manifest,
    parse_config,
    run_dir,
)


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    out = run_dir(args.out, cfg)
    started = time.time()
    records = run_federation(cfg)
    manifest = make_manifest(cfg, out, started, time.time())
    emit_metrics(records, manifest, out)
    last = records[-1]
    print(f"{cfg.aggregator.strategy}/{cfg.aggregator.variant}: "
          f"{len(records)} rounds, final test acc "
          f"{last.global_test_accuracy:.4f} -> {out}")
    return 0


def _cmd_partition_preview(args) -> int:
    cfg = parse_config(args.config)
    data = load_source(cfg)
    train, _ = split_train_test(data, TRAIN_RATIO, cfg.seed)
    partition = build_partition(cfg, train)
    print(f"partition={cfg.partition} clients={cfg.num_clients} "
          f"train_samples={train.n}")
    for cid, idx in enumerate(partition.shards):
        hist = np.bincount(train.labels[idx], minlength=train.num_classes)
        print(f"client {cid}: n={len(idx)} classes=" +
              " ".join(str(int(h)) for h in hist))
    return 0


def _cmd_compare(args) -> int:
    rows = compare_runs(args.runs, args.threshold, args.out)
    print("strategy,variant,final_test_acc,best_test_acc,rounds_to_threshold")
    for row in rows:
        print(f"{row['strategy']},{row['variant']},"
              f"{row['final_test_acc']:.6f},{row['best_test_acc']:.6f},"
              f"{row['rounds_to_threshold']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one federation experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_prev = sub.add_parser("partition-preview",
                            help="print per-client class histograms")
    p_prev.add_argument("--config", required=True)
    p_prev.set_defaults(func=_cmd_partition_preview)

    p_cmp = sub.add_parser("compare", help="summarize finished runs")
    p_cmp.add_argument("--runs", nargs="+", required=True)
    p_cmp.add_argument("--threshold", type=float, required=True)
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FedSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
