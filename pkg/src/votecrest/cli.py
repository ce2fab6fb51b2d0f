"""Command-line harness.

Subcommands mirror the pipeline stages: ``train``, ``attack`` (single
models), ``eval-ensemble``, ``select``, ``diversity``, and ``report`` (the
full pipeline, which also renders figures and the manifest). Stages are
deterministic and reuse models already saved under the output directory, so
they can run in any order.

Exit codes: 0 success, 1 configuration error, 2 runtime failure (partial
outputs may exist).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

from . import diversity as dv
from .config import PRESETS, load_config
from .errors import ConfigurationError, VotecrestError
from .experiment import ExperimentRun, run_experiment


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment JSON document")
    common.add_argument("--out", default=None, help="output directory "
                        "(default: config output_dir or runs/<name>)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the experiment seed")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for per-example attacks")
    common.add_argument("--preset", choices=PRESETS, default="toy",
                        help="defaults for unset attack parameters")

    parser = argparse.ArgumentParser(
        prog="votecrest",
        description="Majority-vote ensembles of adversarially trained "
                    "classifiers: training, attacks, selection, diversity.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train and save the model pool")
    sub.add_parser("attack", parents=[common], help="attack each single model")
    sub.add_parser("eval-ensemble", parents=[common],
                   help="attack the configured ensembles")
    sub.add_parser("select", parents=[common],
                   help="score candidate subsets on an adversarial pool")
    sub.add_parser("diversity", parents=[common],
                   help="pairwise perturbation-cosine matrix")
    sub.add_parser("report", parents=[common],
                   help="full pipeline: all tables, figures, and manifest")
    return parser


def _resolve_out(config, args) -> str:
    if args.out:
        return args.out
    if config.output_dir:
        return config.output_dir
    return os.path.join("runs", config.name)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config, preset=args.preset)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = _resolve_out(config, args)
    try:
        if args.command == "report":
            report = run_experiment(config, out, threads=args.threads)
            print(f"report written under {out}")
            if report.selected_subset is not None:
                print(f"selected subset: {report.selected_subset}")
            return 0

        run = ExperimentRun(config, out, threads=args.threads)
        if args.command == "train":
            for rep in range(config.repeats):
                run.pool(rep)
            print(f"trained {len(config.models)} models x {config.repeats} repeats "
                  f"under {os.path.join(out, 'models')}")
        elif args.command == "attack":
            rows = run.singles_rows()
            path = run.write_accuracy_csv("singles.csv", rows, key="model")
            print(f"wrote {path}")
        elif args.command == "eval-ensemble":
            if not config.ensembles:
                raise ConfigurationError("config declares no ensembles")
            rows = run.ensemble_rows()
            path = run.write_accuracy_csv("ensembles.csv", rows, key="ensemble")
            best = run.best_attack_rows(rows)
            best_path = os.path.join(out, "reports", "best_attack.csv")
            with open(best_path, "w", newline="") as fh:
                writer = csv.DictWriter(
                    fh, fieldnames=["ensemble", "best_attack", "accuracy_mean"])
                writer.writeheader()
                writer.writerows(best)
            print(f"wrote {path} and {best_path}")
        elif args.command == "select":
            if config.selection is None:
                raise ConfigurationError("config declares no selection block")
            table, chosen, pool_rows = run.selection_results()
            path = os.path.join(out, "reports", "selection.csv")
            table.to_csv(path)
            pool_path = os.path.join(out, "pools", "pool.csv")
            with open(pool_path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=["point_index", "source_model",
                                                        "success", "linf_norm"])
                writer.writeheader()
                writer.writerows(pool_rows)
            print(f"wrote {path}; selected subset {chosen}")
        elif args.command == "diversity":
            if config.diversity is None:
                raise ConfigurationError("config declares no diversity block")
            names = [m.name for m in config.models]
            for attack_name, matrix in run.diversity_results().items():
                path = os.path.join(out, "reports", f"diversity_{attack_name}.csv")
                dv.write_cosine_csv(matrix, names, path)
                print(f"wrote {path}")
        return 0
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (VotecrestError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
