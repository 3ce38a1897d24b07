"""Command line entry point: ``ratingbench {prepare,run,search,curve}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..dataset import DatasetFormatError
from .config import ConfigError, ExperimentConfig, apply_overrides, load_config, validate_fractions
from .curve import run_curve
from .pipeline import format_stats, prepare
from .runner import run_experiment
from .search import run_search

RAW_NAMES = {"movielens": ("ratings.dat", "movies.dat"), "amazon": ("Books_5.json.gz", "meta_Books.json.gz")}


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="YAML or JSON experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. --set model.embed_dim=32 (repeatable)")
    p.add_argument("--out", help="output directory (default: <output_dir>/<name>)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratingbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse raw files into a prepared dataset directory")
    p.add_argument("kind", choices=sorted(RAW_NAMES))
    p.add_argument("raw_dir", nargs="?", help="directory holding the raw files under their usual names")
    p.add_argument("--ratings", help="ratings file (MovieLens ratings.dat or Amazon reviews JSON lines)")
    p.add_argument("--meta", help="item file (MovieLens movies.dat or Amazon metadata JSON lines)")
    p.add_argument("--out", required=True)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--title-min-count", type=int, default=2)
    p.add_argument("--subsample-users", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("run", help="train and evaluate one predictor")
    _config_args(p)

    p = sub.add_parser("search", help="random hyperparameter search on the validation tail")
    _config_args(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("curve", help="data-efficiency curve over training fractions")
    _config_args(p)
    p.add_argument("--fractions", help="comma separated, ascending, in (0, 1]")
    return parser


def _load(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig.from_dict(apply_overrides({}, args.overrides))
    return load_config(args.config, args.overrides)


def _out_dir(args, config: ExperimentConfig, suffix: str = "") -> Path:
    return Path(args.out) if args.out else Path(config.output_dir) / f"{config.name}{suffix}"


def cmd_prepare(args) -> int:
    primary, meta = args.ratings, args.meta
    if args.raw_dir:
        names = RAW_NAMES[args.kind]
        primary = primary or str(Path(args.raw_dir) / names[0])
        meta = meta or str(Path(args.raw_dir) / names[1])
    if not primary or not meta:
        raise ConfigError("give a raw directory or both --ratings and --meta")
    stats = prepare(args.kind, primary, meta, args.out, args.train_fraction, args.title_min_count,
                    args.subsample_users, args.seed)
    print(format_stats(stats))
    print(f"wrote prepared dataset to {args.out}")
    return 0


def cmd_run(args) -> int:
    config = _load(args)
    outcome = run_experiment(config, out_dir=_out_dir(args, config))
    if outcome.report is not None:
        r = outcome.report
        auc = "n/a" if r.auc is None else f"{r.auc:.4f}"
        print(f"{config.name}: rmse={r.rmse:.4f} mae={r.mae:.4f} auc={auc} n={r.n} "
              f"parse_failures={r.n_parse_failures}")
    if not outcome.complete:
        print(f"{config.name}: {outcome.status}: {outcome.error}", file=sys.stderr)
    print(f"report: {outcome.files['report']}")
    return 0 if outcome.complete else 1


def cmd_search(args) -> int:
    config = _load(args)
    result = run_search(config, n_trials=args.trials, seed=args.seed)
    files = result.write(_out_dir(args, config, "-search"))
    for t in result.ranked()[:5]:
        print(f"trial {t.index:3d} val_rmse={t.val_rmse:.4f} {json.dumps(t.params, sort_keys=True)}")
    print(f"best trial {result.best.index}; config: {files['best_config']}")
    return 0


def cmd_curve(args) -> int:
    config = _load(args)
    fractions = None
    if args.fractions:
        try:
            fractions = [float(f) for f in args.fractions.split(",")]
        except ValueError:
            raise ConfigError(f"cannot parse fractions {args.fractions!r}") from None
        validate_fractions(fractions)
    result = run_curve(config, fractions)
    files = result.write(_out_dir(args, config, "-curve"))
    print("fraction,rmse,auc")
    for p in result.points:
        print(f"{p.fraction:g},{p.rmse:.4f},{'' if p.auc is None else f'{p.auc:.4f}'}")
    print(f"curve: {files['fraction_curve']}")
    return 0


COMMANDS = {"prepare": cmd_prepare, "run": cmd_run, "search": cmd_search, "curve": cmd_curve}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
