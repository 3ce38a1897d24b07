"""Heuristic baselines next to their published reference values.

    python scripts/reproduce_heuristics.py movielens data/ml-1m
    python scripts/reproduce_heuristics.py amazon data/amazon-books --subsample-users 50000
"""

from __future__ import annotations

import argparse
from pathlib import Path

from ratingbench.harness import ExperimentConfig, format_stats, load_prepared
from ratingbench.harness.cli import RAW_NAMES
from ratingbench.harness.protocols import heuristic_table, prepare_cached

REFERENCE = {  # rmse, mae, auc
    "movielens": {"global": (1.1564, 0.9758, 0.5), "item": (0.9749, 0.7778, 0.7395), "user": (1.0196, 0.7959, 0.7266)},
    "amazon": {"global": (0.9482, 0.7609, 0.5), "item": (0.9342, 0.7078, 0.6041), "user": (0.8527, 0.5502, 0.8047)},
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("kind", choices=sorted(RAW_NAMES))
    parser.add_argument("raw_dir", type=Path)
    parser.add_argument("--prepared", type=Path, help="prepared output directory (default data/prepared/<raw name>)")
    parser.add_argument("--subsample-users", type=int)
    parser.add_argument("--sample-seed", type=int, default=0)
    args = parser.parse_args()

    out = args.prepared or Path("data/prepared") / args.raw_dir.name
    primary, meta = (args.raw_dir / name for name in RAW_NAMES[args.kind])
    stats = prepare_cached(args.kind, primary, meta, out, train_fraction=0.9, title_min_count=2,
                           subsample_users=args.subsample_users, subsample_seed=0)
    print(format_stats(stats))
    config = ExperimentConfig.from_dict({"data": {"kind": args.kind, "prepared_dir": str(out)},
                                         "eval": {"sample_seed": args.sample_seed}})
    table = heuristic_table(load_prepared(config))
    print(f"\n{'heuristic':<10} {'rmse':>8} {'mae':>8} {'auc':>8}   reference rmse/mae/auc")
    for kind, report in table.items():
        ref = REFERENCE[args.kind][kind]
        print(f"{kind:<10} {report.rmse:8.4f} {report.mae:8.4f} {report.auc:8.4f}   "
              f"{ref[0]:.4f} / {ref[1]:.4f} / {ref[2]:.4f}")


if __name__ == "__main__":
    main()
