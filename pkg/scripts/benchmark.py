"""End-to-end MovieLens benchmark: heuristics, tuned MF, tuned Transformer-MLP,
the head ablation and the data-efficiency curve. Writes summary.json.

    python scripts/benchmark.py data/ml-1m --out runs/ml1m-benchmark
    python scripts/benchmark.py data/ml-100k-proxy --out runs/proxy --mf-trials 10 --tfmlp-trials 5
"""

from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path

from ratingbench.harness import load_config, load_prepared, run_curve
from ratingbench.harness.protocols import head_ablation, heuristic_table, prepare_cached, search_then_test

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("raw_dir", type=Path, help="directory with ratings.dat and movies.dat")
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--mf-trials", type=int, default=30)
    parser.add_argument("--tfmlp-trials", type=int, default=20)
    parser.add_argument("--fractions", default="0.01,0.05,0.2,1.0")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        help="extra override applied to both model configs")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    prepared_dir = args.out / "prepared"
    prepare_cached("movielens", args.raw_dir / "ratings.dat", args.raw_dir / "movies.dat", prepared_dir,
                   train_fraction=0.9, title_min_count=2)
    overrides = [f"data.prepared_dir={prepared_dir}", *args.overrides]
    mf_config = load_config(CONFIGS / "ml1m_mf.yaml", overrides)
    tf_config = load_config(CONFIGS / "ml1m_tfmlp.yaml", overrides)
    prepared = load_prepared(tf_config)
    summary, timings = {}, {}

    def timed(name, fn):
        start = time.perf_counter()
        value = fn()
        timings[name] = round(time.perf_counter() - start, 1)
        logging.info("%s done in %.1fs", name, timings[name])
        return value

    summary["heuristics"] = {k: r.to_dict() for k, r in timed("heuristics", lambda: heuristic_table(prepared)).items()}
    mf = timed("mf", lambda: search_then_test(mf_config, prepared, args.mf_trials))
    summary["mf"] = {"test": mf.test.to_dict(), "config": mf.config.to_dict(), "best_trial": mf.search.best.row()}
    tf = timed("tfmlp", lambda: search_then_test(tf_config, prepared, args.tfmlp_trials))
    summary["tfmlp"] = {"test": tf.test.to_dict(), "config": tf.config.to_dict(), "best_trial": tf.search.best.row()}
    ablation = timed("ablation", lambda: head_ablation(tf.config, prepared))
    summary["head_ablation"] = {k: r.to_dict() for k, r in ablation.items()}
    fractions = [float(f) for f in args.fractions.split(",")]
    curve = timed("curve", lambda: run_curve(tf.config, fractions, prepared))
    curve.write(args.out / "curve")
    summary["curve"] = [p.__dict__ for p in curve.points]
    summary["seconds"] = timings

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for row in ("mf", "tfmlp"):
        t = summary[row]["test"]
        print(f"{row:<8} rmse={t['rmse']:.4f} mae={t['mae']:.4f} auc={t['auc']:.4f}")
    for head, r in ablation.items():
        print(f"{head:<15} rmse={r.rmse:.4f} auc={r.auc:.4f}")
    for p in curve.points:
        print(f"fraction {p.fraction:g}: rmse={p.rmse:.4f} auc={p.auc:.4f}")


if __name__ == "__main__":
    main()
