import csv
import json

import numpy as np
import pytest

from ratingbench import harness as H
from ratingbench import models as M
from ratingbench.harness import cli, runner, search

from conftest import synthetic_movielens


@pytest.fixture(scope="module")
def raw_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("raw")
    ratings, movies = synthetic_movielens(n_users=40, n_items=30, n_ratings=1200, seed=4)
    (root / "ratings.dat").write_bytes(ratings.encode("latin-1"))
    (root / "movies.dat").write_bytes(movies.encode("latin-1"))
    return root


@pytest.fixture(scope="module")
def prepared_dir(raw_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("prep")
    H.prepare("movielens", raw_dir / "ratings.dat", raw_dir / "movies.dat", out)
    return out


def make_config(prepared_dir, tmp_path, **sections):
    raw = {"name": "t", "output_dir": str(tmp_path), "data": {"prepared_dir": str(prepared_dir)},
           "eval": {"test_sample": 60}}
    for key, value in sections.items():
        if isinstance(value, dict):
            raw.setdefault(key, {}).update(value)
        else:
            raw[key] = value
    return H.ExperimentConfig.from_dict(raw)


SMALL_TFMLP = {"kind": "tfmlp", "embed_dim": 4, "hidden": [8], "layers": 1, "heads": 1}


# ---------------------------------------------------------------------------
# config


def test_config_defaults_round_trip():
    config = H.ExperimentConfig()
    again = H.ExperimentConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again == config


@pytest.mark.parametrize("raw,match", [
    ({"nope": 1}, "unknown config keys"),
    ({"model": {"depth": 3}}, "unknown keys in 'model'"),
    ({"predictor": "oracle"}, "predictor"),
    ({"model": {"kind": "mf", "head": "classification"}}, "regression head"),
    ({"data": {"train_fraction": 1.0}}, "train_fraction"),
    ({"curve": {"fractions": [0.5, 0.2]}}, "ascending"),
    ({"curve": {"fractions": [0.0, 1.0]}}, r"\(0, 1\]"),
    ({"llm": {"fallback": "zero"}}, "fallback"),
    ({"model": "tfmlp"}, "mapping"),
])
def test_config_validation(raw, match):
    with pytest.raises(H.ConfigError, match=match):
        H.ExperimentConfig.from_dict(raw)


def test_overrides_and_file_formats(tmp_path):
    (tmp_path / "a.yaml").write_text("name: x\nmodel:\n  kind: mlp\n  hidden: [16, 8]\n")
    config = H.load_config(tmp_path / "a.yaml", ["model.embed_dim=12", "train.lr=0.01", "train.epochs=null"])
    assert config.model.kind == "mlp" and config.model.hidden == (16, 8)
    assert config.model.embed_dim == 12 and config.train.lr == 0.01 and config.train.epochs is None
    (tmp_path / "a.json").write_text(json.dumps({"name": "y", "heuristic": "user"}))
    assert H.load_config(tmp_path / "a.json").heuristic == "user"
    with pytest.raises(H.ConfigError):
        H.apply_overrides({}, ["no-equals-sign"])
    with pytest.raises(FileNotFoundError):
        H.load_config(tmp_path / "missing.yaml")


# ---------------------------------------------------------------------------
# prepare


def test_prepare_outputs_and_stats(prepared_dir):
    for name in ("interactions.jsonl", "catalog.jsonl", "split.json", "stats.json",
                 "title_vocab.json", "attribute_vocab.json", "item_vocab.json", "user_vocab.json"):
        assert (prepared_dir / name).exists(), name
    stats = json.loads((prepared_dir / "stats.json").read_text())
    manifest = json.loads((prepared_dir / "split.json").read_text())
    assert stats["n_train"] + stats["n_test"] == stats["n_interactions"] == 1200
    assert manifest["n_train"] == 1080
    table = H.format_stats(stats)
    assert "1,080" in table and "(120)" in table


def test_prepare_is_deterministic(raw_dir, prepared_dir, tmp_path):
    H.prepare("movielens", raw_dir / "ratings.dat", raw_dir / "movies.dat", tmp_path)
    for path in prepared_dir.iterdir():
        if path.name != "split.json":  # the manifest records the source paths
            assert (tmp_path / path.name).read_bytes() == path.read_bytes(), path.name
    a = json.loads((prepared_dir / "split.json").read_text())
    b = json.loads((tmp_path / "split.json").read_text())
    assert a["split_hash"] == b["split_hash"] and a["interactions_hash"] == b["interactions_hash"]


def test_prepare_subsample_keeps_whole_users(raw_dir, tmp_path):
    stats = H.prepare("movielens", raw_dir / "ratings.dat", raw_dir / "movies.dat", tmp_path,
                      subsample_users=10, subsample_seed=1)
    assert stats["n_users"] == 10


def test_cli_prepare_missing_movies_names_path(raw_dir, tmp_path, capsys):
    code = cli.main(["prepare", "movielens", "--ratings", str(raw_dir / "ratings.dat"),
                     "--meta", str(tmp_path / "movies.dat"), "--out", str(tmp_path / "o")])
    assert code == 1 and str(tmp_path / "movies.dat") in capsys.readouterr().err


def test_cli_prepare_prints_table(raw_dir, tmp_path, capsys):
    assert cli.main(["prepare", "movielens", str(raw_dir), "--out", str(tmp_path)]) == 0
    assert "#users" in capsys.readouterr().out


def test_load_prepared_rejects_other_fraction(prepared_dir, tmp_path):
    config = make_config(prepared_dir, tmp_path, data={"train_fraction": 0.8})
    with pytest.raises(H.ConfigError, match="train_fraction"):
        H.load_prepared(config)


# ---------------------------------------------------------------------------
# run


def test_run_heuristic_report_embeds_config(prepared_dir, tmp_path):
    config = make_config(prepared_dir, tmp_path, predictor="heuristic", heuristic="global")
    outcome = H.run_experiment(config)
    assert outcome.complete and outcome.report.auc == 0.5 and outcome.report.n == 60
    report = json.loads((tmp_path / "t" / "report.json").read_text())
    assert report["status"] == "complete" and report["config"] == config.to_dict()
    # the embedded config alone reproduces the metrics
    rerun = H.run_experiment(H.ExperimentConfig.from_dict(report["config"]), out_dir=tmp_path / "again")
    assert rerun.report.to_dict() == outcome.report.to_dict()
    rows = list(csv.DictReader(open(tmp_path / "t" / "report.csv")))
    assert rows[0]["status"] == "complete" and float(rows[0]["auc"]) == 0.5


def test_run_heuristic_matches_direct_computation(prepared_dir, tmp_path):
    config = make_config(prepared_dir, tmp_path, predictor="heuristic", heuristic="item")
    prepared = H.load_prepared(config)
    stats = M.fit_heuristics(prepared.split.train)
    preds = [stats.item_mean(ex.item_id) for ex in prepared.test_sample]
    labels = [ex.label for ex in prepared.test_sample]
    expected = float(np.sqrt(np.mean((np.clip(preds, 1, 5) - np.array(labels)) ** 2)))
    assert H.run_experiment(config, prepared).report.rmse == pytest.approx(expected, abs=1e-12)


def test_run_llm_mock(prepared_dir, tmp_path):
    config = make_config(prepared_dir, tmp_path, predictor="llm", llm={"shots": 3, "mock": "history_mean"})
    outcome = H.run_experiment(config)
    assert outcome.complete and outcome.report.n_parse_failures == 0 and outcome.report.n == 60
    lines = (tmp_path / "t" / "transcript.jsonl").read_text().splitlines()
    assert len(lines) == 60 and "Example 1:" in json.loads(lines[0])["prompt"]


def test_run_supervised_writes_curve_and_checkpoint(prepared_dir, tmp_path):
    config = make_config(prepared_dir, tmp_path, model=SMALL_TFMLP, train={"steps": 20, "batch_size": 32,
                                                                           "eval_every": 10})
    outcome = H.run_experiment(config)
    assert outcome.complete and len(outcome.curve) == 2
    loaded = M.load_model(tmp_path / "t" / "model.ckpt")
    prepared = H.load_prepared(config)
    data = prepared.encode(prepared.test_sample, config.data.max_history)
    np.testing.assert_allclose(loaded.predict(data), outcome.model.predict(data))
    assert (tmp_path / "t" / "curve.csv").read_text().startswith("step,examples_seen")


def test_run_divergence_gives_error_report(prepared_dir, tmp_path, monkeypatch):
    curve = M.TrainCurve()
    curve.append(M.CurvePoint(5, 160, 1.3, 1.1, 0.6))

    def diverge(*args, **kwargs):
        raise M.TrainingDivergence("non-finite loss at step 6", curve, 6)

    monkeypatch.setattr(runner.M, "train", diverge)
    config = make_config(prepared_dir, tmp_path, model={"kind": "mf", "embed_dim": 2})
    outcome = H.run_experiment(config)
    assert outcome.status == "diverged"
    report = json.loads((tmp_path / "t" / "report.json").read_text())
    assert report["status"] == "diverged" and report["last_curve_point"]["step"] == 5
    args = ["run", "--set", f"data.prepared_dir={prepared_dir}", "--set", "eval.test_sample=60",
            "--out", str(tmp_path / "cli")]
    assert cli.main(args) == 1


def test_cli_run_exit_codes(prepared_dir, tmp_path, capsys):
    base = ["run", "--set", f"data.prepared_dir={prepared_dir}", "--set", "predictor=llm",
            "--out", str(tmp_path)]
    assert cli.main(base) == 0
    assert "parse_failures=0" in capsys.readouterr().out
    assert cli.main(base + ["--set", "llm.fallback=never"]) == 2
    assert cli.main(["run", "--set", f"data.prepared_dir={tmp_path / 'none'}"]) == 1


# ---------------------------------------------------------------------------
# search


def test_search_space_parsing_and_validity():
    space = H.SearchSpace.for_kind("tfmlp")
    base = H.ExperimentConfig.from_dict({"model": {"kind": "tfmlp"}})
    rng = np.random.default_rng(0)
    for _ in range(50):
        params, config = space.sample(rng, base)
        width = config.model.embed_dim * (1 if config.model.aggregation == "add" else 4)
        assert width % config.model.heads == 0
        assert 3e-4 <= config.train.lr <= 3e-3
    for bad in ({}, {"lr": {"normal": [0, 1]}}, {"depth": {"choice": [1]}}, {"lr": {"uniform": [1, 0]}},
                {"lr": {"loguniform": [0, 1]}}, {"embed_dim": {"choice": []}}):
        with pytest.raises(H.ConfigError):
            H.SearchSpace.from_dict(bad)


def test_search_single_trial_and_determinism(prepared_dir, tmp_path):
    config = make_config(prepared_dir, tmp_path, model=SMALL_TFMLP,
                         search={"budget_steps": 5, "budget_epochs": None,
                                 "space": {"lr": {"loguniform": [1e-3, 1e-2]}, "embed_dim": {"choice": [2, 4]}}})
    one = H.run_search(config, n_trials=1, seed=3)
    assert one.best_index == 0 and len(one.trials) == 1
    assert one.best_config.train.lr == one.trials[0].params["train.lr"]
    a = H.run_search(config, n_trials=3, seed=3)
    b = H.run_search(config, n_trials=3, seed=3)
    assert [t.row() for t in a.trials] == [t.row() for t in b.trials]
    assert a.trials[0].params == one.trials[0].params
    assert a.best.val_rmse == min(t.val_rmse for t in a.trials)
    files = a.write(tmp_path / "s")
    assert len(list(csv.DictReader(open(files["trials"])))) == 3
    assert H.load_config(files["best_config"]) == a.best_config


def test_search_never_touches_test(prepared_dir, tmp_path, monkeypatch):
    config = make_config(prepared_dir, tmp_path, model={"kind": "mf", "embed_dim": 2},
                         search={"budget_steps": 3, "budget_epochs": None})
    prepared = H.load_prepared(config)
    n_train = len(prepared.train_examples)
    seen = []
    real = search.fit_and_score

    def spy(cfg, prep, train_examples, eval_examples, curve_examples=None):
        seen.append((train_examples, eval_examples, curve_examples))
        return real(cfg, prep, train_examples, eval_examples, curve_examples)

    monkeypatch.setattr(search, "fit_and_score", spy)
    H.run_search(config, prepared, n_trials=2)
    for fit, val, curve_examples in seen:
        assert curve_examples is None
        assert all(ex.order < n_train for ex in list(fit) + list(val))
        assert max(ex.order for ex in fit) < min(ex.order for ex in val)
        assert len(val) == round(0.05 * n_train)


# ---------------------------------------------------------------------------
# curve


def test_curve_rows_and_training_prefix(prepared_dir, tmp_path):
    config = make_config(prepared_dir, tmp_path, model={"kind": "mf", "embed_dim": 2},
                         train={"epochs": 1.0, "batch_size": 32})
    result = H.run_curve(config, [0.1, 0.5, 1.0])
    assert [p.fraction for p in result.points] == [0.1, 0.5, 1.0]
    n = len(H.load_prepared(config).train_examples)
    assert [p.n_train for p in result.points] == [round(f * n) for f in (0.1, 0.5, 1.0)]
    assert [p.steps for p in result.points] == [int(np.ceil(round(f * n) / 32)) for f in (0.1, 0.5, 1.0)]
    files = result.write(tmp_path / "c")
    assert len(list(csv.DictReader(open(files["fraction_curve"])))) == 3
    assert (tmp_path / "c" / "step_curve_1.csv").exists()


def test_constant_predictor_curve_is_flat(prepared_dir, tmp_path):
    config = make_config(prepared_dir, tmp_path, predictor="heuristic", heuristic="global")
    result = H.run_curve(config, [0.01, 0.1, 1.0])
    assert [p.auc for p in result.points] == [0.5, 0.5, 0.5]


def test_curve_rejects_bad_fractions(prepared_dir, tmp_path, capsys):
    config = make_config(prepared_dir, tmp_path)
    with pytest.raises(H.ConfigError):
        H.run_curve(config, [0.0, 0.5])
    code = cli.main(["curve", "--set", f"data.prepared_dir={prepared_dir}", "--fractions", "0.5,-1"])
    assert code == 2 and "fractions" in capsys.readouterr().err
