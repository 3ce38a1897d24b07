import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ratingbench import features as ft
from ratingbench import metrics as mt
from ratingbench import models as M
from ratingbench.dataset import Interaction
from ratingbench.kernel import Embedding

from conftest import numeric_grad, rel_error


def sizes_for(p):
    return M.VocabSizes.from_vocabs(p["vocabs"], p["train_data"].max_history)


# ---------------------------------------------------------------------------
# heuristics


def test_fit_heuristics_reference():
    xs = [Interaction("a", "i", 1, 1), Interaction("b", "i", 5, 2)]
    assert M.fit_heuristics(xs).global_mean == 3.0
    xs = [Interaction("u", "j", r, t) for t, r in enumerate([4, 4, 5])]
    assert M.fit_heuristics(xs).item_mean("j") == pytest.approx(13 / 3)
    with pytest.raises(ValueError):
        M.fit_heuristics([])


def test_heuristic_fallbacks_and_bruteforce(synthetic_pipeline):
    train = synthetic_pipeline["train"]
    stats = M.fit_heuristics(train)
    assert M.predict_heuristic(stats, "item", "u", "never-seen") == stats.global_mean
    assert M.predict_heuristic(stats, "user", "never-seen", "i") == stats.global_mean
    for user in {ex.user_id for ex in train}:
        ratings = [ex.label for ex in train if ex.user_id == user]
        assert stats.user_mean(user) == sum(ratings) / len(ratings)
    for item in {ex.item_id for ex in train}:
        ratings = [ex.label for ex in train if ex.item_id == item]
        assert stats.item_mean(item) == sum(ratings) / len(ratings)
    with pytest.raises(ValueError):
        M.predict_heuristic(stats, "median", "u", "i")


def test_global_heuristic_auc_is_half(synthetic_pipeline):
    stats = M.fit_heuristics(synthetic_pipeline["train"])
    test = synthetic_pipeline["test"]
    preds = M.predict_examples(stats, "global", test)
    assert mt.auc_roc(preds, [ex.label for ex in test]) == 0.5
    for kind in M.HEURISTIC_KINDS:
        p = M.predict_examples(stats, kind, test)
        assert np.all((1 <= p) & (p <= 5))


# ---------------------------------------------------------------------------
# heads


def test_head_decode():
    assert M.head_decode("classification", np.array([[0.1, 0.2, 0.9, 0.3, 0.1]]))[0] == 3.0
    np.testing.assert_allclose(M.head_decode("regression", np.array([[6.2], [3.7], [-1.0]])), [5.0, 3.7, 1.0])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (6, 5), elements=st.integers(-80, 80).map(lambda k: k / 4)),
       st.integers(-400, 400).map(lambda k: k / 4))
def test_argmax_invariant_to_shift(logits, c):
    # quarter steps keep logits + c exact, so no new ties appear from rounding
    np.testing.assert_array_equal(M.head_decode("classification", logits),
                                  M.head_decode("classification", logits + c))


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.floats(1, 5))
def test_clamping_never_increases_error(pred, label):
    clamped = M.head_decode("regression", np.array([pred]))[0]
    assert abs(clamped - label) <= abs(pred - label)


# ---------------------------------------------------------------------------
# forward passes and analytic gradients

CONFIGS = [
    M.ModelConfig(kind="mf", embed_dim=3, l2=0.1),
    M.ModelConfig(kind="mlp", embed_dim=3, hidden=(4,), l2=0.05),
    M.ModelConfig(kind="mlp", head="classification", embed_dim=3, hidden=(4, 3)),
    M.ModelConfig(kind="tfmlp", embed_dim=4, hidden=(5,), layers=1, heads=2, aggregation="add", l2=0.1),
    M.ModelConfig(kind="tfmlp", embed_dim=2, hidden=(3,), layers=2, heads=2, aggregation="concat"),
    M.ModelConfig(kind="tfmlp", head="classification", embed_dim=2, hidden=(), layers=1, heads=1),
]


@pytest.mark.parametrize("config", CONFIGS, ids=lambda c: f"{c.kind}-{c.head}-{c.aggregation}")
def test_model_gradients_match_finite_differences(config, synthetic_pipeline):
    data = synthetic_pipeline["test_data"]
    batch = data.subset(np.arange(min(12, len(data))))
    model = M.build_model(config, sizes_for(synthetic_pipeline), 3.4)
    rng = np.random.default_rng(0)
    for p in model.parameters().values():  # move biases off their zero init
        p.value += rng.normal(scale=0.1, size=p.shape)
    model.eval()

    def loss():
        raw = model.forward(batch)
        value, _ = model.loss(raw, batch.label)
        reg = 0.0
        for layer in model.modules():
            if isinstance(layer, Embedding) and layer.l2:
                rows = layer.table.value[layer._ids.reshape(-1)]
                reg += layer.l2 / len(batch) * float(np.sum(rows ** 2))
        return value + reg

    model.zero_grad()
    raw = model.forward(batch)
    _, d_raw = model.loss(raw, batch.label)
    model.backward(d_raw)
    for name, p in model.parameters().items():
        flat_idx = rng.choice(p.value.size, size=min(6, p.value.size), replace=False)
        num = np.zeros(len(flat_idx))
        flat = p.value.reshape(-1)
        for j, k in enumerate(flat_idx):
            old = flat[k]
            flat[k] = old + 1e-5
            up = loss()
            flat[k] = old - 1e-5
            down = loss()
            flat[k] = old
            num[j] = (up - down) / 2e-5
        assert rel_error(p.grad.reshape(-1)[flat_idx], num) < 1e-4, name


def test_tfmlp_handles_empty_history_and_shapes(synthetic_pipeline):
    data = synthetic_pipeline["train_data"]
    assert data.hist_len[0] == 0
    for agg, width in (("add", 4), ("concat", 16)):
        model = M.build_model(M.ModelConfig(kind="tfmlp", embed_dim=4, aggregation=agg, hidden=(8,)),
                              sizes_for(synthetic_pipeline), 3.0)
        assert model.step_width == width
        out = model.forward(data.subset(np.arange(5)))
        assert out.shape == (5, 1) and np.all(np.isfinite(out))


def test_mf_zero_parameters_predict_offset(synthetic_pipeline):
    model = M.build_model(M.ModelConfig(kind="mf", embed_dim=4), sizes_for(synthetic_pipeline), 3.0)
    for p in model.parameters().values():
        p.value[...] = 0.0
    model.offset.value[...] = 3.0
    np.testing.assert_array_equal(model.predict(synthetic_pipeline["test_data"]), 3.0)
    with pytest.raises(ValueError):
        M.build_model(M.ModelConfig(kind="mf", head="classification"), sizes_for(synthetic_pipeline))


def test_mlp_zero_weights_give_constant_bias(synthetic_pipeline):
    model = M.build_model(M.ModelConfig(kind="mlp", embed_dim=4, hidden=(8,)), sizes_for(synthetic_pipeline), 3.0)
    for name, p in model.parameters().items():
        if name.startswith("tower"):
            p.value[...] = 0.0
    model.tower.out.bias.value[...] = 2.5
    np.testing.assert_array_equal(model.predict(synthetic_pipeline["test_data"]), 2.5)


def _toy_data(users, items, labels):
    from ratingbench.dataset import ItemMeta, RatingExample
    catalog = {i: ItemMeta(i, f"T{i}") for i in sorted(set(items))}
    examples = [RatingExample(u, catalog[i], float(r), k, (), k)
                for k, (u, i, r) in enumerate(zip(users, items, labels))]
    vocabs = ft.build_vocabs(examples, catalog, 1)
    table = ft.ItemTable.build(catalog, vocabs)
    return ft.encode_dataset(examples, vocabs, table), M.VocabSizes.from_vocabs(vocabs)


def test_mf_fits_rank_one_matrix():
    # closed-form oracle: R = u v^T is exactly representable
    u, v = np.array([1.0, 2.0]), np.array([1.5, 2.0])
    target = np.outer(u, v)
    users, items, labels = zip(*[(f"u{a}", f"i{b}", target[a, b]) for a in range(2) for b in range(2)])
    data, sizes = _toy_data(users, items, labels)
    model = M.build_model(M.ModelConfig(kind="mf", embed_dim=2, seed=1), sizes, float(np.mean(labels)))
    M.train(model, data, M.TrainConfig(lr=0.05, batch_size=4, steps=500))
    pred = model.predict_raw(data)[:, 0]
    assert np.max(np.abs(pred - data.label)) < 0.1


def test_one_step_decreases_batch_loss(synthetic_pipeline):
    data = synthetic_pipeline["train_data"].subset(np.arange(32))
    model = M.build_model(M.ModelConfig(kind="tfmlp", embed_dim=4, hidden=(8,)), sizes_for(synthetic_pipeline), 3.0)
    before, _ = model.loss(model.forward(data), data.label)
    M.train(model, data, M.TrainConfig(lr=1e-4, batch_size=32, steps=1))
    after, _ = model.loss(model.forward(data), data.label)
    assert after < before


@pytest.mark.parametrize("kind", ["mlp", "tfmlp"])
def test_overfit_64_examples(kind, synthetic_pipeline):
    data = synthetic_pipeline["train_data"].subset(np.arange(200, 264))
    config = M.ModelConfig(kind=kind, embed_dim=16, hidden=(64,), layers=1, heads=2)
    model = M.build_model(config, sizes_for(synthetic_pipeline), float(data.label.mean()))
    M.train(model, data, M.TrainConfig(lr=3e-3, batch_size=64, steps=2000))
    assert mt.rmse(model.predict_raw(data)[:, 0], data.label) < 0.1


def test_training_is_deterministic(synthetic_pipeline):
    def run():
        model = M.build_model(M.ModelConfig(kind="tfmlp", embed_dim=4, hidden=(8,), dropout=0.2),
                              sizes_for(synthetic_pipeline), 3.0)
        return M.train(model, synthetic_pipeline["train_data"],
                       M.TrainConfig(steps=30, batch_size=16, eval_every=10),
                       synthetic_pipeline["test_data"])
    a, b = run(), run()
    assert a.curve.to_rows() == b.curve.to_rows()
    assert [p.step for p in a.curve.points] == [10, 20, 30]


def test_training_divergence_reports_curve(synthetic_pipeline):
    model = M.build_model(M.ModelConfig(kind="mf", embed_dim=2), sizes_for(synthetic_pipeline), 3.0)
    model.offset.value[...] = np.inf
    with pytest.raises(M.TrainingDivergence) as info:
        M.train(model, synthetic_pipeline["train_data"], M.TrainConfig(steps=5))
    assert info.value.step == 1 and len(info.value.curve) == 0


def test_curve_steps_strictly_increase():
    curve = M.TrainCurve()
    curve.append(M.CurvePoint(1, 10, 1.0))
    with pytest.raises(ValueError):
        curve.append(M.CurvePoint(1, 20, 1.0))


def test_epochs_and_fraction(synthetic_pipeline):
    data = synthetic_pipeline["train_data"]
    cfg = M.TrainConfig(batch_size=10, epochs=2.0, data_fraction=0.5)
    model = M.build_model(M.ModelConfig(kind="mf", embed_dim=2), sizes_for(synthetic_pipeline), 3.0)
    result = M.train(model, data, cfg)
    assert result.steps == int(np.ceil(2 * round(0.5 * len(data)) / 10))


def test_checkpoint_round_trip(tmp_path, synthetic_pipeline):
    config = M.ModelConfig(kind="tfmlp", embed_dim=4, hidden=(8,), aggregation="concat")
    model = M.build_model(config, sizes_for(synthetic_pipeline), 3.2)
    path = tmp_path / "m.ckpt"
    model.save(path)
    assert (tmp_path / "m.ckpt.json").exists()
    loaded = M.load_model(path)
    data = synthetic_pipeline["test_data"]
    np.testing.assert_allclose(loaded.predict_raw(data), model.predict_raw(data), atol=1e-5)
