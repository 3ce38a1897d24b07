import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ratingbench import metrics as mt

labels_st = st.lists(st.sampled_from([1.0, 2.0, 3.0, 4.0, 5.0]), min_size=2, max_size=60)


def test_rmse_mae_reference_values():
    assert mt.rmse([3], [3]) == 0.0 and mt.mae([3], [3]) == 0.0
    assert mt.rmse([1, 5], [3, 3]) == 2.0 and mt.mae([1, 5], [3, 3]) == 2.0
    with pytest.raises(ValueError):
        mt.rmse([], [])


def test_rmse_matches_naive_two_pass():
    rng = np.random.default_rng(3)
    p, y = rng.uniform(1, 5, 100), rng.integers(1, 6, 100).astype(float)
    total = 0.0
    for a, b in zip(p, y):
        total += (a - b) ** 2
    assert mt.rmse(p, y) == pytest.approx(math.sqrt(total / 100), abs=1e-12)


def test_auc_reference_values():
    assert mt.auc_roc([0.1, 0.2, 0.9, 0.8], [1, 3, 5, 4]) == 1.0
    assert mt.auc_roc([3.0] * 5, [1, 2, 4, 5, 4]) == 0.5
    # label exactly 4 counts as positive
    assert mt.auc_roc([1.0, 2.0], [3.0, 4.0]) == 1.0
    with pytest.raises(mt.UndefinedMetricError):
        mt.auc_roc([1, 2, 3], [4, 5, 4])


def test_auc_matches_bruteforce_on_random_pairs():
    rng = np.random.default_rng(11)
    p = np.round(rng.uniform(1, 5, 200), 1)  # rounding forces ties
    y = rng.integers(1, 6, 200).astype(float)
    assert mt.auc_roc(p, y) == pytest.approx(mt.auc_bruteforce(p, y), abs=1e-12)


def test_average_ranks():
    np.testing.assert_array_equal(mt.average_ranks([10, 20, 20, 5]), [2, 3.5, 3.5, 1])


@settings(max_examples=200, deadline=None)
@given(labels_st, st.data())
def test_auc_monotone_invariance_and_complement(labels, data):
    y = np.array(labels)
    assume((y >= 4).any() and (y < 4).any())
    p = np.array(data.draw(st.lists(st.integers(-50, 50), min_size=len(y), max_size=len(y)))) / 10
    auc = mt.auc_roc(p, y)
    assert 0.0 <= auc <= 1.0
    assert mt.auc_roc(np.exp(p) * 3 + 1, y) == pytest.approx(auc, abs=1e-12)
    if len(set(p.tolist())) == len(p):
        assert auc + mt.auc_roc(-p, y) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(1, 5)), min_size=1, max_size=50))
def test_rmse_at_least_mae(pairs):
    p, y = zip(*pairs)
    # equality up to round-off happens when all absolute errors coincide
    assert mt.rmse(p, y) >= mt.mae(p, y) * (1 - 1e-12) >= 0.0


def test_report_serialisation():
    report = mt.evaluate([1, 2, 4, 5], [1, 3, 4, 5], n_parse_failures=1, n_fallbacks=1)
    as_json = json.loads(report.to_json())
    assert as_json["n"] == 4 and as_json["n_parse_failures"] == 1
    assert mt.MetricsReport.csv_header().startswith("rmse,mae,auc")
    assert report.csv_row().count(",") == 5


def test_single_class_slice_records_error():
    report = mt.evaluate([4.0, 4.5], [4, 5])
    assert report.auc is None and "undefined" in report.auc_error


def test_accumulator_merge_equals_single_pass():
    rng = np.random.default_rng(0)
    p, y = rng.uniform(1, 5, 50), rng.integers(1, 6, 50).astype(float)
    a, b = mt.MetricsAccumulator(), mt.MetricsAccumulator()
    a.add(p[:20], y[:20])
    b.add(p[20:], y[20:])
    b.n_fallbacks = 2
    merged = a.merge(b).report()
    direct = mt.evaluate(p, y)
    assert (merged.rmse, merged.mae, merged.auc) == (direct.rmse, direct.mae, direct.auc)
    assert merged.n_fallbacks == 2
