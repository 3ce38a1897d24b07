import io

import numpy as np
import pytest

from ratingbench import dataset as ds
from ratingbench import features as ft

GENRES = ["Action", "Comedy", "Drama", "Horror", "Sci-Fi", "Children's"]
WORDS = ["The", "Return", "of", "Night", "Star", "Love", "Dark", "City", "Blue", "Man"]


def synthetic_movielens(n_users=40, n_items=30, n_ratings=600, seed=0, noise=0.5):
    """ML-1M formatted ratings/movies text with a planted low-rank structure."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n_users, 2))
    v = rng.normal(size=(n_items, 2))
    movies = []
    for i in range(n_items):
        words = " ".join(rng.choice(WORDS, size=rng.integers(1, 4)))
        genres = "|".join(sorted(set(rng.choice(GENRES, size=rng.integers(1, 3)))))
        movies.append(f"{i + 1}::{words} ({1980 + i % 20})::{genres}")
    lines = []
    for _ in range(n_ratings):
        a, b = int(rng.integers(n_users)), int(rng.integers(n_items))
        r = int(np.clip(np.rint(3.3 + u[a] @ v[b] + noise * rng.normal()), 1, 5))
        lines.append(f"{a + 1}::{b + 1}::{r}::{int(rng.integers(10_000, 20_000))}")
    return "\n".join(lines) + "\n", "\n".join(movies) + "\n"


@pytest.fixture(scope="session")
def synthetic_raw():
    return synthetic_movielens()


@pytest.fixture(scope="session")
def synthetic_loaded(synthetic_raw):
    ratings, movies = synthetic_raw
    return ds.load_movielens(io.BytesIO(ratings.encode("latin-1")), io.BytesIO(movies.encode("latin-1")))


@pytest.fixture(scope="session")
def synthetic_pipeline(synthetic_loaded):
    inter = ds.filter_missing_metadata(synthetic_loaded.interactions, synthetic_loaded.catalog)
    split = ds.chronological_split(inter, 0.9)
    catalog = synthetic_loaded.catalog
    train = ds.build_examples(split, catalog, source="train")
    test = ds.build_examples(split, catalog, source="test")
    vocabs = ft.build_vocabs(train, catalog, min_count=2)
    table = ft.ItemTable.build(catalog, vocabs)
    return {
        "catalog": catalog, "split": split, "train": train, "test": test, "vocabs": vocabs,
        "table": table, "train_data": ft.encode_dataset(train, vocabs, table),
        "test_data": ft.encode_dataset(test, vocabs, table),
    }


def numeric_grad(f, x, eps=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. array ``x`` (mutated in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        grad[i] = (up - down) / (2 * eps)
    return grad


def rel_error(a, b, floor=1e-3):
    """max |a - b| relative to the gradient scale; ``floor`` guards structurally zero gradients
    (e.g. attention key biases) where finite differences only see round-off."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(floor, np.max(np.abs(a) + np.abs(b))))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_acceptance(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
