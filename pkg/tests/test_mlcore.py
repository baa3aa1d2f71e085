from __future__ import annotations

import math
import random

import pytest

from npmsift import mlcore
from npmsift.mlcore import TrainParams, TrainingError, train


def separable_rows():
    return [([0.0, 1.0], 0), ([0.5, 0.8], 0),
            ([10.0, -1.0], 1), ([11.0, -0.5], 1)]


def blob_rows(n=120, seed=5):
    rng = random.Random(seed)
    rows = []
    for _ in range(n // 2):
        rows.append(([rng.gauss(0, 1), rng.gauss(0, 1)], 0))
        rows.append(([rng.gauss(4, 1), rng.gauss(4, 1)], 1))
    return rows


def test_separable_training_accuracy():
    rows = separable_rows()
    model = train(rows, TrainParams(n_trees=25, seed=3))
    assert all(model.predict_one(v)[0] == y for v, y in rows)


def test_single_class_is_error():
    with pytest.raises(TrainingError):
        train([([1.0], 0), ([2.0], 0)])


def test_nan_imputed_and_flagged():
    rows = [([1.0, float("nan")], 0), ([2.0, 5.0], 0),
            ([9.0, 6.0], 1), ([8.0, 7.0], 1)]
    model = train(rows, TrainParams(n_trees=10, seed=1),
                  feature_schema=["a", "b"])
    assert model.imputed_features == ["b"]
    label, _ = model.predict_one([9.0, float("nan")])
    assert label in (0, 1)


def test_deterministic_model_files(tmp_path):
    rows = blob_rows()
    p1, p2 = tmp_path / "m1.txt", tmp_path / "m2.txt"
    mlcore.save(train(rows, TrainParams(n_trees=20, seed=42)), p1)
    mlcore.save(train(rows, TrainParams(n_trees=20, seed=42)), p2)
    assert p1.read_bytes() == p2.read_bytes()
    mlcore.save(train(rows, TrainParams(n_trees=20, seed=43)), p2)
    assert p1.read_bytes() != p2.read_bytes()


def test_save_load_round_trip(tmp_path):
    rows = blob_rows()
    model = train(rows, TrainParams(n_trees=15, seed=9))
    path = tmp_path / "model.txt"
    mlcore.save(model, path)
    loaded = mlcore.load(path)
    for vec, _ in rows[:20]:
        assert loaded.predict_proba(vec) == model.predict_proba(vec)
    again = tmp_path / "again.txt"
    mlcore.save(loaded, again)
    assert again.read_bytes() == path.read_bytes()


def test_scores_bounded_and_sum_to_one():
    model = train(blob_rows(), TrainParams(n_trees=12, seed=2))
    for vec in ([0.0, 0.0], [4.0, 4.0], [2.0, 2.0], [-3.0, 9.0]):
        proba = model.predict_proba(vec)
        assert all(0.0 <= p <= 1.0 for p in proba)
        assert math.isclose(sum(proba), 1.0, abs_tol=1e-9)
        _, score = model.predict_one(vec)
        assert 0.0 <= score <= 1.0


def test_prediction_is_pure():
    model = train(blob_rows(), TrainParams(n_trees=12, seed=2))
    assert model.predict_proba([1.1, 2.2]) == model.predict_proba([1.1, 2.2])


def test_importances_nonnegative_sum_to_one():
    model = train(blob_rows(), TrainParams(n_trees=12, seed=2))
    ranked = model.importances()
    values = [v for _, v in ranked]
    assert all(v >= 0 for v in values)
    assert math.isclose(sum(values), 1.0, abs_tol=1e-9)


def test_label_shuffle_drops_to_prior():
    rows = blob_rows(n=200, seed=8)
    acc = mlcore.holdout_accuracy(rows, TrainParams(n_trees=30, seed=4))
    assert acc >= 0.9
    rng = random.Random(99)
    labels = [y for _, y in rows]
    rng.shuffle(labels)
    shuffled = [(v, y) for (v, _), y in zip(rows, labels)]
    shuffled_acc = mlcore.holdout_accuracy(shuffled,
                                           TrainParams(n_trees=30, seed=4))
    prior = max(labels.count(0), labels.count(1)) / len(labels)
    assert abs(shuffled_acc - prior) <= 0.1


def test_kfold_f1_on_separable_blobs():
    f1 = mlcore.kfold_f1(blob_rows(n=150, seed=13), folds=5,
                         params=TrainParams(n_trees=20, seed=1))
    assert f1 >= 0.9


def test_max_depth_and_min_leaf_respected():
    rows = blob_rows(n=80, seed=3)
    stump_model = train(rows, TrainParams(n_trees=5, max_depth=1, seed=0))
    for tree in stump_model.trees:
        assert len(tree) <= 3
    big_leaf = train(rows, TrainParams(n_trees=5, min_leaf=20, seed=0))
    for tree in big_leaf.trees:
        for node in tree:
            if node.feature == -1:
                assert sum(node.counts) >= 20
