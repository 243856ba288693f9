import numpy as np
import pytest

from hrvopt.errors import ValidationError
from hrvopt.forest import (
    DecisionTree,
    FitnessResult,
    ForestModel,
    ForestParams,
    cv_accuracy,
    stratified_folds,
    train,
)
from hrvopt.windowing import FeatureMatrix


def blobs(n_per_class=100, spread=0.3, seed=0, d=4, sep=4.0):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for c in range(3):
        center = np.full(d, c * sep)
        X.append(center + rng.normal(0, spread, size=(n_per_class, d)))
        y.append(np.full(n_per_class, c))
    schema = tuple(f"f{i}" for i in range(d))
    return FeatureMatrix(None, schema, np.vstack(X), np.concatenate(y))


def manual_traverse(tree: DecisionTree, row: np.ndarray) -> int:
    node = 0
    while tree.feature[node] >= 0:
        if row[tree.feature[node]] <= tree.threshold[node]:
            node = int(tree.left[node])
        else:
            node = int(tree.right[node])
    return int(tree.label[node])


class TestTrain:
    def test_single_stump_separates_clusters(self):
        rng = np.random.default_rng(1)
        x = np.concatenate([rng.normal(0, 0.5, 60), rng.normal(10, 0.5, 60)])
        y = np.concatenate([np.zeros(60, int), np.ones(60, int)])
        m = FeatureMatrix(None, ("x",), x.reshape(-1, 1), y)
        model = train(m, ForestParams(n_trees=1, max_depth=1, seed=0))
        pred = model.predict_batch(m.X)
        assert np.mean(pred == y) >= 0.9

    def test_seed_determinism_node_by_node(self):
        m = blobs(seed=2)
        p = ForestParams(n_trees=10, seed=7)
        m1 = train(m, p)
        m2 = train(m, p)
        for t1, t2 in zip(m1.trees, m2.trees):
            assert np.array_equal(t1.feature, t2.feature)
            assert np.array_equal(t1.threshold, t2.threshold)
            assert np.array_equal(t1.left, t2.left)
            assert np.array_equal(t1.right, t2.right)
            assert np.array_equal(t1.label, t2.label)

    def test_oob_accuracy_on_blobs(self):
        m = blobs(seed=3)
        model = train(m, ForestParams(n_trees=100, seed=0))
        assert model.oob_accuracy is not None
        assert model.oob_accuracy >= 0.95

    def test_single_class_rejected(self):
        m = FeatureMatrix(None, ("x",), np.arange(10.0).reshape(-1, 1), np.zeros(10, int))
        with pytest.raises(ValidationError, match="single class"):
            train(m, ForestParams(n_trees=1))

    def test_constant_feature_never_changes_predictions(self):
        m = blobs(seed=4, d=4)
        d = m.X.shape[1]
        params = ForestParams(n_trees=20, seed=5, features_per_split=d)
        base = train(m, params).predict_batch(m.X)
        X_aug = np.hstack([m.X, np.full((len(m.X), 1), 3.14)])
        m_aug = FeatureMatrix(None, m.schema + ("const",), X_aug, m.y)
        aug = train(m_aug, ForestParams(n_trees=20, seed=5, features_per_split=d + 1))
        assert np.array_equal(aug.predict_batch(X_aug), base)
        for tree in aug.trees:
            assert not np.any(tree.feature == d)  # constant column never split on

    def test_model_json_dump(self, tmp_path):
        m = blobs(n_per_class=30, seed=6)
        model = train(m, ForestParams(n_trees=3, seed=1))
        path = tmp_path / "model.json"
        model.to_json(path)
        import json

        payload = json.loads(path.read_text())
        assert payload["n_trees"] == 3
        assert len(payload["trees"]) == 3
        assert payload["schema"] == list(m.schema)


class TestPredict:
    def _leaf_tree(self, label):
        t = DecisionTree()
        t.feature = np.array([-1])
        t.threshold = np.array([0.0])
        t.left = np.array([-1])
        t.right = np.array([-1])
        t.label = np.array([label])
        t.counts = np.zeros((1, 3), dtype=int)
        return t

    def test_unanimous_vote(self):
        model = ForestModel([self._leaf_tree(2)] * 5, ("x",), ForestParams(n_trees=5))
        assert model.predict(np.array([0.0])) == 2

    def test_tie_breaks_to_lowest_class(self):
        trees = [self._leaf_tree(0)] * 50 + [self._leaf_tree(2)] * 50
        model = ForestModel(trees, ("x",), ForestParams(n_trees=100))
        assert model.predict(np.array([0.0])) == 0  # Low wins the 50/50 tie

    def test_single_tree_matches_manual_traversal(self):
        m = blobs(n_per_class=50, seed=8)
        model = train(m, ForestParams(n_trees=1, seed=3))
        tree = model.trees[0]
        for row in m.X[::7]:
            assert model.predict(row) == manual_traverse(tree, row)

    def test_schema_mismatch_rejected(self):
        m = blobs(n_per_class=30, seed=9)
        model = train(m, ForestParams(n_trees=2, seed=0))
        with pytest.raises(ValidationError, match="schema"):
            model.predict(np.zeros(7))


class TestCrossValidation:
    def test_separable_blobs_accuracy(self):
        m = blobs(n_per_class=100, seed=10)
        res = cv_accuracy(m, ForestParams(n_trees=50, seed=0))
        assert res.accuracy >= 0.95
        assert len(res.fold_accuracies) == 10
        assert res.confusion.shape == (3, 3)

    def test_accuracy_equals_confusion_trace(self):
        m = blobs(n_per_class=40, spread=2.5, seed=11)
        res = cv_accuracy(m, ForestParams(n_trees=20, seed=1))
        assert res.accuracy == pytest.approx(
            np.trace(res.confusion) / np.sum(res.confusion)
        )
        assert np.sum(res.confusion) == m.n_rows

    def test_permuted_labels_hit_chance_level(self):
        m = blobs(n_per_class=100, seed=12)
        accs = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            y_perm = rng.permutation(m.y)
            m_perm = FeatureMatrix(None, m.schema, m.X, y_perm)
            res = cv_accuracy(m_perm, ForestParams(n_trees=20, seed=seed))
            accs.append(res.accuracy)
        for a in accs:
            assert abs(a - 1.0 / 3.0) <= 0.10

    def test_small_class_rejected(self):
        X = np.arange(25.0).reshape(-1, 1)
        y = np.array([0] * 9 + [1] * 16)
        m = FeatureMatrix(None, ("x",), X, y)
        with pytest.raises(ValidationError, match=">= 10"):
            cv_accuracy(m, ForestParams(n_trees=5))

    def test_duplicated_rows_leak_to_perfect_accuracy(self):
        # 1 distinct row per class duplicated 10x: folds share duplicates, so
        # pooled accuracy hits 1.0 -- the documented leakage hazard
        base = np.array([[0.0], [5.0], [10.0]])
        X = np.repeat(base, 10, axis=0)
        y = np.repeat(np.array([0, 1, 2]), 10)
        m = FeatureMatrix(None, ("x",), X, y)
        res = cv_accuracy(m, ForestParams(n_trees=15, seed=2))
        assert res.accuracy == 1.0

    def test_stratified_fold_balance(self):
        y = np.array([0] * 40 + [1] * 53 + [2] * 27)
        folds = stratified_folds(y, 10, seed=3)
        for c in range(3):
            per_fold = np.bincount(folds[y == c], minlength=10)
            assert per_fold.max() - per_fold.min() <= 1

    def test_determinism(self):
        m = blobs(n_per_class=40, spread=1.5, seed=13)
        r1 = cv_accuracy(m, ForestParams(n_trees=10, seed=4))
        r2 = cv_accuracy(m, ForestParams(n_trees=10, seed=4))
        assert r1.accuracy == r2.accuracy
        assert np.array_equal(r1.confusion, r2.confusion)
        assert r1.fold_accuracies == r2.fold_accuracies
