"""Random Forest classifier and stratified 10-fold cross-validation.

Trees are grown CART-style on Gini impurity: each tree sees a bootstrap
sample of the training rows and considers a random subset of features at
every node.  Numeric thresholds sit at the midpoint between adjacent sorted
unique values, zero-gain nodes become leaves, and all tie-breaks are
deterministic, so a (matrix, params, seed) triple fixes the model exactly.
Per-tree RNG streams are derived from the seed by tree index, which keeps
serial and parallel training bit-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .windowing import FeatureMatrix

NUM_CLASSES = 3
GAIN_EPS = 1e-12  # floor below which a split is treated as zero-gain


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # None => ceil(sqrt(d))
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ValidationError(f"min_leaf must be >= 1, got {self.min_leaf}")

    def resolve_mtry(self, d: int) -> int:
        mtry = self.features_per_split if self.features_per_split else math.ceil(math.sqrt(d))
        if mtry > d:
            raise ValidationError(f"features_per_split {mtry} exceeds feature count {d}")
        return mtry


@dataclass
class FitnessResult:
    accuracy: float
    fold_accuracies: list[float]
    confusion: np.ndarray
    n_rows: int
    dropped_windows: int = 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "fold_accuracies": self.fold_accuracies,
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "n_rows": self.n_rows,
            "dropped_windows": self.dropped_windows,
        }


class DecisionTree:
    """Flat-array CART tree; feature[i] == -1 marks a leaf."""

    def __init__(self):
        self.feature: np.ndarray = np.array([], dtype=int)
        self.threshold: np.ndarray = np.array([])
        self.left: np.ndarray = np.array([], dtype=int)
        self.right: np.ndarray = np.array([], dtype=int)
        self.label: np.ndarray = np.array([], dtype=int)
        self.counts: np.ndarray = np.zeros((0, NUM_CLASSES), dtype=int)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            nid = node[rows]
            go_left = X[rows, self.feature[nid]] <= self.threshold[nid]
            node[rows[go_left]] = self.left[nid[go_left]]
            node[rows[~go_left]] = self.right[nid[~go_left]]
        return self.label[node]

    def to_dict(self, node_id: int = 0) -> dict:
        if self.feature[node_id] < 0:
            return {
                "leaf": True,
                "label": int(self.label[node_id]),
                "counts": [int(c) for c in self.counts[node_id]],
            }
        return {
            "leaf": False,
            "feature": int(self.feature[node_id]),
            "threshold": float(self.threshold[node_id]),
            "left": self.to_dict(int(self.left[node_id])),
            "right": self.to_dict(int(self.right[node_id])),
        }


def _gini(counts: np.ndarray, n: int) -> float:
    p = counts / n
    return float(1.0 - np.sum(p * p))


def _best_split(
    X: np.ndarray, y: np.ndarray, feat_candidates: np.ndarray, min_leaf: int
) -> tuple[int, float, float] | None:
    """Lowest weighted child impurity over candidate features.

    Ties resolve to the first candidate feature (in drawn order) and the
    lowest threshold; returns None when no position satisfies min_leaf.
    """
    n = len(y)
    best_impurity = np.inf
    best: tuple[int, float] | None = None
    for f in feat_candidates:
        v = X[:, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        sy = y[order]
        valid = sv[:-1] < sv[1:]
        if min_leaf > 1:
            nl_all = np.arange(1, n)
            valid = valid & (nl_all >= min_leaf) & (n - nl_all >= min_leaf)
        if not valid.any():
            continue
        onehot = np.zeros((n, NUM_CLASSES))
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        total = cum[-1]
        nl = np.nonzero(valid)[0] + 1
        cl = cum[nl - 1]
        cr = total - cl
        nr = n - nl
        gl = 1.0 - np.sum((cl / nl[:, None]) ** 2, axis=1)
        gr = 1.0 - np.sum((cr / nr[:, None]) ** 2, axis=1)
        weighted = (nl * gl + nr * gr) / n
        j = int(np.argmin(weighted))
        if weighted[j] < best_impurity:
            best_impurity = float(weighted[j])
            pos = nl[j] - 1
            best = (int(f), float((sv[pos] + sv[pos + 1]) / 2.0))
    if best is None:
        return None
    return best[0], best[1], best_impurity


def _grow_tree(
    X: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator
) -> DecisionTree:
    d = X.shape[1]
    mtry = params.resolve_mtry(d)
    tree = DecisionTree()
    feature, threshold, left, right, label, counts = [], [], [], [], [], []

    def new_node(idx: np.ndarray) -> int:
        c = np.bincount(y[idx], minlength=NUM_CLASSES)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(int(np.argmax(c)))  # argmax ties resolve to the lowest class
        counts.append(c)
        return len(feature) - 1

    root_idx = np.arange(len(y))
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node_id, idx, depth = stack.pop()
        n = len(idx)
        c = counts[node_id]
        if (
            n < 2 * params.min_leaf
            or np.max(c) == n
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            continue
        cand = np.arange(d) if mtry == d else rng.choice(d, size=mtry, replace=False)
        split = _best_split(X[idx], y[idx], cand, params.min_leaf)
        if split is None:
            continue
        f, thr, child_impurity = split
        if _gini(c, n) - child_impurity <= GAIN_EPS:
            continue
        go_left = X[idx, f] <= thr
        feature[node_id] = f
        threshold[node_id] = thr
        left_id = new_node(idx[go_left])
        right_id = new_node(idx[~go_left])
        left[node_id] = left_id
        right[node_id] = right_id
        # push right first so the left subtree grows next (fixed preorder,
        # which pins the RNG consumption order)
        stack.append((right_id, idx[~go_left], depth + 1))
        stack.append((left_id, idx[go_left], depth + 1))

    tree.feature = np.array(feature, dtype=int)
    tree.threshold = np.array(threshold)
    tree.left = np.array(left, dtype=int)
    tree.right = np.array(right, dtype=int)
    tree.label = np.array(label, dtype=int)
    tree.counts = np.array(counts, dtype=int)
    return tree


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    schema: tuple[str, ...]
    params: ForestParams
    oob_accuracy: float | None = field(default=None)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise ValidationError(f"row width {X.shape} does not match schema")
        votes = np.zeros((len(X), NUM_CLASSES), dtype=int)
        for tree in self.trees:
            pred = tree.predict(X)
            votes[np.arange(len(X)), pred] += 1
        return np.argmax(votes, axis=1)  # vote ties resolve to the lowest class

    def predict(self, row: np.ndarray) -> int:
        return int(self.predict_batch(np.asarray(row, dtype=float).reshape(1, -1))[0])

    def to_json(self, path: str | Path) -> None:
        payload = {
            "schema": list(self.schema),
            "n_trees": len(self.trees),
            "seed": self.params.seed,
            "trees": [t.to_dict() for t in self.trees],
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0, tree_index])


def train(matrix: FeatureMatrix, params: ForestParams) -> ForestModel:
    """Grow the forest on bootstrap samples; identical seed, identical model."""
    X, y = matrix.X, matrix.y
    if len(np.unique(y)) < 2:
        raise ValidationError("training data contains a single class")
    n = len(y)
    trees = []
    oob_votes = np.zeros((n, NUM_CLASSES), dtype=int)
    for t in range(params.n_trees):
        rng = _tree_rng(params.seed, t)
        boot = rng.integers(0, n, size=n)
        tree = _grow_tree(X[boot], y[boot], params, rng)
        trees.append(tree)
        oob = np.setdiff1d(np.arange(n), boot)
        if len(oob):
            pred = tree.predict(X[oob])
            oob_votes[oob, pred] += 1
    covered = oob_votes.sum(axis=1) > 0
    oob_acc = None
    if covered.any():
        oob_pred = np.argmax(oob_votes[covered], axis=1)
        oob_acc = float(np.mean(oob_pred == y[covered]))
    return ForestModel(trees=trees, schema=matrix.schema, params=params, oob_accuracy=oob_acc)


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per row; class proportions preserved within one row."""
    rng = np.random.default_rng([seed, 1])
    folds = np.full(len(y), -1, dtype=int)
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        perm = rng.permutation(idx)
        folds[perm] = np.arange(len(perm)) % k
    return folds


def cv_accuracy(matrix: FeatureMatrix, params: ForestParams, k: int = 10) -> FitnessResult:
    """Stratified k-fold cross-validation; accuracy pooled over held-out rows.

    Raises ValidationError when any class has fewer than k rows (callers map
    this to fitness 0).
    """
    X, y = matrix.X, matrix.y
    classes, class_counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValidationError("cross-validation needs at least 2 classes")
    if np.min(class_counts) < k:
        raise ValidationError(
            f"every class needs >= {k} rows, got counts {dict(zip(classes.tolist(), class_counts.tolist()))}"
        )
    folds = stratified_folds(y, k, params.seed)
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=int)
    fold_accuracies = []
    for f in range(k):
        test_mask = folds == f
        train_matrix = FeatureMatrix(
            feature_set=matrix.feature_set,
            schema=matrix.schema,
            X=X[~test_mask],
            y=y[~test_mask],
        )
        model = train(train_matrix, params)
        pred = model.predict_batch(X[test_mask])
        truth = y[test_mask]
        for t_lbl, p_lbl in zip(truth, pred):
            confusion[t_lbl, p_lbl] += 1
        fold_accuracies.append(float(np.mean(pred == truth)))
    accuracy = float(np.trace(confusion) / np.sum(confusion))
    return FitnessResult(
        accuracy=accuracy,
        fold_accuracies=fold_accuracies,
        confusion=confusion,
        n_rows=len(y),
        dropped_windows=0,
    )
