"""Bagged CART tree ensemble, built from first principles.

Shared by the URL, obfuscation and suspicious-package classifiers.
Training is fully reproducible: each tree derives its RNG from
seed + tree index, so parallel construction cannot change output, and
the text model format round-trips bit-exactly (float.hex thresholds).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = "v1"


class TrainingError(ValueError):
    pass


@dataclass
class TreeNode:
    feature: int = -1             # -1 marks a leaf
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    counts: tuple[int, ...] = ()


@dataclass
class TreeEnsembleModel:
    trees: list[list[TreeNode]]
    feature_schema: list[str]
    classes: list[int]
    seed: int
    n_trees: int
    medians: list[float]
    imputed_features: list[str] = field(default_factory=list)
    raw_importances: list[float] = field(default_factory=list)

    # -- scoring -----------------------------------------------------------
    def predict_proba(self, vector) -> list[float]:
        x = [self.medians[i] if _is_nan(v) else float(v)
             for i, v in enumerate(vector)]
        if len(x) != len(self.feature_schema):
            raise ValueError(
                f"expected {len(self.feature_schema)} features, got {len(x)}")
        acc = [0.0] * len(self.classes)
        for tree in self.trees:
            node = tree[0]
            while node.feature != -1:
                node = tree[node.left] if x[node.feature] <= node.threshold \
                    else tree[node.right]
            total = sum(node.counts)
            for i, c in enumerate(node.counts):
                acc[i] += c / total
        return [a / len(self.trees) for a in acc]

    def predict_one(self, vector) -> tuple[int, float]:
        """(label, positive-class score). The positive class is the
        largest label; the 0.5 threshold decides for binary problems."""
        proba = self.predict_proba(vector)
        score = proba[-1]
        if len(self.classes) == 2:
            label = self.classes[1] if score >= 0.5 else self.classes[0]
        else:
            label = self.classes[max(range(len(proba)),
                                     key=proba.__getitem__)]
        return label, score

    def importances(self) -> list[tuple[str, float]]:
        total = sum(self.raw_importances)
        if total <= 0:
            normalized = [0.0] * len(self.feature_schema)
        else:
            normalized = [v / total for v in self.raw_importances]
        ranked = sorted(zip(self.feature_schema, normalized),
                        key=lambda kv: -kv[1])
        return ranked


def _is_nan(v) -> bool:
    try:
        return math.isnan(float(v))
    except (TypeError, ValueError):
        return False


@dataclass
class TrainParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    seed: int = 0


def train(rows: list[tuple[list[float], int]],
          params: TrainParams | None = None,
          feature_schema: list[str] | None = None) -> TreeEnsembleModel:
    params = params or TrainParams()
    if not rows:
        raise TrainingError("no training rows")
    X = np.array([r[0] for r in rows], dtype=np.float64)
    labels = [int(r[1]) for r in rows]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise TrainingError("training data contains a single class")
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.array([class_index[label] for label in labels], dtype=np.int64)
    n_samples, n_features = X.shape
    if feature_schema is None:
        feature_schema = [f"f{i}" for i in range(n_features)]
    if len(feature_schema) != n_features:
        raise TrainingError("feature schema arity mismatch")

    imputed: list[str] = []
    medians: list[float] = []
    for j in range(n_features):
        col = X[:, j]
        mask = np.isnan(col)
        median = float(np.nanmedian(col)) if not mask.all() else 0.0
        medians.append(median)
        if mask.any():
            col[mask] = median
            imputed.append(feature_schema[j])

    k = len(classes)
    m_features = max(1, int(math.sqrt(n_features)))
    trees = []
    raw_importances = np.zeros(n_features)
    for t in range(params.n_trees):
        rng = np.random.RandomState(params.seed + t)
        idx = rng.randint(0, n_samples, size=n_samples)
        nodes: list[TreeNode] = []
        _build(X, y, idx, k, m_features, rng, params, nodes, 0,
               raw_importances, n_samples)
        trees.append(nodes)

    return TreeEnsembleModel(
        trees=trees, feature_schema=list(feature_schema), classes=classes,
        seed=params.seed, n_trees=params.n_trees, medians=medians,
        imputed_features=imputed,
        raw_importances=[float(v) for v in raw_importances])


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p * p).sum())


def _build(X, y, idx, k, m_features, rng, params, nodes, depth,
           importances, n_total) -> int:
    node_id = len(nodes)
    nodes.append(TreeNode())
    ys = y[idx]
    counts = np.bincount(ys, minlength=k)
    node_gini = _gini(counts)
    n = len(idx)
    if node_gini == 0.0 or n < 2 * params.min_leaf or n < 2 or (
            params.max_depth is not None and depth >= params.max_depth):
        nodes[node_id] = TreeNode(counts=tuple(int(c) for c in counts))
        return node_id

    feats = rng.choice(X.shape[1], size=m_features, replace=False)
    best_feat = -1
    best_threshold = 0.0
    best_weighted = node_gini - 1e-12
    for f in feats:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = ys[order]
        boundary = np.nonzero(sv[1:] != sv[:-1])[0]
        if boundary.size == 0:
            continue
        onehot = np.zeros((n, k))
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        nl = boundary + 1
        nr = n - nl
        ok = (nl >= params.min_leaf) & (nr >= params.min_leaf)
        if not ok.any():
            continue
        nl, nr, boundary = nl[ok], nr[ok], boundary[ok]
        left_counts = cum[boundary]
        right_counts = cum[-1] - left_counts
        gini_l = 1.0 - ((left_counts / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((right_counts / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        j = int(np.argmin(weighted))
        if weighted[j] < best_weighted:
            best_weighted = float(weighted[j])
            best_feat = int(f)
            pos = int(boundary[j])
            best_threshold = float((sv[pos] + sv[pos + 1]) / 2.0)

    if best_feat < 0:
        nodes[node_id] = TreeNode(counts=tuple(int(c) for c in counts))
        return node_id

    importances[best_feat] += (n / n_total) * (node_gini - best_weighted)
    mask = X[idx, best_feat] <= best_threshold
    left_id = _build(X, y, idx[mask], k, m_features, rng, params, nodes,
                     depth + 1, importances, n_total)
    right_id = _build(X, y, idx[~mask], k, m_features, rng, params, nodes,
                      depth + 1, importances, n_total)
    nodes[node_id] = TreeNode(feature=best_feat, threshold=best_threshold,
                              left=left_id, right=right_id)
    return node_id


# -- serialization -------------------------------------------------------------

def save(model: TreeEnsembleModel, path: str | Path) -> None:
    lines = [f"ensemble {FORMAT_VERSION} {model.n_trees} "
             f"{len(model.feature_schema)} {model.seed}"]
    lines.append("classes " + " ".join(str(c) for c in model.classes))
    lines.append("features " + " ".join(model.feature_schema))
    lines.append("medians " + " ".join(float(m).hex()
                                       for m in model.medians))
    lines.append("imputed " + " ".join(model.imputed_features))
    lines.append("importances " + " ".join(float(v).hex()
                                           for v in model.raw_importances))
    for i, tree in enumerate(model.trees):
        lines.append(f"tree {i} {len(tree)}")
        for node in tree:
            if node.feature == -1:
                lines.append("l " + " ".join(str(c) for c in node.counts))
            else:
                lines.append(f"s {node.feature} {node.threshold.hex()} "
                             f"{node.left} {node.right}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path: str | Path) -> TreeEnsembleModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split()
    if header[:2] != ["ensemble", FORMAT_VERSION]:
        raise ValueError(f"unsupported model format: {lines[0]!r}")
    n_trees, n_features, seed = (int(header[2]), int(header[3]),
                                 int(header[4]))
    classes = [int(c) for c in lines[1].split()[1:]]
    feature_schema = lines[2].split()[1:]
    medians = [float.fromhex(h) for h in lines[3].split()[1:]]
    imputed = lines[4].split()[1:]
    raw_importances = [float.fromhex(h) for h in lines[5].split()[1:]]
    trees: list[list[TreeNode]] = []
    i = 6
    while i < len(lines) and lines[i] != "end":
        _, _, count = lines[i].split()
        i += 1
        nodes: list[TreeNode] = []
        for _ in range(int(count)):
            parts = lines[i].split()
            i += 1
            if parts[0] == "l":
                nodes.append(TreeNode(
                    counts=tuple(int(c) for c in parts[1:])))
            else:
                nodes.append(TreeNode(feature=int(parts[1]),
                                      threshold=float.fromhex(parts[2]),
                                      left=int(parts[3]),
                                      right=int(parts[4])))
        trees.append(nodes)
    if len(feature_schema) != n_features or len(trees) != n_trees:
        raise ValueError("model file inconsistent with header")
    return TreeEnsembleModel(trees=trees, feature_schema=feature_schema,
                             classes=classes, seed=seed, n_trees=n_trees,
                             medians=medians, imputed_features=imputed,
                             raw_importances=raw_importances)


# -- evaluation helpers ----------------------------------------------------------

def kfold_f1(rows: list[tuple[list[float], int]], folds: int = 5,
             params: TrainParams | None = None) -> float:
    """Mean F1 of the positive (largest) class over k folds."""
    params = params or TrainParams()
    rng = np.random.RandomState(params.seed)
    order = rng.permutation(len(rows))
    scores = []
    for fold in range(folds):
        test_idx = set(order[fold::folds].tolist())
        train_rows = [rows[i] for i in range(len(rows))
                      if i not in test_idx]
        test_rows = [rows[i] for i in sorted(test_idx)]
        model = train(train_rows, params)
        positive = model.classes[-1]
        tp = fp = fn = 0
        for vec, label in test_rows:
            pred, _ = model.predict_one(vec)
            if pred == positive and label == positive:
                tp += 1
            elif pred == positive:
                fp += 1
            elif label == positive:
                fn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        scores.append(f1)
    return sum(scores) / len(scores)


def holdout_accuracy(rows: list[tuple[list[float], int]],
                     params: TrainParams | None = None,
                     test_fraction: float = 0.3) -> float:
    params = params or TrainParams()
    rng = np.random.RandomState(params.seed + 7919)
    order = rng.permutation(len(rows))
    cut = max(1, int(len(rows) * test_fraction))
    test_rows = [rows[i] for i in order[:cut]]
    train_rows = [rows[i] for i in order[cut:]]
    model = train(train_rows, params)
    correct = sum(1 for vec, label in test_rows
                  if model.predict_one(vec)[0] == label)
    return correct / len(test_rows)
