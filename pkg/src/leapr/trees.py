"""Decision-tree and random-forest substrate.

Impurity metrics, exhaustive split search over threshold midpoints, CART-style
growth, prediction, and mean-decrease-in-impurity importances. Routing is fixed
as ``value < threshold -> left``, ``value >= threshold -> right``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import CLASSIFICATION, REGRESSION
from .errors import ConfigError, MissingFeatureError

FORMAT_VERSION = 1


@dataclass
class ForestParams:
    n_trees: int = 500
    max_depth: int = 50
    min_leaf: int = 1
    bootstrap: bool = True
    features_per_split: int | str = "auto"  # "auto" | "all" | int
    criterion: str = "entropy"  # classification only: "entropy" | "gini"
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.criterion not in ("entropy", "gini"):
            raise ConfigError(f"unknown criterion {self.criterion!r}")


@dataclass
class Split:
    feature_id: str
    threshold: float
    impurity_decrease: float
    left_count: int
    right_count: int


@dataclass
class Node:
    train_count: int
    train_impurity: float
    feature_id: str | None = None
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    impurity_decrease: float = 0.0
    value: float = 0.0  # regression leaf mean
    counts: list[int] | None = None  # classification leaf label summary

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass
class DecisionTree:
    task: str
    classes: tuple[str, ...]
    feature_ids: list[str]
    nodes: list[Node]
    root: int = 0

    def leaf_prediction(self, node: Node):
        if self.task == REGRESSION:
            return node.value
        best = int(np.argmax(node.counts))  # argmax keeps the first max: alphabet order
        return self.classes[best]


@dataclass
class Forest:
    task: str
    classes: tuple[str, ...]
    feature_ids: list[str]
    trees: list[DecisionTree]
    params: ForestParams
    bootstrap_indices: list[np.ndarray] | None = field(default=None, repr=False)


@dataclass
class Prediction:
    value: float | None = None
    cls: str | None = None
    distribution: dict[str, float] | None = None


# ---------------------------------------------------------------------------
# impurity primitives
#
# These expressions are kept in one canonical shape (probabilities from exact
# integer counts; variance from sufficient statistics) so that any two code
# paths computing the impurity of the same label multiset agree bitwise.
# ---------------------------------------------------------------------------

def entropy_from_counts(counts: np.ndarray, total) -> np.ndarray | float:
    """Shannon entropy in bits from per-class counts; broadcasts over rows."""
    counts = np.asarray(counts, dtype=np.float64)
    p = np.where(counts > 0, counts, 1.0) / np.asarray(total, dtype=np.float64)
    terms = np.where(counts > 0, -(p * np.log2(p)), 0.0)
    return terms.sum(axis=-1)

def gini_from_counts(counts: np.ndarray, total) -> np.ndarray | float:
    counts = np.asarray(counts, dtype=np.float64)
    p = counts / np.asarray(total, dtype=np.float64)
    return 1.0 - (p * p).sum(axis=-1)

def variance_from_stats(total, sum_, sumsq):
    """Population variance from (n, sum y, sum y^2), clamped at zero."""
    mean = sum_ / total
    return np.maximum(sumsq / total - mean * mean, 0.0)


def encode_labels(labels: Sequence, task: str, classes: tuple[str, ...] = ()):
    """(codes-or-values array, class alphabet). Alphabet is sorted when inferred."""
    if task == REGRESSION:
        return np.asarray([float(y) for y in labels], dtype=np.float64), ()
    if not classes:
        classes = tuple(sorted({str(y) for y in labels}))
    index = {c: i for i, c in enumerate(classes)}
    try:
        codes = np.asarray([index[str(y)] for y in labels], dtype=np.int64)
    except KeyError as exc:
        raise ConfigError(f"label {exc.args[0]!r} not in class alphabet {classes}") from exc
    return codes, classes


def impurity(labels: Sequence, task: str) -> float:
    """Entropy in bits (classification) or population variance (regression)."""
    if len(labels) == 0:
        raise ConfigError("impurity of an empty label list is undefined")
    if task == CLASSIFICATION:
        codes, classes = encode_labels(labels, task)
        counts = np.bincount(codes, minlength=len(classes))
        return float(entropy_from_counts(counts, len(labels)))
    y = np.asarray([float(v) for v in labels], dtype=np.float64)
    return float(variance_from_stats(len(labels), y.sum(), (y * y).sum()))


def _node_impurity(codes_or_y: np.ndarray, task: str, n_classes: int, criterion: str) -> float:
    if task == CLASSIFICATION:
        counts = np.bincount(codes_or_y, minlength=n_classes)
        fn = entropy_from_counts if criterion == "entropy" else gini_from_counts
        return float(fn(counts, codes_or_y.size))
    y = codes_or_y
    return float(variance_from_stats(y.size, y.sum(), (y * y).sum()))


# ---------------------------------------------------------------------------
# split search
# ---------------------------------------------------------------------------

def _candidate_impurities_classification(sorted_codes, n_classes, boundary, n_left, n_right, criterion):
    onehot = np.zeros((sorted_codes.size, n_classes), dtype=np.float64)
    onehot[np.arange(sorted_codes.size), sorted_codes] = 1.0
    cum = np.cumsum(onehot, axis=0)  # exact: integer-valued floats
    left = cum[boundary]
    right = cum[-1] - left
    fn = entropy_from_counts if criterion == "entropy" else gini_from_counts
    return fn(left, n_left[:, None]), fn(right, n_right[:, None])


def _candidate_impurities_regression(sorted_y, boundary, n_left, n_right):
    s = np.cumsum(sorted_y)
    s2 = np.cumsum(sorted_y * sorted_y)
    sl, s2l = s[boundary], s2[boundary]
    return (
        variance_from_stats(n_left, sl, s2l),
        variance_from_stats(n_right, s[-1] - sl, s2[-1] - s2l),
    )


def best_split(
    columns: Mapping[str, np.ndarray],
    labels: Sequence,
    candidate_feature_ids: Sequence[str],
    task: str,
    min_leaf: int = 1,
    criterion: str = "entropy",
    classes: tuple[str, ...] = (),
) -> Split | None:
    """Exhaustive search over midpoint thresholds of every candidate column.

    Returns the split minimizing weighted child impurity, requiring a strictly
    positive impurity decrease and both children >= min_leaf. Ties go to the
    lower feature ordinal (order of ``candidate_feature_ids``), then the lower
    threshold. Returns None when no valid split exists.
    """
    enc, classes = encode_labels(labels, task, classes)
    return _best_split_encoded(columns, enc, list(candidate_feature_ids), task,
                               len(classes), min_leaf, criterion)


def _best_split_encoded(columns, enc, candidate_ids, task, n_classes, min_leaf, criterion):
    n = enc.size
    if n < 2 * min_leaf:
        return None
    parent = _node_impurity(enc, task, n_classes, criterion)
    best = None  # (weighted, ordinal, threshold, decrease, n_left, fid)
    for ordinal, fid in enumerate(candidate_ids):
        col = np.asarray(columns[fid], dtype=np.float64)
        if col.size != n:
            raise ConfigError(f"column {fid!r} has {col.size} values for {n} labels")
        order = np.argsort(col, kind="stable")
        sv = col[order]
        boundary = np.nonzero(sv[:-1] < sv[1:])[0]
        if boundary.size == 0:
            continue
        n_left = boundary + 1
        n_right = n - n_left
        valid = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        if task == CLASSIFICATION:
            imp_l, imp_r = _candidate_impurities_classification(
                enc[order], n_classes, boundary, n_left, n_right, criterion)
        else:
            imp_l, imp_r = _candidate_impurities_regression(enc[order], boundary, n_left, n_right)
        weighted = (n_left / n) * imp_l + (n_right / n) * imp_r
        decrease = parent - weighted
        valid &= decrease > 0.0
        if not valid.any():
            continue
        weighted = np.where(valid, weighted, np.inf)
        pos = int(np.argmin(weighted))  # first occurrence: lowest threshold wins ties
        if best is None or weighted[pos] < best[0]:
            threshold = (sv[boundary[pos]] + sv[boundary[pos] + 1]) / 2.0
            best = (float(weighted[pos]), ordinal, float(threshold),
                    float(decrease[pos]), int(n_left[pos]), fid)
    if best is None:
        return None
    _, _, threshold, decrease, nl, fid = best
    return Split(feature_id=fid, threshold=threshold, impurity_decrease=decrease,
                 left_count=nl, right_count=n - nl)


# ---------------------------------------------------------------------------
# growth
# ---------------------------------------------------------------------------

@dataclass
class MatrixView:
    """Dense (n, k) column block handed to the tree engine."""

    feature_ids: list[str]
    values: np.ndarray  # (n, k) float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.feature_ids):
            raise ConfigError("matrix view shape does not match feature_ids")
        if not np.isfinite(self.values).all():
            raise ConfigError("matrix view contains non-finite cells")


def _resolve_features_per_split(rule, k, task):
    if rule in ("all", None):
        return k
    if rule == "auto":
        return math.ceil(math.sqrt(k)) if task == CLASSIFICATION else math.ceil(k / 3)
    if isinstance(rule, int) and rule >= 1:
        return min(rule, k)
    raise ConfigError(f"bad features_per_split rule {rule!r}")


def grow_tree(
    view: MatrixView,
    labels: Sequence,
    task: str,
    max_depth: int = 50,
    min_leaf: int = 1,
    criterion: str = "entropy",
    features_per_split: int | str = "all",
    rng: np.random.Generator | None = None,
    classes: tuple[str, ...] = (),
) -> DecisionTree:
    """Recursive best-split growth, stopping at max_depth, purity, or no valid split."""
    enc, classes = encode_labels(labels, task, classes)
    if enc.size != view.values.shape[0]:
        raise ConfigError("labels and matrix view differ in length")
    k = len(view.feature_ids)
    fps = _resolve_features_per_split(features_per_split, k, task)
    n_classes = len(classes)
    nodes: list[Node] = []
    col_index = {fid: j for j, fid in enumerate(view.feature_ids)}

    def make_leaf(idx: np.ndarray, imp: float) -> int:
        node = Node(train_count=int(idx.size), train_impurity=imp)
        sub = enc[idx]
        if task == CLASSIFICATION:
            node.counts = [int(c) for c in np.bincount(sub, minlength=n_classes)]
            node.value = 0.0
        else:
            node.value = float(sub.mean())
        nodes.append(node)
        return len(nodes) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        sub = enc[idx]
        imp = _node_impurity(sub, task, n_classes, criterion)
        if depth >= max_depth or imp <= 0.0 or idx.size < 2 * min_leaf:
            return make_leaf(idx, imp)
        if fps < k and rng is not None:
            cand_pos = np.sort(rng.choice(k, size=fps, replace=False))
        else:
            cand_pos = np.arange(k)
        cand_ids = [view.feature_ids[int(j)] for j in cand_pos]
        cols = {fid: view.values[idx, col_index[fid]] for fid in cand_ids}
        split = _best_split_encoded(cols, sub, cand_ids, task, n_classes, min_leaf, criterion)
        if split is None:
            return make_leaf(idx, imp)
        j = col_index[split.feature_id]
        goes_left = view.values[idx, j] < split.threshold
        me = len(nodes)
        nodes.append(Node(
            train_count=int(idx.size),
            train_impurity=imp,
            feature_id=split.feature_id,
            threshold=split.threshold,
            impurity_decrease=split.impurity_decrease,
        ))
        nodes[me].left = build(idx[goes_left], depth + 1)
        nodes[me].right = build(idx[~goes_left], depth + 1)
        return me

    build(np.arange(enc.size), 0)
    return DecisionTree(task=task, classes=classes, feature_ids=list(view.feature_ids), nodes=nodes)


def train_forest(view: MatrixView, labels: Sequence, params: ForestParams,
                 task: str, classes: tuple[str, ...] = ()) -> Forest:
    """Bootstrap-aggregated trees; deterministic for a fixed params.seed."""
    _, classes = encode_labels(labels, task, classes)
    n = view.values.shape[0]
    labels = list(labels)
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_trees)

    def one_tree(i: int):
        rng = np.random.default_rng(seeds[i])
        if params.bootstrap:
            idx = rng.integers(0, n, size=n)
        else:
            idx = np.arange(n)
        sub_view = MatrixView(view.feature_ids, view.values[idx])
        sub_labels = [labels[int(j)] for j in idx]
        tree = grow_tree(
            sub_view, sub_labels, task,
            max_depth=params.max_depth, min_leaf=params.min_leaf,
            criterion=params.criterion, features_per_split=params.features_per_split,
            rng=rng, classes=classes,
        )
        return tree, idx

    if params.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=params.n_jobs) as pool:
            results = list(pool.map(one_tree, range(params.n_trees)))
    else:
        results = [one_tree(i) for i in range(params.n_trees)]
    trees = [t for t, _ in results]
    boots = [idx for _, idx in results]
    return Forest(task=task, classes=classes, feature_ids=list(view.feature_ids),
                  trees=trees, params=params, bootstrap_indices=boots)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def _route(tree: DecisionTree, feature_values: Mapping[str, float]) -> Node:
    node = tree.nodes[tree.root]
    while not node.is_leaf:
        fid = node.feature_id
        if fid not in feature_values:
            raise MissingFeatureError(fid)
        v = float(feature_values[fid])
        if not math.isfinite(v):
            raise MissingFeatureError(fid)
        node = tree.nodes[node.left] if v < node.threshold else tree.nodes[node.right]
    return node


def _tree_distribution(tree: DecisionTree, leaf: Node) -> dict[str, float]:
    total = leaf.train_count
    return {c: leaf.counts[i] / total for i, c in enumerate(tree.classes)}


def predict(model: DecisionTree | Forest, feature_values: Mapping[str, float]) -> Prediction:
    """Route one example. Forest regression averages trees; classification takes a
    majority vote (ties to the earliest class in the alphabet); the reported
    distribution is the mean of per-tree leaf distributions."""
    if isinstance(model, DecisionTree):
        leaf = _route(model, feature_values)
        if model.task == REGRESSION:
            return Prediction(value=leaf.value)
        return Prediction(cls=model.leaf_prediction(leaf), distribution=_tree_distribution(model, leaf))
    if model.task == REGRESSION:
        vals = [_route(t, feature_values).value for t in model.trees]
        # fsum is exactly rounded, so the mean is invariant to tree order
        return Prediction(value=math.fsum(vals) / len(vals))
    votes = np.zeros(len(model.classes), dtype=np.int64)
    dist = np.zeros(len(model.classes), dtype=np.float64)
    for t in model.trees:
        leaf = _route(t, feature_values)
        votes[int(np.argmax(leaf.counts))] += 1
        dist += np.asarray(leaf.counts, dtype=np.float64) / leaf.train_count
    dist /= len(model.trees)
    cls = model.classes[int(np.argmax(votes))]
    return Prediction(cls=cls, distribution={c: float(dist[i]) for i, c in enumerate(model.classes)})


def predict_many(model: DecisionTree | Forest, rows: Sequence[Mapping[str, float]]) -> list[Prediction]:
    return [predict(model, row) for row in rows]


# ---------------------------------------------------------------------------
# importances
# ---------------------------------------------------------------------------

def mdi_importance(forest: Forest) -> dict[str, float]:
    """Mean decrease in impurity per feature, normalized to sum to 1 when any
    split exists; features never split on score exactly 0."""
    totals = {fid: 0.0 for fid in forest.feature_ids}
    for tree in forest.trees:
        n_root = tree.nodes[tree.root].train_count
        for node in tree.nodes:
            if not node.is_leaf:
                totals[node.feature_id] += (node.train_count / n_root) * node.impurity_decrease
    k = len(forest.trees)
    means = {fid: v / k for fid, v in totals.items()}
    total = sum(means.values())
    if total > 0.0:
        means = {fid: v / total for fid, v in means.items()}
    return means


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _node_to_doc(node: Node) -> dict:
    doc = {
        "count": node.train_count,
        "impurity": node.train_impurity,
    }
    if node.is_leaf:
        if node.counts is not None:
            doc["counts"] = node.counts
        else:
            doc["value"] = node.value
    else:
        doc.update(feature_id=node.feature_id, threshold=node.threshold,
                   left=node.left, right=node.right, decrease=node.impurity_decrease)
    return doc


def _node_from_doc(doc: dict) -> Node:
    node = Node(train_count=doc["count"], train_impurity=doc["impurity"])
    if "feature_id" in doc:
        node.feature_id = doc["feature_id"]
        node.threshold = doc["threshold"]
        node.left = doc["left"]
        node.right = doc["right"]
        node.impurity_decrease = doc["decrease"]
    elif "counts" in doc:
        node.counts = list(doc["counts"])
    else:
        node.value = doc["value"]
    return node


def tree_to_doc(tree: DecisionTree) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "tree",
        "task": tree.task,
        "classes": list(tree.classes),
        "feature_ids": list(tree.feature_ids),
        "nodes": [_node_to_doc(nd) for nd in tree.nodes],
        "root": tree.root,
    }


def tree_from_doc(doc: dict) -> DecisionTree:
    return DecisionTree(
        task=doc["task"],
        classes=tuple(doc["classes"]),
        feature_ids=list(doc["feature_ids"]),
        nodes=[_node_from_doc(nd) for nd in doc["nodes"]],
        root=doc.get("root", 0),
    )


def forest_to_doc(forest: Forest) -> dict:
    p = forest.params
    return {
        "format_version": FORMAT_VERSION,
        "kind": "forest",
        "task": forest.task,
        "classes": list(forest.classes),
        "feature_ids": list(forest.feature_ids),
        "params": {
            "n_trees": p.n_trees, "max_depth": p.max_depth, "min_leaf": p.min_leaf,
            "bootstrap": p.bootstrap, "features_per_split": p.features_per_split,
            "criterion": p.criterion, "seed": p.seed,
        },
        "trees": [{"nodes": [_node_to_doc(nd) for nd in t.nodes], "root": t.root}
                  for t in forest.trees],
    }


def forest_from_doc(doc: dict) -> Forest:
    params = ForestParams(**doc["params"])
    task = doc["task"]
    classes = tuple(doc["classes"])
    fids = list(doc["feature_ids"])
    trees = [
        DecisionTree(task=task, classes=classes, feature_ids=fids,
                     nodes=[_node_from_doc(nd) for nd in t["nodes"]], root=t.get("root", 0))
        for t in doc["trees"]
    ]
    return Forest(task=task, classes=classes, feature_ids=fids, trees=trees, params=params)


def model_from_doc(doc: dict) -> DecisionTree | Forest:
    if doc.get("kind") == "tree":
        return tree_from_doc(doc)
    if doc.get("kind") == "forest":
        return forest_from_doc(doc)
    raise ConfigError(f"unknown model kind {doc.get('kind')!r}")
