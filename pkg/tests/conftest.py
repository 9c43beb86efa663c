import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from leapr.data import CLASSIFICATION, REGRESSION, Dataset, Example
from leapr.trees import DecisionTree, Node


def dyadic_labels(rng: np.random.Generator, n: int) -> list[float]:
    """Labels on a 1/64 grid in [-16, 16]: sums and squares stay exact in
    float64, which makes split-impurity ties bit-reproducible."""
    return [float(v) / 64.0 for v in rng.integers(-1024, 1025, size=n)]


def random_split_case(seed: int):
    """One (columns, labels, task, min_leaf) instance for the split oracle."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 201))
    k = int(rng.integers(1, 9))
    task = REGRESSION if rng.random() < 0.5 else CLASSIFICATION
    columns = {}
    for j in range(k):
        col = rng.normal(size=n)
        if rng.random() < 0.5:
            col = np.round(col, 1)  # heavy duplicate values
        columns[f"f{j}"] = col
    if task == REGRESSION:
        labels = dyadic_labels(rng, n)
    else:
        m = int(rng.integers(2, 5))
        labels = [f"c{int(v)}" for v in rng.integers(0, m, size=n)]
    min_leaf = int(rng.integers(1, 4))
    return columns, labels, [f"f{j}" for j in range(k)], task, min_leaf


def tabular_dataset(values: np.ndarray, labels, task, field_names=("a", "b", "c")) -> Dataset:
    examples = [
        Example(id=i, payload={name: float(values[i, j]) for j, name in enumerate(field_names)})
        for i in range(values.shape[0])
    ]
    return Dataset(domain="tabular", task=task, examples=examples, labels=list(labels))


def random_tree(rng: np.random.Generator, depth: int, feature_ids, task=REGRESSION,
                n_classes: int = 2) -> DecisionTree:
    """A structurally valid random tree: counts are consistent bottom-up and
    every node is reachable with positive weight."""
    nodes: list[Node] = []

    def build(d: int) -> tuple[int, int]:  # (node index, count)
        if d == 0 or rng.random() < 0.2:
            count = int(rng.integers(1, 12))
            node = Node(train_count=count, train_impurity=0.0)
            if task == REGRESSION:
                node.value = float(np.round(rng.normal(), 3))
            else:
                counts = [0] * n_classes
                for _ in range(count):
                    counts[int(rng.integers(0, n_classes))] += 1
                node.counts = counts
            nodes.append(node)
            return len(nodes) - 1, count
        me = len(nodes)
        nodes.append(Node(train_count=0, train_impurity=0.0))
        left, lc = build(d - 1)
        right, rc = build(d - 1)
        node = nodes[me]
        node.feature_id = str(rng.choice(feature_ids))
        node.threshold = float(np.round(rng.normal(), 2))
        node.left, node.right = left, right
        node.train_count = lc + rc
        node.impurity_decrease = float(abs(rng.normal())) * 0.1
        return me, lc + rc

    build(depth)
    classes = tuple(f"k{i}" for i in range(n_classes)) if task == CLASSIFICATION else ()
    return DecisionTree(task=task, classes=classes, feature_ids=list(feature_ids), nodes=nodes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
