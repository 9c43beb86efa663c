"""Out-of-bag comparison against an established random-forest implementation
on the exported feature matrix."""

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from leapr.data import Feature
from leapr.execution import NativeExecutor, evaluate_matrix
from leapr.fixtures import make_synthetic_task
from leapr.trees import ForestParams, train_forest


def _route_tree(tree, row):
    node = tree.nodes[tree.root]
    while not node.is_leaf:
        j = tree.feature_ids.index(node.feature_id)
        node = tree.nodes[node.left] if row[j] < node.threshold else tree.nodes[node.right]
    return int(np.argmax(node.counts))


def _oob_accuracy(forest, X, y_codes):
    n = X.shape[0]
    votes = np.zeros((n, len(forest.classes)), dtype=np.int64)
    for tree, boot in zip(forest.trees, forest.bootstrap_indices):
        in_bag = np.zeros(n, dtype=bool)
        in_bag[boot] = True
        for i in np.nonzero(~in_bag)[0]:
            votes[i, _route_tree(tree, X[i])] += 1
    seen = votes.sum(axis=1) > 0
    preds = votes.argmax(axis=1)
    return float((preds[seen] == y_codes[seen]).mean())


def test_oob_accuracy_within_three_points_of_reference():
    dataset, _ = make_synthetic_task("noisy", 1000, seed=0)
    features = []
    for name in ("field:a", "field:b", "field:c"):
        f = Feature.from_source(f"native:{name}")
        f.status = "validated"
        features.append(f)
    matrix, _ = evaluate_matrix(features, dataset.examples, NativeExecutor("tabular"))
    view = matrix.view([f.id for f in features], [ex.id for ex in dataset.examples])

    params = ForestParams(n_trees=500, max_depth=50, seed=0)
    forest = train_forest(view, dataset.labels, params, dataset.task, dataset.classes)
    y_codes = np.array([forest.classes.index(y) for y in dataset.labels])
    ours = _oob_accuracy(forest, view.values, y_codes)

    reference = RandomForestClassifier(
        n_estimators=500, max_depth=50, criterion="entropy", max_features="sqrt",
        oob_score=True, random_state=0, n_jobs=-1)
    reference.fit(view.values, y_codes)
    theirs = float(reference.oob_score_)

    assert abs(ours - theirs) <= 0.03, f"ours={ours:.4f} reference={theirs:.4f}"
