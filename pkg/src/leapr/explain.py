"""Shapley attributions for trees and forests, plus dataset-level reports.

The tree algorithm is the exact path-dependent formulation: feature coalitions
are weighted by the training counts recorded at each node, so no background
dataset is needed. Classification models are explained in terms of the
probability of a caller-chosen target class, which keeps additivity
well-defined per class.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .data import REGRESSION
from .errors import ConfigError, MissingFeatureError
from .trees import DecisionTree, Forest, Node


@dataclass
class Attribution:
    base_value: float
    contributions: dict[str, float]
    model_output: float

    def additivity_gap(self) -> float:
        return abs(self.base_value + sum(self.contributions.values()) - self.model_output)


def _leaf_value(tree: DecisionTree, node: Node, target_index: int | None) -> float:
    if tree.task == REGRESSION:
        return node.value
    return node.counts[target_index] / node.train_count


def _target_index(tree_or_forest, target_class: str | None) -> int | None:
    if tree_or_forest.task == REGRESSION:
        return None
    if target_class is None:
        raise ConfigError("classification attributions need a target_class")
    try:
        return tree_or_forest.classes.index(target_class)
    except ValueError:
        raise ConfigError(f"unknown target class {target_class!r}") from None


def _expectation(tree: DecisionTree, node_idx: int, target_index) -> float:
    node = tree.nodes[node_idx]
    if node.is_leaf:
        return _leaf_value(tree, node, target_index)
    left, right = tree.nodes[node.left], tree.nodes[node.right]
    return (left.train_count * _expectation(tree, node.left, target_index)
            + right.train_count * _expectation(tree, node.right, target_index)
            ) / node.train_count


def _routed_value(tree: DecisionTree, feature_values, target_index) -> float:
    node = tree.nodes[tree.root]
    while not node.is_leaf:
        v = float(feature_values[node.feature_id])
        node = tree.nodes[node.left] if v < node.threshold else tree.nodes[node.right]
    return _leaf_value(tree, node, target_index)


# ---------------------------------------------------------------------------
# path-dependent TreeSHAP
#
# The unique path is a list of [feature_id, zero_fraction, one_fraction,
# weight] rows; extend/unwind maintain the permutation weights exactly as in
# the exact tree-explanation algorithm.
# ---------------------------------------------------------------------------

def _extend(m: list, pz: float, po: float, pi) -> None:
    l = len(m)
    m.append([pi, pz, po, 1.0 if l == 0 else 0.0])
    for i in range(l - 1, -1, -1):
        m[i + 1][3] += po * m[i][3] * (i + 1) / (l + 1)
        m[i][3] = pz * m[i][3] * (l - i) / (l + 1)


def _unwind(m: list, idx: int) -> list:
    l = len(m) - 1
    z, o = m[idx][1], m[idx][2]
    out = [row[:] for row in m[:l]]
    n = m[l][3]
    for j in range(l - 1, -1, -1):
        if o != 0.0:
            t = out[j][3]
            out[j][3] = n * (l + 1) / ((j + 1) * o)
            n = t - out[j][3] * z * (l - j) / (l + 1)
        else:
            out[j][3] = out[j][3] * (l + 1) / (z * (l - j))
    for j in range(idx, l):
        out[j][0], out[j][1], out[j][2] = m[j + 1][0], m[j + 1][1], m[j + 1][2]
    return out


def _unwound_sum(m: list, idx: int) -> float:
    l = len(m) - 1
    z, o = m[idx][1], m[idx][2]
    n = m[l][3]
    total = 0.0
    for j in range(l - 1, -1, -1):
        if o != 0.0:
            t = n * (l + 1) / ((j + 1) * o)
            total += t
            n = m[j][3] - t * z * (l - j) / (l + 1)
        elif z != 0.0:
            total += m[j][3] * (l + 1) / (z * (l - j))
    return total


def tree_shap(tree: DecisionTree, feature_values: Mapping[str, float],
              target_class: str | None = None) -> Attribution:
    """Exact Shapley values under the path-dependent weighting.

    Requires training counts on every node and a value for every feature the
    tree splits on. The base value is the root expectation.
    """
    target_index = _target_index(tree, target_class)
    needed = {n.feature_id for n in tree.nodes if not n.is_leaf}
    for fid in needed:
        if fid not in feature_values or not math.isfinite(float(feature_values[fid])):
            raise MissingFeatureError(fid)
    for node in tree.nodes:
        if node.train_count <= 0:
            raise ConfigError("tree_shap needs positive train_count on every node")

    phi: dict[str, float] = {fid: 0.0 for fid in tree.feature_ids}
    for fid in needed:
        phi.setdefault(fid, 0.0)

    def recurse(node_idx: int, m: list, pz: float, po: float, pi) -> None:
        m = [row[:] for row in m]
        _extend(m, pz, po, pi)
        node = tree.nodes[node_idx]
        if node.is_leaf:
            value = _leaf_value(tree, node, target_index)
            for i in range(1, len(m)):
                w = _unwound_sum(m, i)
                phi[m[i][0]] += w * (m[i][2] - m[i][1]) * value
            return
        v = float(feature_values[node.feature_id])
        hot, cold = (node.left, node.right) if v < node.threshold else (node.right, node.left)
        iz = io = 1.0
        path_index = next((k for k in range(1, len(m)) if m[k][0] == node.feature_id), None)
        if path_index is not None:
            iz, io = m[path_index][1], m[path_index][2]
            m = _unwind(m, path_index)
        hz = tree.nodes[hot].train_count / node.train_count
        cz = tree.nodes[cold].train_count / node.train_count
        recurse(hot, m, iz * hz, io, node.feature_id)
        recurse(cold, m, iz * cz, 0.0, node.feature_id)

    recurse(tree.root, [], 1.0, 1.0, None)
    base = _expectation(tree, tree.root, target_index)
    output = _routed_value(tree, feature_values, target_index)
    return Attribution(base_value=base, contributions=phi, model_output=output)


def forest_shap(forest: Forest, feature_values: Mapping[str, float],
                target_class: str | None = None) -> Attribution:
    """Per-feature mean of tree attributions; base is the mean of tree bases."""
    _target_index(forest, target_class)  # validate up front
    parts = [tree_shap(t, feature_values, target_class) for t in forest.trees]
    k = len(parts)
    contributions = {fid: 0.0 for fid in forest.feature_ids}
    for att in parts:
        for fid, v in att.contributions.items():
            contributions[fid] = contributions.get(fid, 0.0) + v
    contributions = {fid: v / k for fid, v in contributions.items()}
    base = math.fsum(a.base_value for a in parts) / k
    output = math.fsum(a.model_output for a in parts) / k
    return Attribution(base_value=base, contributions=contributions, model_output=output)


def shap_values(model: DecisionTree | Forest, feature_values: Mapping[str, float],
                target_class: str | None = None) -> Attribution:
    if isinstance(model, DecisionTree):
        return tree_shap(model, feature_values, target_class)
    return forest_shap(model, feature_values, target_class)


# ---------------------------------------------------------------------------
# dataset-level report
# ---------------------------------------------------------------------------

@dataclass
class TopFeaturesReport:
    sample_size: int
    target_class: str | None
    ranking: list[tuple[str, str, float]]  # (feature_id, docstring, mean |SHAP|)
    scatter: dict[str, list[tuple[int, float, object]]]  # fid -> (example_id, value, label)
    attributions: list[dict]

    def ranking_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow([f"# sample_size={self.sample_size}"])
        w.writerow(["rank", "feature_id", "docstring", "mean_abs_shap"])
        for rank, (fid, doc, score) in enumerate(self.ranking, start=1):
            w.writerow([rank, fid, doc, repr(score)])
        return buf.getvalue()

    def scatter_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["feature_id", "example_id", "value", "label"])
        for fid, _doc, _score in self.ranking:
            for eid, value, label in self.scatter.get(fid, []):
                w.writerow([fid, eid, repr(value), label])
        return buf.getvalue()


def report_top_features(
    model: DecisionTree | Forest,
    rows: Sequence[Mapping[str, float]],
    example_ids: Sequence[int],
    labels: Sequence,
    docstrings: Mapping[str, str],
    top_n: int | None = None,
    target_class: str | None = None,
) -> TopFeaturesReport:
    """Rank features by mean absolute SHAP over a sample and collect scatter
    data (feature value vs label) for external plotting."""
    if not rows:
        raise ConfigError("report needs a non-empty sample")
    sums: dict[str, float] = {fid: 0.0 for fid in model.feature_ids}
    attributions = []
    for row, eid in zip(rows, example_ids):
        att = shap_values(model, row, target_class)
        for fid, v in att.contributions.items():
            sums[fid] = sums.get(fid, 0.0) + abs(v)
        attributions.append({
            "example_id": eid,
            "base_value": att.base_value,
            "model_output": att.model_output,
            "contributions": {fid: att.contributions[fid] for fid in sorted(att.contributions)},
        })
    n = len(rows)
    means = {fid: s / n for fid, s in sums.items()}
    # ties by feature id keep the ranking invariant to representation order
    ordered = sorted(means, key=lambda fid: (-means[fid], fid))
    if top_n is not None:
        ordered = ordered[:top_n]
    ranking = [(fid, docstrings.get(fid, ""), means[fid]) for fid in ordered]
    scatter = {
        fid: [(eid, float(row[fid]), label)
              for row, eid, label in zip(rows, example_ids, labels) if fid in row]
        for fid in ordered
    }
    return TopFeaturesReport(sample_size=n, target_class=target_class,
                             ranking=ranking, scatter=scatter, attributions=attributions)
