"""Dynamic tree growth: pick the worst leaf, ask for features that would
separate its members, and split with the best pooled feature.

Feature visibility follows the ancestor chain: a leaf can split on features
proposed at itself or at any ancestor, never at siblings (``global_pool``
widens this for ablation).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import CLASSIFICATION, Dataset, Feature, label_summary, render_examples_for_prompt
from .errors import ConfigError, ProposerTransportError, RuntimeAbort
from .execution import FeatureMatrix, evaluate_matrix, validate_feature, validation_sample
from .f2 import Representation
from .persist import feature_from_doc, feature_to_doc, read_json, rng_from_state, rng_state, write_json
from .proposer import PathStep, ProposalContext, build_did3_prompt, default_cheatsheet, default_template, propose
from .trees import DecisionTree, Node, _node_from_doc, _node_to_doc, best_split, encode_labels, impurity

CHECKPOINT_VERSION = 1


@dataclass
class DID3Params:
    iterations: int = 1000
    candidates_per_call: int = 1
    min_leaf: int = 1
    prompt_sample_size: int = 20
    prompt_char_budget: int = 4000
    criterion: str = "entropy"
    global_pool: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.candidates_per_call < 1:
            raise ConfigError("candidates_per_call must be >= 1")


@dataclass
class LeafState:
    node_id: int
    member_idx: np.ndarray  # positions into the training dataset
    pool: list[str]  # feature ids proposed here and at every ancestor
    exhausted: bool = False


def total_error(labels: Sequence, task: str) -> float:
    """Classification: members outside the majority class (ties to the earliest
    class in the alphabet). Regression: sum of squared deviations from the mean."""
    if len(labels) == 0:
        raise ConfigError("total_error of an empty leaf is undefined")
    if task == CLASSIFICATION:
        codes, classes = encode_labels(labels, task)
        counts = np.bincount(codes, minlength=len(classes))
        return float(len(labels) - counts.max())
    y = np.asarray([float(v) for v in labels], dtype=np.float64)
    return float(((y - y.mean()) ** 2).sum())


class _TreeState:
    """Mutable growth state: nodes indexed by id, live leaves, parent links."""

    def __init__(self, task, classes, criterion):
        self.task = task
        self.classes = classes
        self.criterion = criterion
        self.nodes: list[Node] = []
        self.leaves: dict[int, LeafState] = {}
        self.parent: dict[int, tuple[int, bool]] = {}  # child -> (parent, is_left)

    def make_leaf(self, member_idx: np.ndarray, labels: list, pool: list[str]) -> int:
        node_labels = [labels[int(i)] for i in member_idx]
        node = Node(train_count=len(node_labels),
                    train_impurity=impurity(node_labels, self.task))
        if self.task == CLASSIFICATION:
            codes, _ = encode_labels(node_labels, self.task, self.classes)
            node.counts = [int(c) for c in np.bincount(codes, minlength=len(self.classes))]
        else:
            node.value = float(np.mean([float(v) for v in node_labels]))
        self.nodes.append(node)
        nid = len(self.nodes) - 1
        self.leaves[nid] = LeafState(node_id=nid, member_idx=member_idx, pool=list(pool))
        return nid

    def leaf_error(self, leaf: LeafState, labels: list) -> float:
        return total_error([labels[int(i)] for i in leaf.member_idx], self.task)

    def path_to_root(self, node_id: int, docs: dict[str, str]) -> list[PathStep]:
        steps = []
        child = node_id
        while child in self.parent:
            pid, is_left = self.parent[child]
            node = self.nodes[pid]
            steps.append(PathStep(docstring=docs.get(node.feature_id, node.feature_id),
                                  threshold=node.threshold, went_left=is_left))
            child = pid
        steps.reverse()
        return steps

    def to_tree(self, feature_ids: list[str]) -> DecisionTree:
        return DecisionTree(task=self.task, classes=self.classes,
                            feature_ids=feature_ids, nodes=self.nodes, root=0)


def select_leaf(state: _TreeState, labels: list) -> LeafState | None:
    """Highest-total-error live leaf; ties go to the oldest node id. Returns
    None when every leaf is pure or exhausted (training halts early)."""
    best: LeafState | None = None
    best_err = 0.0
    for nid in sorted(state.leaves):
        leaf = state.leaves[nid]
        if leaf.exhausted:
            continue
        err = state.leaf_error(leaf, labels)
        if err > best_err:
            best, best_err = leaf, err
    return best


def split_leaf(
    state: _TreeState,
    leaf: LeafState,
    accepted: list[Feature],
    matrix: FeatureMatrix,
    labels: list,
    feature_order: list[str],
    min_leaf: int,
    candidate_ids: list[str] | None = None,
):
    """Try to split ``leaf`` over its pool plus newly accepted candidates.

    On success the leaf becomes an internal node and both children inherit
    (pool + accepted). On failure the leaf is marked exhausted. Returns the
    Split or None.
    """
    pool = list(leaf.pool) + [f.id for f in accepted if f.id not in leaf.pool]
    if candidate_ids is None:
        candidate_ids = pool
    ordered = [fid for fid in feature_order if fid in set(candidate_ids)]
    member_ids = [int(i) for i in leaf.member_idx]
    available = [fid for fid in ordered if all(matrix.is_filled(fid, mid) for mid in member_ids)]
    member_labels = [labels[i] for i in member_ids]
    cols = {fid: matrix.column(fid, member_ids) for fid in available}
    split = best_split(cols, member_labels, available, state.task,
                       min_leaf=min_leaf, criterion=state.criterion,
                       classes=state.classes)
    if split is None:
        leaf.pool = pool
        leaf.exhausted = True
        return None
    col = cols[split.feature_id]
    goes_left = col < split.threshold
    node = state.nodes[leaf.node_id]
    node.feature_id = split.feature_id
    node.threshold = split.threshold
    node.impurity_decrease = split.impurity_decrease
    node.counts = None
    node.value = 0.0
    del state.leaves[leaf.node_id]
    left_id = state.make_leaf(leaf.member_idx[goes_left], labels, pool)
    right_id = state.make_leaf(leaf.member_idx[~goes_left], labels, pool)
    node.left, node.right = left_id, right_id
    state.parent[left_id] = (leaf.node_id, True)
    state.parent[right_id] = (leaf.node_id, False)
    return split


def _checkpoint_doc(iteration, state, features, feature_order, provenance, rng):
    return {
        "format_version": CHECKPOINT_VERSION,
        "trainer": "did3",
        "iteration": iteration,
        "rng_state": rng_state(rng),
        "nodes": [_node_to_doc(n) for n in state.nodes],
        "parent": {str(c): [p, is_left] for c, (p, is_left) in state.parent.items()},
        "leaves": [
            {"node_id": l.node_id, "member_idx": [int(i) for i in l.member_idx],
             "pool": l.pool, "exhausted": l.exhausted}
            for l in (state.leaves[nid] for nid in sorted(state.leaves))
        ],
        "features": [feature_to_doc(features[fid]) for fid in feature_order],
        "feature_order": feature_order,
        "provenance": provenance,
    }


def did3_train(
    dataset: Dataset,
    backend,
    executor,
    params: DID3Params,
    template: str | None = None,
    task_text: str = "",
    cheatsheet: str | None = None,
    validation_sample_size: int = 10_000,
    parallelism: int = 1,
    checkpoint_path=None,
    resume: bool = False,
) -> tuple[Representation, DecisionTree]:
    """Grow one tree for up to ``params.iterations`` proposal rounds.

    Returns the features actually used at internal nodes (in first-use order)
    and the grown tree. Halts early once every leaf is pure or exhausted.
    """
    if template is None:
        template = default_template("did3", dataset.domain)
    if cheatsheet is None:
        cheatsheet = default_cheatsheet(dataset.domain)
    labels = dataset.labels
    sample = validation_sample(dataset.examples, validation_sample_size)

    features: dict[str, Feature] = {}
    feature_order: list[str] = []
    provenance: list[dict] = []
    rng = np.random.default_rng(params.seed)
    state = _TreeState(dataset.task, dataset.classes, params.criterion)
    start = 1
    if resume:
        if checkpoint_path is None:
            raise ConfigError("resume requested without a checkpoint path")
        doc = read_json(checkpoint_path)
        if doc.get("trainer") != "did3":
            raise ConfigError("checkpoint was not written by the did3 trainer")
        state.nodes = [_node_from_doc(d) for d in doc["nodes"]]
        state.parent = {int(c): (p, bool(is_left)) for c, (p, is_left) in doc["parent"].items()}
        for ld in doc["leaves"]:
            state.leaves[ld["node_id"]] = LeafState(
                node_id=ld["node_id"],
                member_idx=np.asarray(ld["member_idx"], dtype=np.intp),
                pool=list(ld["pool"]), exhausted=ld["exhausted"])
        for fd in doc["features"]:
            f = feature_from_doc(fd)
            features[f.id] = f
        feature_order = list(doc["feature_order"])
        provenance = list(doc["provenance"])
        rng = rng_from_state(doc["rng_state"])
        start = doc["iteration"] + 1
    else:
        state.make_leaf(np.arange(len(dataset)), labels, pool=[])

    matrix = FeatureMatrix()
    docs = {fid: features[fid].docstring for fid in feature_order}

    for iteration in range(start, params.iterations + 1):
        pre_state = rng_state(rng)
        leaf = select_leaf(state, labels)
        if leaf is None:
            break
        member_labels = [labels[int(i)] for i in leaf.member_idx]
        n_samples = min(params.prompt_sample_size, len(member_labels))
        picks = rng.choice(len(member_labels), size=n_samples, replace=False)
        sample_ids = [dataset.examples[int(leaf.member_idx[int(i)])].id for i in picks]
        ctx = ProposalContext(
            mode="did3", task_text=task_text, adapter=dataset.domain,
            cheatsheet=cheatsheet, batch_size=params.candidates_per_call,
            path=state.path_to_root(leaf.node_id, docs),
            samples_text=render_examples_for_prompt(dataset, sample_ids, dataset.domain,
                                                    params.prompt_char_budget),
            label_summary=label_summary(member_labels, dataset.task),
        )
        messages = build_did3_prompt(ctx, template)
        try:
            candidates = propose(backend, messages, params.candidates_per_call, mode="did3")
        except ProposerTransportError as exc:
            if checkpoint_path is not None:
                doc = _checkpoint_doc(iteration - 1, state, features, feature_order,
                                      provenance, rng)
                doc["rng_state"] = pre_state
                write_json(checkpoint_path, doc)
            raise RuntimeAbort(f"proposer failed at iteration {iteration}: {exc}") from exc

        accepted: list[Feature] = []
        record = {"iteration": iteration, "leaf": leaf.node_id,
                  "proposed": [], "accepted": [], "rejected": {}}
        for cand in candidates:
            feat = Feature.from_source(cand.source, cand.docstring,
                                       origin={"trainer": "did3", "iteration": iteration,
                                               "leaf": leaf.node_id})
            record["proposed"].append(feat.id)
            if feat.id in features:
                existing = features[feat.id]
                if existing.status == "validated" and feat.id not in leaf.pool:
                    accepted.append(existing)  # re-proposed elsewhere: joins this pool
                continue
            report = validate_feature(feat, sample, executor)
            features[feat.id] = feat
            feature_order.append(feat.id)
            docs[feat.id] = feat.docstring
            if report.accepted:
                accepted.append(feat)
                record["accepted"].append(feat.id)
            else:
                record["rejected"][feat.id] = report.reason

        pool_ids = set(leaf.pool) | {f.id for f in accepted}
        if params.global_pool:
            pool_ids |= {fid for fid in feature_order if features[fid].status == "validated"}
        eval_feats = [features[fid] for fid in feature_order
                      if fid in pool_ids and features[fid].status == "validated"]
        member_examples = [dataset.examples[int(i)] for i in leaf.member_idx]
        matrix, quarantined = evaluate_matrix(eval_feats, member_examples, executor,
                                              parallelism=parallelism, matrix=matrix)
        for q in quarantined:
            features[q.feature_id].status = "rejected"
            features[q.feature_id].rejection_reason = q.kind
        usable = [f for f in eval_feats if f.status == "validated"]
        split = split_leaf(state, leaf, [f for f in accepted if f.status == "validated"],
                           matrix, labels, feature_order, params.min_leaf,
                           candidate_ids=[f.id for f in usable])
        record["split"] = None if split is None else {
            "feature_id": split.feature_id, "threshold": split.threshold,
            "impurity_decrease": split.impurity_decrease,
        }
        provenance.append(record)
        if checkpoint_path is not None:
            write_json(checkpoint_path,
                       _checkpoint_doc(iteration, state, features, feature_order,
                                       provenance, rng))

    used_ids: list[str] = []
    for node in state.nodes:
        if not node.is_leaf and node.feature_id not in used_ids:
            used_ids.append(node.feature_id)
    tree = state.to_tree(used_ids)
    rep = Representation(
        features=[features[fid] for fid in used_ids],
        provenance=provenance,
        importances=_tree_importances(tree),
    )
    return rep, tree


def _tree_importances(tree: DecisionTree) -> dict[str, float]:
    totals = {fid: 0.0 for fid in tree.feature_ids}
    if not tree.nodes:
        return totals
    n_root = tree.nodes[tree.root].train_count
    for node in tree.nodes:
        if not node.is_leaf:
            totals[node.feature_id] += (node.train_count / n_root) * node.impurity_decrease
    total = sum(totals.values())
    if total > 0.0:
        totals = {fid: v / total for fid, v in totals.items()}
    return totals
