"""Global feature evolution: propose feature batches, score them all at once
with random-forest importances, and steer the next batch with the top and a
random sample of existing features.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, Feature
from .errors import ConfigError, ProposerTransportError, RuntimeAbort
from .execution import FeatureMatrix, evaluate_matrix, validate_feature, validation_sample
from .persist import feature_from_doc, feature_to_doc, read_json, rng_from_state, rng_state, write_json
from .proposer import Exemplar, ProposalContext, build_f2_prompt, default_cheatsheet, default_template, propose
from .trees import ForestParams, mdi_importance, train_forest

CHECKPOINT_VERSION = 1


@dataclass
class F2Params:
    iterations: int = 100
    batch_size: int = 10
    k_top: int = 10
    k_rand: int = 10
    scoring_forest: ForestParams = field(default_factory=lambda: ForestParams(n_trees=100))
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.k_top < 0 or self.k_rand < 0:
            raise ConfigError("k_top and k_rand must be >= 0")


@dataclass
class Representation:
    """Learned feature set plus how it came to be."""

    features: list[Feature]
    provenance: list[dict]
    importances: dict[str, float]

    def feature_by_id(self, fid: str) -> Feature:
        for f in self.features:
            if f.id == fid:
                return f
        raise KeyError(fid)


def select_exemplars(
    features: Sequence[Feature],
    importances: dict[str, float],
    k_top: int,
    k_rand: int,
    rng: np.random.Generator,
) -> tuple[list[Feature], list[Feature]]:
    """Top-k by importance (ties to the earlier feature) plus a uniform sample
    without replacement from the remainder. Degenerate sizes clamp."""
    order = sorted(range(len(features)),
                   key=lambda i: (-importances.get(features[i].id, 0.0), i))
    top_idx = order[:k_top]
    top = [features[i] for i in top_idx]
    rest = [features[i] for i in sorted(set(range(len(features))) - set(top_idx))]
    k = min(k_rand, len(rest))
    if k == 0:
        return top, []
    picks = rng.choice(len(rest), size=k, replace=False)
    return top, [rest[int(i)] for i in picks]


def _write_checkpoint(path, iteration, features, provenance, rng):
    write_json(path, {
        "format_version": CHECKPOINT_VERSION,
        "trainer": "f2",
        "iteration": iteration,
        "rng_state": rng_state(rng),
        "features": [feature_to_doc(f) for f in features],
        "provenance": provenance,
    })


def _active(features: list[Feature]) -> list[Feature]:
    return [f for f in features if f.status == "validated"]


def f2_train(
    dataset: Dataset,
    backend,
    executor,
    params: F2Params,
    template: str | None = None,
    task_text: str = "",
    cheatsheet: str | None = None,
    validation_sample_size: int = 10_000,
    parallelism: int = 1,
    checkpoint_path=None,
    resume: bool = False,
) -> Representation:
    """Run the evolution loop for ``params.iterations`` proposal rounds.

    Each round retrains the scoring forest on the validated feature set, ranks
    features by mean decrease in impurity, prompts for a new batch, validates
    the candidates, and appends survivors. A checkpoint is written after every
    iteration; a proposer hard failure aborts with the checkpoint intact.
    """
    if template is None:
        template = default_template("f2", dataset.domain)
    if cheatsheet is None:
        cheatsheet = default_cheatsheet(dataset.domain)
    sample = validation_sample(dataset.examples, validation_sample_size)

    features: list[Feature] = []
    provenance: list[dict] = []
    rng = np.random.default_rng(params.seed)
    start = 1
    if resume:
        if checkpoint_path is None:
            raise ConfigError("resume requested without a checkpoint path")
        doc = read_json(checkpoint_path)
        if doc.get("trainer") != "f2":
            raise ConfigError("checkpoint was not written by the f2 trainer")
        features = [feature_from_doc(d) for d in doc["features"]]
        provenance = list(doc["provenance"])
        rng = rng_from_state(doc["rng_state"])
        start = doc["iteration"] + 1

    matrix = FeatureMatrix()
    importances: dict[str, float] = {}
    known_ids = {f.id for f in features}
    example_ids = [ex.id for ex in dataset.examples]

    def score(current: list[Feature]) -> dict[str, float]:
        nonlocal matrix
        matrix, quarantined = evaluate_matrix(current, dataset.examples, executor,
                                              parallelism=parallelism, matrix=matrix)
        for record in quarantined:
            feat = next(f for f in current if f.id == record.feature_id)
            feat.status = "rejected"
            feat.rejection_reason = record.kind
        usable = _active(features)
        if not usable:
            return {}
        view = matrix.view([f.id for f in usable], example_ids)
        forest = train_forest(view, dataset.labels, params.scoring_forest,
                              dataset.task, dataset.classes)
        return mdi_importance(forest)

    for iteration in range(start, params.iterations + 1):
        pre_state = rng_state(rng)  # resume point if this iteration aborts
        usable = _active(features)
        importances = score(usable) if usable else {}
        usable = _active(features)
        top, rand = select_exemplars(usable, importances, params.k_top, params.k_rand, rng)
        ctx = ProposalContext(
            mode="f2", task_text=task_text, adapter=dataset.domain,
            cheatsheet=cheatsheet, batch_size=params.batch_size,
            exemplars_top=[Exemplar(f.docstring, f.source, importances.get(f.id, 0.0)) for f in top],
            exemplars_random=[Exemplar(f.docstring, f.source, importances.get(f.id, 0.0)) for f in rand],
        )
        messages = build_f2_prompt(ctx, template)
        try:
            candidates = propose(backend, messages, params.batch_size, mode="f2")
        except ProposerTransportError as exc:
            if checkpoint_path is not None:
                write_json(checkpoint_path, {
                    "format_version": CHECKPOINT_VERSION, "trainer": "f2",
                    "iteration": iteration - 1, "rng_state": pre_state,
                    "features": [feature_to_doc(f) for f in features],
                    "provenance": provenance,
                })
            raise RuntimeAbort(f"proposer failed at iteration {iteration}: {exc}") from exc
        record = {"iteration": iteration,
                  "importances": dict(sorted(importances.items())),
                  "proposed": [], "accepted": [], "rejected": {}}
        for cand in candidates:
            feat = Feature.from_source(cand.source, cand.docstring,
                                       origin={"trainer": "f2", "iteration": iteration})
            record["proposed"].append(feat.id)
            if feat.id in known_ids:
                continue  # resubmitted source; the id already covers it
            known_ids.add(feat.id)
            report = validate_feature(feat, sample, executor)
            if report.accepted:
                features.append(feat)
                record["accepted"].append(feat.id)
            else:
                record["rejected"][feat.id] = report.reason
        provenance.append(record)
        if checkpoint_path is not None:
            _write_checkpoint(checkpoint_path, iteration, features, provenance, rng)

    final = _active(features)
    importances = score(final) if final else {}
    return Representation(features=_active(features), provenance=provenance,
                          importances=importances)
