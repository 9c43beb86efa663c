"""Run configuration, orchestration, and artifact persistence.

A run directory is self-contained: ``model.json`` embeds the final forest and
every feature's source, so eval/explain need nothing beyond it and a dataset.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import did3 as did3_mod
from . import f2 as f2_mod
from .data import CLASSIFICATION, REGRESSION, Dataset, load_dataset, split_holdout
from .errors import ConfigError, MissingFeatureError
from .execution import FeatureMatrix, NativeExecutor, WorkerExecutor, evaluate_matrix
from .explain import report_top_features, shap_values
from .metrics import classification_metrics, regression_metrics
from .persist import feature_from_doc, feature_to_doc, read_json, write_json
from .proposer import OpenAIChatBackend, ScriptedBackend, load_template
from .trees import Forest, ForestParams, forest_to_doc, model_from_doc, predict, mdi_importance, tree_to_doc

MODEL_FORMAT_VERSION = 1


def _forest_params(doc: dict | None, defaults: ForestParams) -> ForestParams:
    if not doc:
        return defaults
    merged = {
        "n_trees": defaults.n_trees, "max_depth": defaults.max_depth,
        "min_leaf": defaults.min_leaf, "bootstrap": defaults.bootstrap,
        "features_per_split": defaults.features_per_split,
        "criterion": defaults.criterion, "seed": defaults.seed,
        "n_jobs": defaults.n_jobs,
    }
    unknown = set(doc) - set(merged)
    if unknown:
        raise ConfigError(f"unknown forest params: {sorted(unknown)}")
    merged.update(doc)
    return ForestParams(**merged)


@dataclass
class RunConfig:
    dataset_path: str
    adapter: str
    task: str
    trainer: str  # "f2" | "did3"
    output_dir: str
    seed: int = 0
    holdout_fraction: float | None = None
    f2: f2_mod.F2Params = field(default_factory=f2_mod.F2Params)
    did3: did3_mod.DID3Params = field(default_factory=did3_mod.DID3Params)
    final_forest: ForestParams = field(default_factory=ForestParams)
    validation_sample_size: int = 10_000
    proposer_backend: str = "scripted"  # "scripted" | "llm"
    script_path: str | None = None
    llm_model: str = ""
    llm_temperature: float = 1.0
    template_path: str | None = None
    task_text: str = ""
    cheatsheet: str | None = None
    executor_kind: str = "native"  # "native" | "worker"
    worker_command: list[str] = field(default_factory=list)
    per_call_timeout: float = 2.0
    load_timeout: float = 10.0
    workers: int = 1
    parallelism: int = 1
    positive_class: str | None = None
    resume: bool = False

    @staticmethod
    def from_dict(doc: dict) -> "RunConfig":
        try:
            ds = doc["dataset"]
            cfg = RunConfig(
                dataset_path=ds["path"], adapter=ds["adapter"], task=ds["task"],
                trainer=doc["trainer"], output_dir=doc["output_dir"],
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"config is missing required key: {exc}") from exc
        if cfg.task not in (REGRESSION, CLASSIFICATION):
            raise ConfigError(f"unknown task {cfg.task!r}")
        if cfg.trainer not in ("f2", "did3"):
            raise ConfigError(f"unknown trainer {cfg.trainer!r}")
        hold = doc.get("holdout")
        if hold:
            cfg.holdout_fraction = float(hold["fraction"])
        f2_doc = dict(doc.get("f2", {}))
        scoring = f2_doc.pop("scoring_forest", None)
        cfg.f2 = f2_mod.F2Params(
            **{**{"seed": cfg.seed}, **f2_doc},
            scoring_forest=_forest_params(scoring, ForestParams(n_trees=100, seed=cfg.seed)),
        )
        did3_doc = dict(doc.get("did3", {}))
        cfg.did3 = did3_mod.DID3Params(**{**{"seed": cfg.seed}, **did3_doc})
        cfg.final_forest = _forest_params(doc.get("final_forest"), ForestParams(seed=cfg.seed))
        cfg.validation_sample_size = int(doc.get("validation_sample_size", 10_000))
        prop = doc.get("proposer", {})
        cfg.proposer_backend = prop.get("backend", "scripted")
        cfg.script_path = prop.get("script_path")
        cfg.llm_model = prop.get("model", "")
        cfg.llm_temperature = float(prop.get("temperature", 1.0))
        cfg.template_path = prop.get("template_path")
        cfg.task_text = prop.get("task_text", "")
        cfg.cheatsheet = prop.get("cheatsheet")
        execu = doc.get("executor", {})
        cfg.executor_kind = execu.get("kind", "native")
        cfg.worker_command = list(execu.get("worker_command", []))
        cfg.per_call_timeout = float(execu.get("per_call_timeout", 2.0))
        cfg.load_timeout = float(execu.get("load_timeout", 10.0))
        cfg.workers = int(execu.get("workers", 1))
        cfg.parallelism = int(execu.get("parallelism", 1))
        cfg.positive_class = doc.get("positive_class")
        cfg.resume = bool(doc.get("resume", False))
        cfg.validate()
        return cfg

    def validate(self):
        if not os.path.exists(self.dataset_path):
            raise ConfigError(f"dataset path {self.dataset_path!r} does not exist")
        if self.proposer_backend == "scripted":
            if not self.script_path or not os.path.exists(self.script_path):
                raise ConfigError("scripted proposer needs an existing script_path")
        elif self.proposer_backend != "llm":
            raise ConfigError(f"unknown proposer backend {self.proposer_backend!r}")
        if self.template_path and not os.path.exists(self.template_path):
            raise ConfigError(f"template path {self.template_path!r} does not exist")
        if self.executor_kind == "worker":
            if not self.worker_command:
                raise ConfigError("worker executor needs a worker_command")
        elif self.executor_kind != "native":
            raise ConfigError(f"unknown executor kind {self.executor_kind!r}")


def build_executor(cfg: RunConfig):
    if cfg.executor_kind == "native":
        return NativeExecutor(cfg.adapter, per_call_timeout=cfg.per_call_timeout,
                              load_timeout=cfg.load_timeout)
    return WorkerExecutor(cfg.worker_command, workers=cfg.workers,
                          per_call_timeout=cfg.per_call_timeout,
                          load_timeout=cfg.load_timeout)


def build_backend(cfg: RunConfig):
    if cfg.proposer_backend == "scripted":
        return ScriptedBackend(read_json(cfg.script_path), cfg.adapter)
    return OpenAIChatBackend(model=cfg.llm_model, temperature=cfg.llm_temperature)


# ---------------------------------------------------------------------------
# prediction plumbing shared by train/eval/explain
# ---------------------------------------------------------------------------

def _rows_for(dataset: Dataset, features, executor, parallelism,
              matrix: FeatureMatrix | None = None):
    """(rows, usable feature ids, quarantine records). A row maps feature id to
    value; rows for examples hit by quarantine simply lack those columns."""
    matrix, quarantined = evaluate_matrix(features, dataset.examples, executor,
                                          parallelism=parallelism, matrix=matrix)
    usable = [f.id for f in features if f.status == "validated"
              and f.id in set(matrix.feature_ids)]
    rows = []
    for ex in dataset.examples:
        rows.append({fid: matrix.get(fid, ex.id) for fid in usable
                     if matrix.is_filled(fid, ex.id)})
    return rows, usable, quarantined, matrix


def _predictions(model, rows):
    """Predictions plus indices of examples whose routing hit a missing feature."""
    preds, skipped = [], []
    for i, row in enumerate(rows):
        try:
            preds.append(predict(model, row))
        except MissingFeatureError:
            preds.append(None)
            skipped.append(i)
    return preds, skipped


def _metrics_for(model, dataset: Dataset, rows, positive_class) -> dict:
    preds, skipped = _predictions(model, rows)
    keep = [i for i in range(len(rows)) if preds[i] is not None]
    labels = [dataset.labels[i] for i in keep]
    if dataset.task == REGRESSION:
        out = regression_metrics([preds[i].value for i in keep], labels)
    else:
        pos = positive_class if positive_class is not None else (
            dataset.classes[-1] if len(dataset.classes) == 2 else None)
        out = classification_metrics([preds[i].cls for i in keep], labels,
                                     dataset.classes, pos)
    out["excluded_examples"] = len(skipped)
    return out


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def run_train(config: dict) -> dict:
    cfg = RunConfig.from_dict(config)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_lines = [f"trainer={cfg.trainer} dataset={cfg.dataset_path} seed={cfg.seed}"]
    t0 = time.monotonic()

    dataset = load_dataset(cfg.dataset_path, cfg.adapter, cfg.task)
    holdout = None
    if cfg.holdout_fraction:
        dataset, holdout = split_holdout(dataset, cfg.holdout_fraction, cfg.seed)
        log_lines.append(f"holdout: {len(holdout)} of {len(dataset) + len(holdout)} examples")
    executor = build_executor(cfg)
    backend = build_backend(cfg)
    template = load_template(cfg.template_path) if cfg.template_path else None
    checkpoint_path = out / "checkpoint.json"
    resume = cfg.resume and checkpoint_path.exists()

    try:
        if cfg.trainer == "f2":
            rep = f2_mod.f2_train(
                dataset, backend, executor, cfg.f2, template=template,
                task_text=cfg.task_text, cheatsheet=cfg.cheatsheet,
                validation_sample_size=cfg.validation_sample_size,
                parallelism=cfg.parallelism,
                checkpoint_path=checkpoint_path, resume=resume)
            grown_tree = None
        else:
            rep, grown_tree = did3_mod.did3_train(
                dataset, backend, executor, cfg.did3, template=template,
                task_text=cfg.task_text, cheatsheet=cfg.cheatsheet,
                validation_sample_size=cfg.validation_sample_size,
                parallelism=cfg.parallelism,
                checkpoint_path=checkpoint_path, resume=resume)

        # final predictor: a forest retrained on the learned representation
        rows, usable, quarantined, matrix = _rows_for(dataset, rep.features, executor,
                                                      cfg.parallelism)
        example_ids = [ex.id for ex in dataset.examples]
        if usable:
            view = matrix.view(usable, example_ids)
            forest = train_forest_with(view, dataset, cfg.final_forest)
        else:
            forest = None
        bundle = {
            "format_version": MODEL_FORMAT_VERSION,
            "adapter": cfg.adapter,
            "task": cfg.task,
            "classes": list(dataset.classes),
            "trainer": cfg.trainer,
            "positive_class": cfg.positive_class,
            "features": [feature_to_doc(f) for f in rep.features],
            "model": forest_to_doc(forest) if forest else None,
        }
        write_json(out / "model.json", bundle)
        if grown_tree is not None:
            write_json(out / "did3_tree.json", {
                "tree": tree_to_doc(grown_tree),
                "features": [feature_to_doc(f) for f in rep.features],
            })
        _write_feature_files(out / "features", rep.features)

        metrics: dict = {
            "trainer": cfg.trainer,
            "n_features": len(rep.features),
            "importances": {k: rep.importances[k] for k in sorted(rep.importances)},
            "quarantined": [q.feature_id for q in quarantined],
        }
        if forest is not None:
            metrics["train"] = _metrics_for(forest, dataset, rows, cfg.positive_class)
            metrics["forest_importances"] = {
                k: v for k, v in sorted(mdi_importance(forest).items())}
        if holdout is not None and forest is not None:
            hrows, _, hq, _ = _rows_for(holdout, rep.features, executor, cfg.parallelism)
            metrics["holdout"] = _metrics_for(forest, holdout, hrows, cfg.positive_class)
        write_json(out / "metrics.json", metrics)
        log_lines.append(f"features={len(rep.features)} quarantined={len(quarantined)}")
        log_lines.append(f"wall_seconds={time.monotonic() - t0:.2f}")
        (out / "run.log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
        return {"output_dir": str(out), "metrics": metrics,
                "n_features": len(rep.features)}
    finally:
        executor.close()


def train_forest_with(view, dataset: Dataset, params: ForestParams) -> Forest:
    from .trees import train_forest
    return train_forest(view, dataset.labels, params, dataset.task, dataset.classes)


def _write_feature_files(feature_dir: Path, features) -> None:
    feature_dir.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(features):
        origin = " ".join(f"{k}={v}" for k, v in sorted(f.origin.items()))
        header = (f"# feature_id: {f.id}\n"
                  f"# origin: {origin}\n"
                  f"# docstring: {f.docstring}\n")
        path = feature_dir / f"{i:04d}_{f.id}.txt"
        path.write_text(header + f.source + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# eval / explain / export
# ---------------------------------------------------------------------------

def _load_bundle(model_path):
    bundle = read_json(model_path)
    if bundle.get("model") is None:
        raise ConfigError("model bundle contains no trained forest")
    model = model_from_doc(bundle["model"])
    features = [feature_from_doc(d) for d in bundle["features"]]
    return bundle, model, features


def _executor_for_bundle(bundle, config: dict | None):
    execu = (config or {}).get("executor", {})
    kind = execu.get("kind", "native")
    if kind == "native":
        return NativeExecutor(bundle["adapter"],
                              per_call_timeout=float(execu.get("per_call_timeout", 2.0)))
    return WorkerExecutor(execu["worker_command"], workers=int(execu.get("workers", 1)),
                          per_call_timeout=float(execu.get("per_call_timeout", 2.0)),
                          load_timeout=float(execu.get("load_timeout", 10.0)))


def run_eval(model_path, dataset_path, config: dict | None = None) -> dict:
    bundle, model, features = _load_bundle(model_path)
    dataset = load_dataset(dataset_path, bundle["adapter"], bundle["task"])
    if bundle["task"] == CLASSIFICATION:
        dataset.classes = tuple(bundle["classes"])
    executor = _executor_for_bundle(bundle, config)
    try:
        rows, usable, quarantined, _ = _rows_for(dataset, features, executor,
                                                 int((config or {}).get("parallelism", 1)))
        metrics = _metrics_for(model, dataset, rows, bundle.get("positive_class"))
        metrics["quarantined"] = [q.feature_id for q in quarantined]
        return metrics
    finally:
        executor.close()


def run_explain(model_path, dataset_path, example_id: int | None = None,
                sample_size: int = 150, top_n: int = 3,
                target_class: str | None = None,
                output_dir=None, config: dict | None = None) -> dict:
    bundle, model, features = _load_bundle(model_path)
    dataset = load_dataset(dataset_path, bundle["adapter"], bundle["task"])
    if bundle["task"] == CLASSIFICATION:
        dataset.classes = tuple(bundle["classes"])
        if target_class is None:
            target_class = bundle.get("positive_class") or dataset.classes[-1]
    docstrings = {f.id: f.docstring for f in features}
    executor = _executor_for_bundle(bundle, config)
    try:
        if example_id is not None:
            sub = dataset.subset([i for i, ex in enumerate(dataset.examples)
                                  if ex.id == example_id])
            if not len(sub):
                raise ConfigError(f"example id {example_id} not in dataset")
            rows, _, _, _ = _rows_for(sub, features, executor, 1)
            att = shap_values(model, rows[0], target_class)
            ranked = sorted(att.contributions.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
            top = [{"feature_id": fid, "docstring": docstrings.get(fid, ""),
                    "contribution": v} for fid, v in ranked[:top_n]]
            return {"mode": "single", "example_id": example_id,
                    "base_value": att.base_value, "model_output": att.model_output,
                    "contribution_sum": sum(att.contributions.values()),
                    "target_class": target_class, "top_features": top}
        sub = dataset.subset(list(range(min(sample_size, len(dataset)))))
        rows, _, _, _ = _rows_for(sub, features, executor, 1)
        report = report_top_features(model, rows, [ex.id for ex in sub.examples],
                                     sub.labels, docstrings,
                                     target_class=target_class)
        result = {"mode": "sample", "sample_size": report.sample_size,
                  "target_class": target_class,
                  "ranking": [{"feature_id": fid, "docstring": doc, "mean_abs_shap": s}
                              for fid, doc, s in report.ranking]}
        if output_dir is not None:
            outd = Path(output_dir)
            outd.mkdir(parents=True, exist_ok=True)
            (outd / "shap_ranking.csv").write_text(report.ranking_csv(), encoding="utf-8")
            (outd / "shap_scatter.csv").write_text(report.scatter_csv(), encoding="utf-8")
            write_json(outd / "attributions.json", report.attributions)
            result["output_dir"] = str(outd)
        return result
    finally:
        executor.close()


def export_matrix(model_path, dataset_path, out_path, config: dict | None = None) -> dict:
    bundle, _model, features = _load_bundle(model_path)
    dataset = load_dataset(dataset_path, bundle["adapter"], bundle["task"])
    executor = _executor_for_bundle(bundle, config)
    try:
        rows, usable, quarantined, _ = _rows_for(dataset, features, executor, 1)
        lines = ["example_id," + ",".join(usable)]
        for ex, row in zip(dataset.examples, rows):
            cells = [repr(row[fid]) if fid in row else "" for fid in usable]
            lines.append(f"{ex.id}," + ",".join(cells))
        Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        return {"path": str(out_path), "n_features": len(usable),
                "n_examples": len(dataset),
                "quarantined": [q.feature_id for q in quarantined]}
    finally:
        executor.close()
