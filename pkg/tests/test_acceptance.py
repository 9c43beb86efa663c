"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Criteria 1-9 run fully offline with the native-registry executor. Criteria 10
and 11 exercise the out-of-process worker runtime and are skipped unless the
worker package has been built (see worker/README.md).
"""

import contextlib
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import dyadic_labels, random_split_case, random_tree, tabular_dataset
from oracles import brute_force_best_split, shapley_enumeration

import leapr.runs as runs_mod
from leapr.data import CLASSIFICATION, REGRESSION, Feature
from leapr.did3 import DID3Params, did3_train
from leapr.execution import NativeExecutor, validate_feature
from leapr.explain import forest_shap, tree_shap
from leapr.f2 import F2Params, f2_train
from leapr.fixtures import make_synthetic_task
from leapr.proposer import ScriptedBackend
from leapr.runs import RunConfig
from leapr.trees import (
    ForestParams,
    MatrixView,
    best_split,
    mdi_importance,
    predict,
    train_forest,
)

WORKER_MAIN = Path(__file__).resolve().parents[1] / "worker" / "dist" / "main.js"


@contextlib.contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number:>2} {name}: FAIL")
        raise
    print(f"ACCEPTANCE {number:>2} {name}: PASS")


# ---------------------------------------------------------------------------
# 1. split-search oracle, 1000 seeded datasets, < 60 s
# ---------------------------------------------------------------------------

def test_criterion_1_split_search_oracle():
    with criterion(1, "split-search oracle (1000 seeded datasets)"):
        start = time.monotonic()
        tasks_seen = set()
        for seed in range(1000):
            columns, labels, ids, task, min_leaf = random_split_case(seed)
            tasks_seen.add(task)
            got = best_split(columns, labels, ids, task, min_leaf=min_leaf)
            want = brute_force_best_split(columns, labels, ids, task, min_leaf=min_leaf)
            if want is None:
                assert got is None, f"seed {seed}: engine split where oracle found none"
                continue
            assert got is not None, f"seed {seed}: engine found no split"
            assert got.feature_id == want.feature_id, f"seed {seed}"
            assert got.threshold == want.threshold, f"seed {seed}"
            assert abs(got.impurity_decrease - want.impurity_decrease) <= 1e-12, f"seed {seed}"
            assert (got.left_count, got.right_count) == (want.left_count, want.right_count)
        elapsed = time.monotonic() - start
        assert tasks_seen == {REGRESSION, CLASSIFICATION}
        assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 2. D-ID3 monotonicity over >= 50 seeded runs
# ---------------------------------------------------------------------------

def _did3_error_trajectory(dataset, script, train_params):
    import leapr.did3 as mod
    trajectory = []
    orig = mod.split_leaf

    def spy(state, leaf, accepted, matrix, labels, order, min_leaf, candidate_ids=None):
        before = sum(state.leaf_error(l, labels) for l in state.leaves.values())
        result = orig(state, leaf, accepted, matrix, labels, order, min_leaf, candidate_ids)
        after = sum(state.leaf_error(l, labels) for l in state.leaves.values())
        trajectory.append((before, after, result is not None))
        return result

    mod.split_leaf = spy
    try:
        did3_train(dataset, ScriptedBackend(script, adapter="tabular"),
                   NativeExecutor("tabular"), train_params)
    finally:
        mod.split_leaf = orig
    return trajectory


def test_criterion_2_did3_monotonicity():
    with criterion(2, "D-ID3 error monotonicity (55 seeded runs)"):
        runs = 0
        for seed in range(20):
            ds, _ = make_synthetic_task("threshold", 150, seed=seed)
            traj = _did3_error_trajectory(ds, [["field:a"]] + [[]] * 4, DID3Params(iterations=5, seed=seed))
            _assert_monotone(traj, strict_on_split=True)
            runs += 1
        for seed in range(20):
            ds, _ = make_synthetic_task("quadrant", 150, seed=seed)
            script = [["field:a"], ["field:b"], ["field:b"]] + [[]] * 7
            traj = _did3_error_trajectory(ds, script, DID3Params(iterations=10, seed=seed))
            _assert_monotone(traj, strict_on_split=True)
            runs += 1
        for seed in range(15):
            rng = np.random.default_rng(seed)
            vals = rng.uniform(-1, 1, size=(100, 3))
            labels = [float(v[0] + 0.3 * v[1]) for v in vals]
            ds = tabular_dataset(vals, labels, REGRESSION)
            script = [["field:a"], ["field:b"], ["field:b"], ["field:a"], ["field:b"]] + [[]] * 5
            traj = _did3_error_trajectory(ds, script, DID3Params(iterations=10, seed=seed))
            _assert_monotone(traj, strict_on_split=True)
            runs += 1
        assert runs >= 50


def _assert_monotone(trajectory, strict_on_split):
    for before, after, was_split in trajectory:
        assert after <= before + 1e-9
        if strict_on_split and was_split:
            assert after < before


# ---------------------------------------------------------------------------
# 3. D-ID3 end-to-end on synthetic tasks
# ---------------------------------------------------------------------------

def _training_accuracy(tree, rep, dataset):
    field_of = {f.id: f.source.split(":")[-1] for f in rep.features}
    hits = 0
    for ex, y in zip(dataset.examples, dataset.labels):
        row = {fid: ex.payload[field] for fid, field in field_of.items()}
        if predict(tree, row).cls == y:
            hits += 1
    return hits / len(dataset)


def test_criterion_3_did3_end_to_end():
    with criterion(3, "D-ID3 end-to-end (threshold <=3 its, quadrant <=10 its)"):
        ds, _ = make_synthetic_task("threshold", 500, seed=0)
        backend = ScriptedBackend([["field:a"], [], []], adapter="tabular")
        rep, tree = did3_train(ds, backend, NativeExecutor("tabular"),
                               DID3Params(iterations=3, seed=0))
        assert len(rep.provenance) <= 3
        assert _training_accuracy(tree, rep, ds) == 1.0

        ds, _ = make_synthetic_task("quadrant", 500, seed=0)
        backend = ScriptedBackend([["field:a"], ["field:b"], ["field:b"]] + [[]] * 7,
                                  adapter="tabular")
        rep, tree = did3_train(ds, backend, NativeExecutor("tabular"),
                               DID3Params(iterations=10, seed=0))
        assert len(rep.provenance) <= 10
        assert _training_accuracy(tree, rep, ds) == 1.0


# ---------------------------------------------------------------------------
# 4. F2 end-to-end importance ranking
# ---------------------------------------------------------------------------

def test_criterion_4_f2_end_to_end():
    with criterion(4, "F2 ranks label-defining feature first (importance >= 0.5)"):
        ds, _ = make_synthetic_task("threshold", 500, seed=0)
        backend = ScriptedBackend([
            ["field:a", "field:b"], ["field:c", "const_one"], []], adapter="tabular")
        rep = f2_train(ds, backend, NativeExecutor("tabular"),
                       F2Params(iterations=3, batch_size=10,
                                scoring_forest=ForestParams(n_trees=100, max_depth=50, seed=0),
                                seed=0))
        defining = Feature.from_source("native:field:a").id
        ranked = sorted(rep.importances.items(), key=lambda kv: -kv[1])
        assert ranked[0][0] == defining
        assert rep.importances[defining] >= 0.5


# ---------------------------------------------------------------------------
# 5. validation semantics (exceptions, timeout, non-finite)
# ---------------------------------------------------------------------------

def test_criterion_5_validation_semantics(tmp_path):
    with criterion(5, "validation rejects throw/sleep/overflow; none reachable"):
        executor = NativeExecutor("tabular", per_call_timeout=0.15)
        sample = make_synthetic_task("threshold", 30, seed=0)[0].examples

        throwing = Feature.from_source("native:throw_always")
        sleeping = Feature.from_source("native:sleepy")
        overflowing = Feature.from_source("native:overflow_big")
        assert validate_feature(throwing, sample, executor).reason == "runtime_exception"
        assert validate_feature(sleeping, sample, executor).reason == "timeout"
        assert validate_feature(overflowing, sample, executor).reason == "non_finite"
        for f in (throwing, sleeping, overflowing):
            assert f.status == "rejected"

        # train through both loops with the bad fixtures offered; no rejected
        # feature may be reachable from any trained model artifact
        ds, _ = make_synthetic_task("threshold", 60, seed=1)
        bad_ids = {throwing.id, sleeping.id, overflowing.id}
        backend = ScriptedBackend(
            [["field:a", "overflow_big", "throw_always", "sleepy"], ["field:b"]],
            adapter="tabular")
        rep = f2_train(ds, backend, executor,
                       F2Params(iterations=2, scoring_forest=ForestParams(n_trees=10), seed=0))
        assert all(f.status == "validated" for f in rep.features)
        assert not bad_ids & {f.id for f in rep.features}

        backend = ScriptedBackend(
            [["overflow_big"], ["field:a"], ["sleepy"], ["throw_always"]], adapter="tabular")
        rep, tree = did3_train(ds, backend, executor, DID3Params(iterations=4, seed=0))
        used = {n.feature_id for n in tree.nodes if not n.is_leaf}
        assert not bad_ids & used
        assert all(f.status == "validated" for f in rep.features)


# ---------------------------------------------------------------------------
# 6. SHAP exactness and additivity
# ---------------------------------------------------------------------------

def test_criterion_6_shap_exactness():
    with criterion(6, "tree SHAP == coalition oracle (200 trees); forest additivity"):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            task = REGRESSION if seed % 2 == 0 else CLASSIFICATION
            universe = [f"f{j}" for j in range(4)]
            tree = random_tree(rng, depth=3, feature_ids=universe, task=task, n_classes=2)
            x = {fid: float(np.round(rng.normal(), 3)) for fid in universe}
            if task == REGRESSION:
                att = tree_shap(tree, x)
                phi, base = shapley_enumeration(tree, x, universe)
            else:
                att = tree_shap(tree, x, target_class=tree.classes[0])
                phi, base = shapley_enumeration(tree, x, universe, target_index=0)
            assert abs(att.base_value - base) <= 1e-9
            for fid in universe:
                assert abs(att.contributions.get(fid, 0.0) - phi[fid]) <= 1e-9, (seed, fid)

        rng = np.random.default_rng(7)
        view = MatrixView([f"f{j}" for j in range(4)], rng.normal(size=(150, 4)))
        labels = dyadic_labels(rng, 150)
        forest = train_forest(view, labels, ForestParams(n_trees=12, max_depth=6, seed=1),
                              REGRESSION)
        for _ in range(100):
            x = {f"f{j}": float(rng.normal()) for j in range(4)}
            att = forest_shap(forest, x)
            out = predict(forest, x).value
            gap = abs(att.base_value + sum(att.contributions.values()) - out)
            assert gap <= 1e-6 * max(1.0, abs(out))


# ---------------------------------------------------------------------------
# 7. MDI properties on 100 seeded forests
# ---------------------------------------------------------------------------

def test_criterion_7_mdi_properties():
    with criterion(7, "MDI nonnegative, sums to 1, zero for unused (100 forests)"):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n, k = 60, 4
            values = rng.normal(size=(n, k))
            values[:, k - 1] = 0.0  # constant column can never be split on
            view = MatrixView([f"f{j}" for j in range(k)], values)
            if seed % 2 == 0:
                labels = ["a" if v > 0 else "b" for v in values[:, 0]]
                task = CLASSIFICATION
            else:
                labels = dyadic_labels(rng, n)
                task = REGRESSION
            forest = train_forest(view, labels,
                                  ForestParams(n_trees=8, max_depth=5, seed=seed), task)
            imp = mdi_importance(forest)
            assert all(v >= 0.0 for v in imp.values())
            assert abs(sum(imp.values()) - 1.0) <= 1e-9
            used = {n2.feature_id for t in forest.trees for n2 in t.nodes if not n2.is_leaf}
            for fid in view.feature_ids:
                if fid not in used:
                    assert imp[fid] == 0.0
            assert imp[f"f{k - 1}"] == 0.0


# ---------------------------------------------------------------------------
# 8. paper-parameter conformance of defaults
# ---------------------------------------------------------------------------

def test_criterion_8_default_config_snapshot(tmp_path):
    with criterion(8, "default params: forest 500x50, F2 100x10, D-ID3 1000, 10k sample"):
        forest = ForestParams()
        assert forest.n_trees == 500
        assert forest.max_depth == 50
        f2p = F2Params()
        assert f2p.iterations == 100
        assert f2p.batch_size == 10
        assert DID3Params().iterations == 1000
        assert DID3Params().candidates_per_call == 1

        from leapr.data import save_dataset
        from leapr.persist import write_json
        ds, _ = make_synthetic_task("threshold", 10, seed=0)
        save_dataset(ds, tmp_path / "d.jsonl")
        write_json(tmp_path / "s.json", [])
        cfg = RunConfig.from_dict({
            "dataset": {"path": str(tmp_path / "d.jsonl"), "adapter": "tabular",
                        "task": "classification"},
            "trainer": "f2", "output_dir": str(tmp_path / "out"),
            "proposer": {"backend": "scripted", "script_path": str(tmp_path / "s.json")},
        })
        assert cfg.validation_sample_size == 10_000
        assert cfg.final_forest.n_trees == 500
        assert cfg.final_forest.max_depth == 50
        assert cfg.f2.iterations == 100 and cfg.f2.batch_size == 10
        assert cfg.did3.iterations == 1000


# ---------------------------------------------------------------------------
# 9. byte-identical determinism through the service layer
# ---------------------------------------------------------------------------

def _train_twice(tmp_path, trainer):
    from test_service_cli import make_setup
    outputs = []
    for tag in ("one", "two"):
        cfg, _ = make_setup(tmp_path / f"{trainer}-{tag}", trainer=trainer, iterations=4,
                            script=[["field:a"], ["field:b"], ["field:b"], ["field:c"]])
        runs_mod.run_train(cfg)
        run_dir = tmp_path / f"{trainer}-{tag}" / "run"
        outputs.append(((run_dir / "metrics.json").read_bytes(),
                        (run_dir / "model.json").read_bytes()))
    return outputs


def test_criterion_9_byte_identical_runs(tmp_path):
    with criterion(9, "two identical runs: byte-identical metrics and model JSON"):
        for trainer in ("did3", "f2"):
            (m1, f1), (m2, f2) = _train_twice(tmp_path, trainer)
            assert m1 == m2, f"{trainer}: metrics.json differs"
            assert f1 == f2, f"{trainer}: model.json differs"


# ---------------------------------------------------------------------------
# 10-11. secondary component (worker runtime); skipped until built
# ---------------------------------------------------------------------------

needs_worker = pytest.mark.skipif(not WORKER_MAIN.exists(),
                                  reason="worker runtime not built (run `npm run build` in worker/)")


@needs_worker
def test_criterion_10_worker_parity():
    from test_worker import run_parity_suite
    with criterion(10, "worker parity on 1000 payloads per adapter + error paths"):
        run_parity_suite()


@needs_worker
def test_criterion_11_protocol_fuzz():
    from test_worker import run_protocol_fuzz
    with criterion(11, "protocol fuzz: 10k frames, one response per valid id"):
        run_protocol_fuzz()
