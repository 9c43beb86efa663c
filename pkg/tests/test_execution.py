import time

import numpy as np
import pytest

from test_fixtures import HAND_POSITIONS

from leapr.data import Example, Feature
from leapr.errors import ConfigError
from leapr.execution import (
    FeatureMatrix,
    NativeExecutor,
    evaluate_matrix,
    validate_feature,
    validation_sample,
)
from leapr.fixtures import generate_examples, make_synthetic_task


def native_feature(name: str) -> Feature:
    return Feature.from_source(f"native:{name}")


def tabular_examples(n=8, seed=0):
    return generate_examples("tabular", n, seed)


# ---------------------------------------------------------------------------
# validation semantics
# ---------------------------------------------------------------------------

def test_constant_feature_accepted():
    report = validate_feature(native_feature("const_one"), tabular_examples(),
                              NativeExecutor("tabular"))
    assert report.accepted
    assert report.sample_size == 8


def test_division_by_zero_rejected_with_offender():
    examples = tabular_examples(6)
    examples[3] = Example(id=examples[3].id, payload={"a": 0.0, "b": 1.0, "c": 1.0})
    feature = native_feature("inverse_field:a")
    report = validate_feature(feature, examples, NativeExecutor("tabular"))
    assert report.outcome == "rejected"
    assert report.reason == "runtime_exception"
    assert report.offending_example_id == examples[3].id
    assert feature.status == "rejected"


def test_overflow_rejected_as_non_finite():
    report = validate_feature(native_feature("overflow_big"), tabular_examples(),
                              NativeExecutor("tabular"))
    assert report.outcome == "rejected"
    assert report.reason == "non_finite"


def test_sleeper_rejected_within_twice_timeout():
    executor = NativeExecutor("tabular", per_call_timeout=0.15)
    start = time.monotonic()
    report = validate_feature(native_feature("sleepy"), tabular_examples(),
                              executor)
    elapsed = time.monotonic() - start
    assert report.outcome == "rejected"
    assert report.reason == "timeout"
    assert elapsed <= 2 * 0.15


def test_unknown_source_is_load_error():
    report = validate_feature(Feature.from_source("native:nope"), tabular_examples(),
                              NativeExecutor("tabular"))
    assert report.outcome == "rejected"
    assert report.reason == "load_error"
    report = validate_feature(Feature.from_source("def f(x): return 1"), tabular_examples(),
                              NativeExecutor("tabular"))
    assert report.reason == "load_error"


def test_validation_short_circuits_on_first_failure():
    calls = []

    class CountingExecutor(NativeExecutor):
        def evaluate(self, feature_id, examples):
            calls.append(len(examples))
            return super().evaluate(feature_id, examples)

    examples = tabular_examples(10)
    examples[2] = Example(id=examples[2].id, payload={"a": 0.0, "b": 1.0, "c": 1.0})
    report = validate_feature(native_feature("inverse_field:a"), examples,
                              CountingExecutor("tabular"))
    assert report.offending_example_id == examples[2].id


def test_validation_sample_size_caps_at_10k():
    examples = tabular_examples(5)
    assert len(validation_sample(examples)) == 5
    assert len(validation_sample(examples, 3)) == 3


# ---------------------------------------------------------------------------
# matrix evaluation
# ---------------------------------------------------------------------------

def _validated(name):
    f = native_feature(name)
    f.status = "validated"
    return f


def test_matrix_parallelism_invariance():
    examples = tabular_examples(40, seed=5)
    feats = [_validated("field:a"), _validated("field:b"), _validated("const_one")]
    executor = NativeExecutor("tabular")
    m1, q1 = evaluate_matrix(feats, examples, executor, parallelism=1)
    m8, q8 = evaluate_matrix(feats, examples, executor, parallelism=8, chunk=7)
    assert not q1 and not q8
    for f in feats:
        for ex in examples:
            assert m1.get(f.id, ex.id) == m8.get(f.id, ex.id)


def test_matrix_memoization_counts_new_cells_only():
    examples = tabular_examples(4, seed=2)
    feats = [_validated("field:a"), _validated("field:b"), _validated("field:c")]
    executor = NativeExecutor("tabular")
    matrix, _ = evaluate_matrix(feats, examples, executor)
    assert matrix.cells_computed == 12
    extra = generate_examples("tabular", 5, seed=77)[4:]  # one fresh example
    extra_ex = Example(id=100, payload=extra[0].payload)
    matrix, _ = evaluate_matrix(feats, examples + [extra_ex], executor, matrix=matrix)
    assert matrix.cells_computed == 15  # exactly 3 new cells
    assert matrix.cache_hits == 12


def test_matrix_rejects_unvalidated_features():
    with pytest.raises(ConfigError):
        evaluate_matrix([native_feature("const_one")], tabular_examples(),
                        NativeExecutor("tabular"))


def test_material_difference_matrix_hand_values():
    examples = [Example(i, fen) for i, (fen, _) in enumerate(HAND_POSITIONS)]
    feature = _validated("material_difference")
    matrix, quarantined = evaluate_matrix([feature], examples, NativeExecutor("chess"))
    assert not quarantined
    for i, (_, expected) in enumerate(HAND_POSITIONS):
        assert matrix.get(feature.id, i) == expected


def test_quarantine_drops_all_cells():
    examples = tabular_examples(10, seed=3)
    examples[7] = Example(id=examples[7].id, payload={"a": 0.0, "b": 1.0, "c": 1.0})
    bad = _validated("inverse_field:a")  # passes on most, fails on example 7
    good = _validated("field:b")
    matrix, quarantined = evaluate_matrix([bad, good], examples,
                                          NativeExecutor("tabular"), chunk=3)
    assert [q.feature_id for q in quarantined] == [bad.id]
    assert quarantined[0].kind == "runtime_exception"
    assert quarantined[0].example_id == examples[7].id
    assert bad.id not in matrix.feature_ids
    for ex in examples:
        assert matrix.is_filled(good.id, ex.id)
        assert not matrix.is_filled(bad.id, ex.id)


def test_matrix_cells_are_write_once():
    matrix = FeatureMatrix()
    matrix.ensure_examples([0])
    matrix.ensure_feature("f")
    matrix.set_cell("f", 0, 1.0)
    with pytest.raises(ConfigError):
        matrix.set_cell("f", 0, 2.0)
    with pytest.raises(ConfigError):
        matrix.set_cell("f", 0, float("inf"))


def test_matrix_content_is_pure_function_of_inputs():
    examples = tabular_examples(25, seed=9)
    feats = [_validated("field:a"), _validated("field:c")]
    runs = []
    for _ in range(2):
        matrix, _ = evaluate_matrix(feats, examples, NativeExecutor("tabular"),
                                    parallelism=4, chunk=4)
        runs.append([matrix.get(f.id, ex.id) for f in feats for ex in examples])
    assert runs[0] == runs[1]


def test_view_matches_cells_and_feeds_trees():
    ds, _ = make_synthetic_task("threshold", 30, seed=1)
    feats = [_validated("field:a"), _validated("field:b")]
    matrix, _ = evaluate_matrix(feats, ds.examples, NativeExecutor("tabular"))
    view = matrix.view([f.id for f in feats], [ex.id for ex in ds.examples])
    assert view.values.shape == (30, 2)
    assert view.values[4, 0] == ds.examples[4].payload["a"]
