"""Feature evaluation: executors, validation, memoized matrix fills.

Two executors share one contract. The native executor resolves ``native:<name>``
sources against the built-in fixture registry and runs them in-process under a
watchdog. The worker executor ships arbitrary source text to out-of-process
workers over newline-delimited JSON on stdin/stdout and enforces timeouts by
killing and relaunching workers.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Example, Feature, payload_to_json
from .errors import ConfigError, ExecutorError, LeaprError
from .fixtures import FixtureFeature, lookup
from .trees import MatrixView

DEFAULT_CALL_TIMEOUT = 2.0
DEFAULT_LOAD_TIMEOUT = 10.0


@dataclass
class ValidationReport:
    feature_id: str
    outcome: str  # "accepted" | "rejected"
    reason: str | None = None  # load_error | runtime_exception | timeout | non_finite
    offending_example_id: int | None = None
    sample_size: int = 0
    message: str = ""

    @property
    def accepted(self) -> bool:
        return self.outcome == "accepted"


@dataclass
class QuarantineRecord:
    feature_id: str
    kind: str
    example_id: int | None
    message: str


def _check_value(value, index: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ExecutorError("runtime_exception",
                            f"non-numeric return of type {type(value).__name__}",
                            example_index=index)
    v = float(value)
    if not math.isfinite(v):
        raise ExecutorError("non_finite", f"feature returned {v!r}", example_index=index)
    return v


class NativeExecutor:
    """Runs registry-backed features in-process.

    A watchdog thread tracks per-example progress so a stuck call is reported
    as a timeout within roughly one poll interval past the budget.
    """

    kind = "native-registry"

    def __init__(self, adapter: str, per_call_timeout: float = DEFAULT_CALL_TIMEOUT,
                 load_timeout: float = DEFAULT_LOAD_TIMEOUT):
        self.adapter = adapter
        self.per_call_timeout = per_call_timeout
        self.load_timeout = load_timeout
        self._loaded: dict[str, FixtureFeature] = {}
        self._lock = threading.Lock()

    def load(self, feature: Feature) -> None:
        if not feature.source.startswith("native:"):
            raise ExecutorError("load_error",
                                "native executor only loads 'native:<name>' sources")
        name = feature.source.split(":", 1)[1].strip()
        try:
            fixture = lookup(name, self.adapter)
        except ConfigError as exc:
            raise ExecutorError("load_error", str(exc)) from exc
        with self._lock:
            self._loaded[feature.id] = fixture

    def evaluate(self, feature_id: str, examples: Sequence[Example]) -> list[float]:
        with self._lock:
            fixture = self._loaded.get(feature_id)
        if fixture is None:
            raise ExecutorError("load_error", f"feature {feature_id!r} is not loaded")
        state = {"index": 0, "values": [], "error": None, "done": False}

        def run():
            for i, ex in enumerate(examples):
                state["index"] = i
                try:
                    raw = fixture.fn(ex.payload)
                    state["values"].append(_check_value(raw, i))
                except ExecutorError as exc:
                    state["error"] = exc
                    return
                except Exception as exc:  # feature code is arbitrary
                    state["error"] = ExecutorError(
                        "runtime_exception", f"{type(exc).__name__}: {exc}", example_index=i)
                    return
            state["done"] = True

        worker = threading.Thread(target=run, daemon=True)
        worker.start()
        poll = max(0.005, self.per_call_timeout / 10)
        last_index, last_progress = 0, time.monotonic()
        while True:
            worker.join(poll)
            if state["error"] is not None:
                raise state["error"]
            if state["done"]:
                return state["values"]
            now = time.monotonic()
            if state["index"] != last_index:
                last_index, last_progress = state["index"], now
            elif now - last_progress > self.per_call_timeout:
                # the stuck thread is abandoned; it is a daemon and holds no locks
                raise ExecutorError("timeout",
                                    f"no result within {self.per_call_timeout}s",
                                    example_index=state["index"])

    def close(self) -> None:
        pass


class _WorkerProcess:
    """One subprocess speaking the line-delimited JSON protocol."""

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self.loaded: dict[str, str] = {}  # feature_id -> source, for replay
        self._next_id = 0
        self._spawn()

    def _spawn(self):
        self.proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True, bufsize=1, encoding="utf-8",
        )
        self._lines: queue.Queue = queue.Queue()
        reader = threading.Thread(
            target=self._read_loop, args=(self.proc, self._lines), daemon=True)
        reader.start()

    @staticmethod
    def _read_loop(proc, lines: queue.Queue):
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)  # EOF marker

    def kill(self):
        try:
            self.proc.kill()
            self.proc.wait(timeout=5)
        except Exception:
            pass

    def relaunch_and_replay(self, load_timeout: float):
        self.kill()
        self._spawn()
        for fid, source in list(self.loaded.items()):
            self._request({"op": "load", "feature_id": fid, "source": source}, load_timeout)

    def _request(self, body: dict, timeout: float) -> dict:
        self._next_id += 1
        req = {"id": self._next_id, **body}
        try:
            self.proc.stdin.write(json.dumps(req) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ExecutorError("load_error", f"worker pipe closed: {exc}") from exc
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise TimeoutError from None
            if line is None:
                raise ExecutorError("load_error", "worker exited unexpectedly")
            try:
                resp = json.loads(line)
            except json.JSONDecodeError:
                continue  # stray output on stdout; keep waiting for our id
            if resp.get("id") == self._next_id:
                return resp

    def request(self, body: dict, timeout: float) -> dict:
        """Send one request; on timeout kill, relaunch, replay loads, then re-raise."""
        try:
            return self._request(body, timeout)
        except TimeoutError:
            self.relaunch_and_replay(DEFAULT_LOAD_TIMEOUT)
            raise ExecutorError("timeout", f"worker gave no response within {timeout}s") from None


class WorkerExecutor:
    """Pool of out-of-process workers; features are loaded lazily per worker."""

    kind = "worker-process"

    def __init__(self, command: Sequence[str], workers: int = 1,
                 per_call_timeout: float = DEFAULT_CALL_TIMEOUT,
                 load_timeout: float = DEFAULT_LOAD_TIMEOUT,
                 chunk_size: int = 64):
        if workers < 1:
            raise ConfigError("worker pool needs at least one worker")
        self.command = list(command)
        self.per_call_timeout = per_call_timeout
        self.load_timeout = load_timeout
        self.chunk_size = chunk_size
        self._sources: dict[str, str] = {}
        self._pool: queue.Queue = queue.Queue()
        self._all: list[_WorkerProcess] = []
        for _ in range(workers):
            w = _WorkerProcess(self.command)
            self._all.append(w)
            self._pool.put(w)

    def load(self, feature: Feature) -> None:
        self._sources[feature.id] = feature.source
        worker = self._pool.get()
        try:
            self._load_on(worker, feature.id)
        finally:
            self._pool.put(worker)

    def _load_on(self, worker: _WorkerProcess, feature_id: str) -> None:
        source = self._sources[feature_id]
        try:
            resp = worker.request(
                {"op": "load", "feature_id": feature_id, "source": source}, self.load_timeout)
        except ExecutorError as exc:
            if exc.kind == "timeout":
                raise ExecutorError("load_error", f"load timed out: {exc.message}") from exc
            raise
        if not resp.get("ok"):
            err = resp.get("error") or {}
            raise ExecutorError(err.get("kind", "load_error"),
                                err.get("message", "load failed"))
        worker.loaded[feature_id] = source

    def evaluate(self, feature_id: str, examples: Sequence[Example]) -> list[float]:
        if feature_id not in self._sources:
            raise ExecutorError("load_error", f"feature {feature_id!r} is not loaded")
        worker = self._pool.get()
        try:
            if feature_id not in worker.loaded:
                self._load_on(worker, feature_id)
            values: list[float] = []
            for start in range(0, len(examples), self.chunk_size):
                chunk = examples[start:start + self.chunk_size]
                values.extend(self._eval_chunk(worker, feature_id, chunk, start))
            return values
        finally:
            self._pool.put(worker)

    def _eval_chunk(self, worker, feature_id, chunk, offset) -> list[float]:
        payloads = [payload_to_json(_adapter_of(ex), ex.payload) for ex in chunk]
        budget = self.per_call_timeout * len(chunk) + 0.5
        try:
            resp = worker.request(
                {"op": "eval", "feature_id": feature_id, "examples": payloads}, budget)
        except ExecutorError as exc:
            if exc.kind == "timeout":
                raise ExecutorError("timeout", exc.message, example_index=offset) from None
            raise
        if not resp.get("ok"):
            err = resp.get("error") or {}
            idx = err.get("example_index")
            raise ExecutorError(err.get("kind", "runtime_exception"),
                                err.get("message", "evaluation failed"),
                                example_index=offset + idx if idx is not None else None)
        values = resp.get("values")
        if not isinstance(values, list) or len(values) != len(chunk):
            worker.relaunch_and_replay(self.load_timeout)
            raise ExecutorError("runtime_exception",
                                f"protocol violation: expected {len(chunk)} values")
        return [_check_value(v, offset + i) for i, v in enumerate(values)]

    def close(self) -> None:
        for w in self._all:
            try:
                w.request({"op": "shutdown"}, 1.0)
            except LeaprError:
                pass
            w.kill()


def _adapter_of(example: Example) -> str:
    payload = example.payload
    if isinstance(payload, dict):
        return "tabular"
    if isinstance(payload, str):
        # chess and text payloads serialize identically (raw string)
        return "text"
    return "image"


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validation_sample(examples: Sequence[Example], size: int = 10_000) -> list[Example]:
    """First min(size, n) examples; validation per run is deterministic."""
    return list(examples[: min(size, len(examples))])


def validate_feature(feature: Feature, sample: Sequence[Example], executor) -> ValidationReport:
    """Appendix-style screening: reject on exception, timeout, or non-finite value."""
    if not sample:
        raise ConfigError("validation sample must be non-empty")
    try:
        executor.load(feature)
    except ExecutorError as exc:
        feature.status = "rejected"
        feature.rejection_reason = "load_error"
        return ValidationReport(feature.id, "rejected", "load_error",
                                sample_size=len(sample), message=exc.message)
    try:
        executor.evaluate(feature.id, sample)
    except ExecutorError as exc:
        feature.status = "rejected"
        feature.rejection_reason = exc.kind
        offending = sample[exc.example_index].id if exc.example_index is not None else None
        return ValidationReport(feature.id, "rejected", exc.kind,
                                offending_example_id=offending,
                                sample_size=len(sample), message=exc.message)
    feature.status = "validated"
    return ValidationReport(feature.id, "accepted", sample_size=len(sample))


# ---------------------------------------------------------------------------
# memoized matrix
# ---------------------------------------------------------------------------

class FeatureMatrix:
    """Examples x features table of finite scalars with write-once cells."""

    def __init__(self):
        self._rows: dict[int, int] = {}
        self._values: dict[str, np.ndarray] = {}
        self._filled: dict[str, np.ndarray] = {}
        self.cache_hits = 0
        self.cells_computed = 0

    @property
    def feature_ids(self) -> list[str]:
        return list(self._values)

    @property
    def example_ids(self) -> list[int]:
        return list(self._rows)

    def ensure_examples(self, example_ids: Sequence[int]) -> None:
        new = [eid for eid in example_ids if eid not in self._rows]
        if not new:
            return
        for eid in new:
            self._rows[eid] = len(self._rows)
        n = len(self._rows)
        for fid in self._values:
            values = np.zeros(n, dtype=np.float64)
            values[: len(self._values[fid])] = self._values[fid]
            self._values[fid] = values
            filled = np.zeros(n, dtype=bool)
            filled[: len(self._filled[fid])] = self._filled[fid]
            self._filled[fid] = filled

    def ensure_feature(self, feature_id: str) -> None:
        if feature_id not in self._values:
            n = len(self._rows)
            self._values[feature_id] = np.zeros(n, dtype=np.float64)
            self._filled[feature_id] = np.zeros(n, dtype=bool)

    def is_filled(self, feature_id: str, example_id: int) -> bool:
        if feature_id not in self._filled or example_id not in self._rows:
            return False
        return bool(self._filled[feature_id][self._rows[example_id]])

    def set_cell(self, feature_id: str, example_id: int, value: float) -> None:
        row = self._rows[example_id]
        if self._filled[feature_id][row]:
            raise ConfigError(f"cell ({feature_id}, {example_id}) already filled")
        if not math.isfinite(value):
            raise ConfigError("matrix cells must be finite")
        self._values[feature_id][row] = value
        self._filled[feature_id][row] = True
        self.cells_computed += 1

    def get(self, feature_id: str, example_id: int) -> float:
        row = self._rows[example_id]
        if not self._filled[feature_id][row]:
            raise ConfigError(f"cell ({feature_id}, {example_id}) is unfilled")
        return float(self._values[feature_id][row])

    def drop_feature(self, feature_id: str) -> None:
        self._values.pop(feature_id, None)
        self._filled.pop(feature_id, None)

    def column(self, feature_id: str, example_ids: Sequence[int]) -> np.ndarray:
        rows = np.asarray([self._rows[eid] for eid in example_ids], dtype=np.intp)
        if not self._filled[feature_id][rows].all():
            raise ConfigError(f"column {feature_id!r} has unfilled cells")
        return self._values[feature_id][rows].copy()

    def view(self, feature_ids: Sequence[str], example_ids: Sequence[int]) -> MatrixView:
        cols = [self.column(fid, example_ids) for fid in feature_ids]
        values = np.column_stack(cols) if cols else np.zeros((len(example_ids), 0))
        return MatrixView(list(feature_ids), values)


def evaluate_matrix(
    features: Sequence[Feature],
    examples: Sequence[Example],
    executor,
    parallelism: int = 1,
    matrix: FeatureMatrix | None = None,
    chunk: int = 256,
) -> tuple[FeatureMatrix, list[QuarantineRecord]]:
    """Fill missing (feature, example) cells; results do not depend on the
    parallelism degree. A feature that fails after validation is quarantined:
    none of its cells survive and it must not reach any split search.
    """
    for f in features:
        if f.status != "validated":
            raise ConfigError(f"feature {f.id} is not validated (status {f.status!r})")
    if matrix is None:
        matrix = FeatureMatrix()
    matrix.ensure_examples([ex.id for ex in examples])
    jobs = []
    failed: dict[str, QuarantineRecord] = {}
    for f in features:
        matrix.ensure_feature(f.id)
        missing = [ex for ex in examples if not matrix.is_filled(f.id, ex.id)]
        matrix.cache_hits += len(examples) - len(missing)
        if missing:
            try:
                executor.load(f)
            except ExecutorError as exc:
                failed[f.id] = QuarantineRecord(f.id, "load_error", None, exc.message)
                continue
        for start in range(0, len(missing), chunk):
            jobs.append((f, missing[start:start + chunk]))

    def run_job(job):
        feature, batch = job
        try:
            values = executor.evaluate(feature.id, batch)
            return feature.id, batch, values, None
        except ExecutorError as exc:
            return feature.id, batch, None, exc

    if parallelism > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(run_job, jobs))
    else:
        outcomes = [run_job(j) for j in jobs]

    for fid, batch, values, err in outcomes:
        if err is not None and fid not in failed:
            eid = batch[err.example_index].id if err.example_index is not None else None
            failed[fid] = QuarantineRecord(fid, err.kind, eid, err.message)
    for fid, batch, values, err in outcomes:
        if err is None and fid not in failed:
            for ex, v in zip(batch, values):
                matrix.set_cell(fid, ex.id, v)
    for fid in failed:
        matrix.drop_feature(fid)
    return matrix, list(failed.values())
