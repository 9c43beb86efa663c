"""Domain types, dataset ingestion, and adapters that render examples as text.

A dataset is a line-delimited JSON file of records ``{"x": <payload>, "y": <label>}``.
The payload shape depends on the adapter:

- ``chess``: FEN string
- ``text``: raw string
- ``image``: ``{"width": w, "pixels": [...]}`` row-major intensities in [0, 1]
- ``tabular``: flat object of named numeric fields
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DatasetError

ADAPTERS = ("chess", "text", "image", "tabular")

REGRESSION = "regression"
CLASSIFICATION = "classification"

_FEN_PIECES = set("prnbqkPRNBQK")


@dataclass(frozen=True)
class ImageGrid:
    """Grayscale image stored row-major with explicit width."""

    width: int
    height: int
    pixels: tuple[float, ...]

    def at(self, row: int, col: int) -> float:
        return self.pixels[row * self.width + col]


@dataclass(frozen=True)
class Example:
    """One input: a domain payload plus its stable ordinal id."""

    id: int
    payload: Any


@dataclass
class Dataset:
    """Parallel examples/labels with a declared adapter and task."""

    domain: str
    task: str
    examples: list[Example]
    labels: list[Any]
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.examples) != len(self.labels):
            raise DatasetError("examples and labels differ in length")
        if self.task == CLASSIFICATION and not self.classes:
            self.classes = tuple(sorted({str(y) for y in self.labels}))

    def __len__(self) -> int:
        return len(self.examples)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """New Dataset over the given positions. Example ids are preserved."""
        return Dataset(
            domain=self.domain,
            task=self.task,
            examples=[self.examples[i] for i in indices],
            labels=[self.labels[i] for i in indices],
            classes=self.classes,
        )


@dataclass
class Feature:
    """A unit of learned representation: source text mapping an Example to a scalar."""

    id: str
    source: str
    docstring: str = ""
    origin: dict = field(default_factory=dict)
    status: str = "candidate"  # candidate | validated | rejected
    rejection_reason: str | None = None

    @staticmethod
    def from_source(source: str, docstring: str = "", origin: dict | None = None) -> "Feature":
        return Feature(
            id=feature_id(source),
            source=source,
            docstring=docstring,
            origin=dict(origin or {}),
        )


def feature_id(source: str) -> str:
    """64-bit id: truncated SHA-256 of the source text, as 16 hex chars."""
    return hashlib.sha256(source.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# payload validation / (de)serialization per adapter
# ---------------------------------------------------------------------------

def _check_fen(raw) -> str:
    if not isinstance(raw, str) or not raw.strip():
        raise DatasetError("chess payload must be a non-empty FEN string")
    board = raw.split()[0]
    ranks = board.split("/")
    if len(ranks) != 8:
        raise DatasetError(f"FEN board must have 8 ranks, got {len(ranks)}")
    for rank in ranks:
        width = 0
        for ch in rank:
            if ch.isdigit():
                width += int(ch)
            elif ch in _FEN_PIECES:
                width += 1
            else:
                raise DatasetError(f"invalid FEN character {ch!r}")
        if width != 8:
            raise DatasetError(f"FEN rank {rank!r} does not span 8 squares")
    return raw


def _check_text(raw) -> str:
    if not isinstance(raw, str):
        raise DatasetError("text payload must be a string")
    return raw


def _check_image(raw) -> ImageGrid:
    if not isinstance(raw, dict) or "pixels" not in raw or "width" not in raw:
        raise DatasetError('image payload must be {"width": w, "pixels": [...]}')
    width = raw["width"]
    pixels = raw["pixels"]
    if not isinstance(width, int) or width < 1:
        raise DatasetError("image width must be a positive integer")
    if not isinstance(pixels, list) or not pixels:
        raise DatasetError("image pixels must be a non-empty list")
    if len(pixels) % width != 0:
        raise DatasetError(f"{len(pixels)} pixels do not form rows of width {width}")
    vals = []
    for p in pixels:
        if not isinstance(p, (int, float)) or isinstance(p, bool) or not 0.0 <= float(p) <= 1.0:
            raise DatasetError("image intensities must be numbers in [0, 1]")
        vals.append(float(p))
    return ImageGrid(width=width, height=len(vals) // width, pixels=tuple(vals))


def _check_tabular(raw) -> dict[str, float]:
    if not isinstance(raw, dict) or not raw:
        raise DatasetError("tabular payload must be a non-empty object of numeric fields")
    out = {}
    for k, v in raw.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(float(v)):
            raise DatasetError(f"tabular field {k!r} must be a finite number")
        out[str(k)] = float(v)
    return out


_VALIDATORS = {
    "chess": _check_fen,
    "text": _check_text,
    "image": _check_image,
    "tabular": _check_tabular,
}


def payload_to_json(domain: str, payload) -> Any:
    if domain == "image":
        return {"width": payload.width, "pixels": list(payload.pixels)}
    if domain == "tabular":
        return dict(payload)
    return payload


def check_payload(domain: str, raw):
    if domain not in _VALIDATORS:
        raise ConfigError(f"unknown adapter {domain!r}; expected one of {ADAPTERS}")
    return _VALIDATORS[domain](raw)


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _check_label(raw, task: str):
    if task == REGRESSION:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise DatasetError(f"label/task mismatch: regression needs a numeric label, got {raw!r}")
        y = float(raw)
        if not math.isfinite(y):
            raise DatasetError("numeric labels must be finite")
        return y
    if task == CLASSIFICATION:
        if not isinstance(raw, (str, int, bool)):
            raise DatasetError(f"label/task mismatch: classification needs a class symbol, got {raw!r}")
        return str(raw)
    raise ConfigError(f"unknown task {task!r}")


def load_dataset(path, adapter: str, task: str) -> Dataset:
    """Ingest a ``.jsonl`` file of ``{"x": payload, "y": label}`` records."""
    if adapter not in ADAPTERS:
        raise ConfigError(f"unknown adapter {adapter!r}; expected one of {ADAPTERS}")
    examples, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", line=lineno) from exc
            if not isinstance(record, dict) or "x" not in record or "y" not in record:
                raise DatasetError('record must be {"x": ..., "y": ...}', line=lineno)
            try:
                payload = check_payload(adapter, record["x"])
                label = _check_label(record["y"], task)
            except DatasetError as exc:
                raise DatasetError(str(exc), line=lineno) from exc
            examples.append(Example(id=len(examples), payload=payload))
            labels.append(label)
    return Dataset(domain=adapter, task=task, examples=examples, labels=labels)


def save_dataset(dataset: Dataset, path) -> None:
    """Write the canonical ``.jsonl`` form (stable field order, no whitespace drift)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex, y in zip(dataset.examples, dataset.labels):
            record = {"x": payload_to_json(dataset.domain, ex.payload), "y": y}
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


def split_holdout(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic (train, holdout) partition; holdout gets ``floor(fraction * n)``."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"holdout fraction must be in (0, 1), got {fraction}")
    n = len(dataset)
    k = int(n * fraction)
    if k < 1:
        raise ConfigError(f"holdout fraction {fraction} selects no examples from n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    hold = sorted(int(i) for i in perm[:k])
    train = sorted(int(i) for i in perm[k:])
    return dataset.subset(train), dataset.subset(hold)


# ---------------------------------------------------------------------------
# prompt rendering
# ---------------------------------------------------------------------------

def _render_one(domain: str, example: Example, label) -> str:
    if domain == "image":
        # Image payloads never reach the prompt; only the class label does.
        return f"- class label: {label}"
    if domain == "tabular":
        fields = ", ".join(f"{k}={v:g}" for k, v in sorted(example.payload.items()))
        return f"- input: {fields}\n  label: {label}"
    return f"- input: {example.payload}\n  label: {label}"


def render_examples_for_prompt(dataset: Dataset, ids: Sequence[int], adapter: str, budget: int) -> str:
    """Render examples + labels for a prompt, truncating whole examples to fit ``budget``.

    The image adapter renders class labels only, never pixel data.
    """
    by_id = {ex.id: i for i, ex in enumerate(dataset.examples)}
    blocks = []
    used = 0
    for eid in ids:
        if eid not in by_id:
            raise ConfigError(f"example id {eid} not in dataset")
        pos = by_id[eid]
        block = _render_one(adapter, dataset.examples[pos], dataset.labels[pos])
        cost = len(block) + (1 if blocks else 0)  # newline separator
        if used + cost > budget:
            break
        blocks.append(block)
        used += cost
    return "\n".join(blocks)


def label_summary(labels: Sequence, task: str) -> str:
    """One-line distribution summary of a label set, for prompts and leaf reports."""
    if task == CLASSIFICATION:
        counts: dict[str, int] = {}
        for y in labels:
            counts[str(y)] = counts.get(str(y), 0) + 1
        parts = [f"{c}: {counts[c]}" for c in sorted(counts)]
        return f"{len(labels)} examples ({', '.join(parts)})"
    arr = np.asarray(list(labels), dtype=np.float64)
    return (
        f"{len(labels)} examples (label mean {arr.mean():.4f}, "
        f"std {arr.std():.4f}, min {arr.min():.4f}, max {arr.max():.4f})"
    )
