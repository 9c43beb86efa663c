"""Built-in feature registry and synthetic task generators.

The registry backs the native executor and the scripted proposer, so the whole
training pipeline runs offline. Features marked ``total=False`` exist to
exercise validation failure paths and are excluded from totality guarantees.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .data import CLASSIFICATION, Dataset, Example, ImageGrid
from .errors import ConfigError

PIECE_VALUES = {"p": 1.0, "n": 3.0, "b": 3.0, "r": 5.0, "q": 9.0, "k": 0.0}

CURLY_QUOTES = "‘’“”"  # ' ' " "
PLAIN_QUOTES = "'\""


@dataclass(frozen=True)
class FixtureFeature:
    name: str
    adapter: str  # adapter name, or "*" for any
    docstring: str
    fn: Callable[[Any], float]
    total: bool = True  # deterministic, finite on all valid payloads


# ---------------------------------------------------------------------------
# evaluation rules
# ---------------------------------------------------------------------------

def material_difference(fen: str) -> float:
    """Weighted piece sum, White minus Black (pawn 1, knight 3, bishop 3, rook 5, queen 9)."""
    board = fen.split()[0]
    score = 0.0
    for ch in board:
        lower = ch.lower()
        if lower in PIECE_VALUES:
            value = PIECE_VALUES[lower]
            score += value if ch.isupper() else -value
    return score


def white_to_move(fen: str) -> float:
    parts = fen.split()
    side = parts[1] if len(parts) > 1 else "w"
    return 1.0 if side == "w" else 0.0


def fraction_chars_in_parentheses(text: str) -> float:
    """Share of characters lying strictly inside matched parentheses.

    Parenthesis characters themselves never count, and unmatched parentheses
    contribute nothing. The denominator is the full text length.
    """
    if not text:
        return 0.0
    inside = [False] * len(text)
    stack: list[int] = []
    for i, ch in enumerate(text):
        if ch == "(":
            stack.append(i)
        elif ch == ")" and stack:
            start = stack.pop()
            for j in range(start + 1, i):
                inside[j] = True
    count = sum(1 for i, ch in enumerate(text) if inside[i] and ch not in "()")
    return count / len(text)


def curly_quote_fraction(text: str) -> float:
    """Curly/typographic quote characters as a fraction of all quote characters."""
    curly = sum(text.count(ch) for ch in CURLY_QUOTES)
    plain = sum(text.count(ch) for ch in PLAIN_QUOTES)
    total = curly + plain
    return curly / total if total else 0.0


def ink_fraction(grid: ImageGrid) -> float:
    """Share of pixels with intensity above 0.5."""
    return sum(1 for p in grid.pixels if p > 0.5) / len(grid.pixels)


def _overflow(_payload) -> float:
    return 1e308 * 1e308  # deliberate inf, for non_finite rejection tests


def _sleepy(_payload) -> float:
    time.sleep(0.5)  # longer than any test timeout
    return 0.0


def _throw(_payload) -> float:
    raise RuntimeError("fixture feature that always raises")


_STATIC: list[FixtureFeature] = [
    FixtureFeature("material_difference", "chess",
                   "Material difference: weighted piece sum, White minus Black "
                   "(pawn 1, knight 3, bishop 3, rook 5, queen 9).",
                   material_difference),
    FixtureFeature("white_to_move", "chess",
                   "1.0 when it is White's turn to move, else 0.0.",
                   white_to_move),
    FixtureFeature("fraction_chars_in_parentheses", "text",
                   "Proportion of characters that lie inside matched parentheses "
                   "(delimiters excluded).",
                   fraction_chars_in_parentheses),
    FixtureFeature("curly_quote_fraction", "text",
                   "Fraction of quotation marks that are curly/typographic rather "
                   "than plain ASCII.",
                   curly_quote_fraction),
    FixtureFeature("ink_fraction", "image",
                   "Share of pixel intensities above 0.5.",
                   ink_fraction),
    FixtureFeature("const_one", "*",
                   "Constant 1.0 regardless of input.",
                   lambda _p: 1.0),
    FixtureFeature("overflow_big", "*",
                   "Returns 1e308 * 1e308; always overflows to infinity.",
                   _overflow, total=False),
    FixtureFeature("sleepy", "*",
                   "Sleeps 0.5 s before returning 0.0; always times out under short budgets.",
                   _sleepy, total=False),
    FixtureFeature("throw_always", "*",
                   "Raises RuntimeError on every call.",
                   _throw, total=False),
]

_BY_NAME = {f.name: f for f in _STATIC}


def lookup(name: str, adapter: str) -> FixtureFeature:
    """Resolve a registry name for an adapter; supports the dynamic tabular families
    ``field:<name>`` (pass-through) and ``inverse_field:<name>`` (1/value)."""
    if name.startswith("field:"):
        if adapter != "tabular":
            raise ConfigError(f"feature {name!r} only applies to the tabular adapter")
        key = name.split(":", 1)[1]
        return FixtureFeature(name, "tabular", f"Value of the {key!r} field.",
                              lambda p, _k=key: float(p[_k]))
    if name.startswith("inverse_field:"):
        if adapter != "tabular":
            raise ConfigError(f"feature {name!r} only applies to the tabular adapter")
        key = name.split(":", 1)[1]
        return FixtureFeature(name, "tabular",
                              f"Reciprocal of the {key!r} field; fails when the field is 0.",
                              lambda p, _k=key: 1.0 / float(p[_k]), total=False)
    feat = _BY_NAME.get(name)
    if feat is None:
        raise ConfigError(f"unknown fixture feature {name!r}")
    if feat.adapter not in ("*", adapter):
        raise ConfigError(f"fixture {name!r} applies to {feat.adapter!r}, not {adapter!r}")
    return feat


def fixture_eval(name: str, example: Example, adapter: str) -> float:
    return float(lookup(name, adapter).fn(example.payload))


def registry_listing() -> list[dict]:
    """Static registry entries as plain dicts, for export to fixture scripts."""
    return [
        {"name": f.name, "adapter": f.adapter, "docstring": f.docstring, "total": f.total}
        for f in _STATIC
    ]


def export_registry(path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(registry_listing(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# payload generators (tests and worker parity need streams of valid payloads)
# ---------------------------------------------------------------------------

_FEN_PIECES = "PNBRQpnbrq"


def _random_fen(rng: np.random.Generator) -> str:
    squares = [""] * 64
    squares[4] = "K"
    squares[60] = "k"
    for pos in rng.choice(64, size=12, replace=False):
        if squares[pos] == "":
            squares[pos] = _FEN_PIECES[rng.integers(0, len(_FEN_PIECES))]
    ranks = []
    for r in range(8):
        row, run = "", 0
        for c in range(8):
            piece = squares[r * 8 + c]
            if piece:
                if run:
                    row += str(run)
                    run = 0
                row += piece
            else:
                run += 1
        if run:
            row += str(run)
        ranks.append(row)
    side = "w" if rng.random() < 0.5 else "b"
    return "/".join(ranks) + f" {side} - - 0 1"


_WORDS = ["alpha", "beta", "gamma", "delta", "note", "words", "quick", "brown"]


def _random_text(rng: np.random.Generator) -> str:
    parts = []
    for _ in range(int(rng.integers(3, 12))):
        word = _WORDS[rng.integers(0, len(_WORDS))]
        roll = rng.random()
        if roll < 0.15:
            word = f"({word})"
        elif roll < 0.25:
            word = f'"{word}"'
        elif roll < 0.35:
            word = f"“{word}”"
        parts.append(word)
    return " ".join(parts)


def random_payload(adapter: str, rng: np.random.Generator):
    if adapter == "chess":
        return _random_fen(rng)
    if adapter == "text":
        return _random_text(rng)
    if adapter == "image":
        side = int(rng.integers(4, 9))
        pixels = tuple(round(float(v), 6) for v in rng.random(side * side))
        return ImageGrid(width=side, height=side, pixels=pixels)
    if adapter == "tabular":
        return {k: round(float(rng.uniform(-4.0, 4.0)), 6) for k in ("a", "b", "c")}
    raise ConfigError(f"unknown adapter {adapter!r}")


def generate_examples(adapter: str, n: int, seed: int) -> list[Example]:
    rng = np.random.default_rng(seed)
    return [Example(id=i, payload=random_payload(adapter, rng)) for i in range(n)]


# ---------------------------------------------------------------------------
# synthetic tasks
# ---------------------------------------------------------------------------

def make_synthetic_task(kind: str, n: int, seed: int) -> tuple[Dataset, dict]:
    """Tabular datasets whose labels are exact functions of registry features.

    - ``threshold``: binary classes from the sign of field ``a``
    - ``quadrant``: four classes from the signs of fields ``a`` and ``b``
    - ``noisy``: the threshold task with 10% of labels flipped
    """
    if n < 4:
        raise ConfigError("synthetic tasks need n >= 4")
    rng = np.random.default_rng(seed)
    fields = rng.uniform(-1.0, 1.0, size=(n, 3))
    fields[fields == 0.0] = 0.5  # signs must be well-defined
    examples = [
        Example(id=i, payload={"a": float(fields[i, 0]), "b": float(fields[i, 1]),
                               "c": float(fields[i, 2])})
        for i in range(n)
    ]
    if kind == "threshold":
        labels = ["1" if fields[i, 0] > 0 else "0" for i in range(n)]
        truth = {"kind": kind, "defining_features": ["field:a"], "rule": "y = 1 when a > 0"}
    elif kind == "quadrant":
        labels = [("p" if fields[i, 0] > 0 else "n") + ("p" if fields[i, 1] > 0 else "n")
                  for i in range(n)]
        truth = {"kind": kind, "defining_features": ["field:a", "field:b"],
                 "rule": "classes from signs of a and b"}
    elif kind == "noisy":
        flips = rng.random(n) < 0.1
        labels = []
        for i in range(n):
            y = fields[i, 0] > 0
            if flips[i]:
                y = not y
            labels.append("1" if y else "0")
        truth = {"kind": kind, "defining_features": ["field:a"],
                 "rule": "y = 1 when a > 0, 10% labels flipped",
                 "flip_rate": float(flips.mean())}
    else:
        raise ConfigError(f"unknown synthetic task kind {kind!r}")
    dataset = Dataset(domain="tabular", task=CLASSIFICATION, examples=examples, labels=labels)
    return dataset, truth
