"""Evaluation metrics and label-preprocessing utilities."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import ConfigError

# Logistic centipawn-to-win-percent conversion; the 0.00368208 constant is the
# Lichess convention (convention-sourced, not derived here).
LICHESS_CP_SCALE = 0.00368208


def centipawns_to_win_percent(cp: float) -> float:
    """Win percentage for the side to benefit, in [0, 100]."""
    return 50.0 + 50.0 * (2.0 / (1.0 + math.exp(-LICHESS_CP_SCALE * cp)) - 1.0)


def rmse(predictions: Sequence[float], labels: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ConfigError("rmse needs equal-length, non-empty inputs")
    return float(np.sqrt(np.mean((p - y) ** 2)))


def pearson_rho(predictions: Sequence[float], labels: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ConfigError("pearson_rho needs equal-length, non-empty inputs")
    sp, sy = p.std(), y.std()
    if sp == 0.0 or sy == 0.0:
        return 0.0
    return float(np.mean((p - p.mean()) * (y - y.mean())) / (sp * sy))


def accuracy(predictions: Sequence[str], labels: Sequence[str]) -> float:
    if len(predictions) != len(labels) or not labels:
        raise ConfigError("accuracy needs equal-length, non-empty inputs")
    hits = sum(1 for p, y in zip(predictions, labels) if p == y)
    return hits / len(labels)


def f1_per_class(predictions: Sequence[str], labels: Sequence[str],
                 classes: Sequence[str]) -> dict[str, float]:
    scores = {}
    for c in classes:
        tp = sum(1 for p, y in zip(predictions, labels) if p == c and y == c)
        fp = sum(1 for p, y in zip(predictions, labels) if p == c and y != c)
        fn = sum(1 for p, y in zip(predictions, labels) if p != c and y == c)
        denom = 2 * tp + fp + fn
        scores[c] = (2 * tp / denom) if denom else 0.0
    return scores


def f1_score(predictions: Sequence[str], labels: Sequence[str],
             classes: Sequence[str], positive_class: str | None = None) -> float:
    """Binary tasks report the positive class (default: last class in the
    alphabet); multiclass tasks report the macro average."""
    per_class = f1_per_class(predictions, labels, classes)
    if len(classes) == 2:
        pos = positive_class if positive_class is not None else classes[-1]
        if pos not in per_class:
            raise ConfigError(f"unknown positive class {pos!r}")
        return per_class[pos]
    return sum(per_class.values()) / len(per_class)


def classification_metrics(predictions, labels, classes,
                           positive_class: str | None = None) -> dict:
    return {
        "accuracy": accuracy(predictions, labels),
        "f1": f1_score(predictions, labels, classes, positive_class),
        "f1_per_class": f1_per_class(predictions, labels, classes),
        "n": len(labels),
    }


def regression_metrics(predictions, labels) -> dict:
    return {
        "rmse": rmse(predictions, labels),
        "pearson_rho": pearson_rho(predictions, labels),
        "n": len(labels),
    }
