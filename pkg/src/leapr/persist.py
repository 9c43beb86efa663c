"""Canonical JSON artifacts and RNG state round-tripping.

All persisted JSON uses sorted keys and a trailing newline so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .data import Feature


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(obj))
    os.replace(tmp, path)


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = state
    return gen


def feature_to_doc(feature: Feature) -> dict:
    return {
        "id": feature.id,
        "source": feature.source,
        "docstring": feature.docstring,
        "origin": feature.origin,
        "status": feature.status,
        "rejection_reason": feature.rejection_reason,
    }


def feature_from_doc(doc: dict) -> Feature:
    return Feature(
        id=doc["id"],
        source=doc["source"],
        docstring=doc.get("docstring", ""),
        origin=dict(doc.get("origin", {})),
        status=doc.get("status", "candidate"),
        rejection_reason=doc.get("rejection_reason"),
    )
