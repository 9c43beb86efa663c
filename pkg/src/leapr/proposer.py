"""Candidate-feature proposal: prompt construction, backends, response parsing.

Two backends: an OpenAI-compatible chat-completions client for real runs, and a
scripted backend that replays fixture-registry names for offline, reproducible
training. Prompt construction is a pure function of (context, template).
"""

from __future__ import annotations

import ast
import math
import os
import re
import string
import time
from dataclasses import dataclass, field
from importlib import resources

import httpx

from .data import feature_id
from .errors import ConfigError, ProposerTransportError, TemplateError
from .fixtures import lookup

ENV_API_KEY = "LEAPR_API_KEY"
ENV_API_BASE = "LEAPR_API_BASE"
DEFAULT_API_BASE = "https://api.openai.com/v1"

F2_SLOTS = {"task", "cheatsheet", "exemplars", "batch_size"}
DID3_SLOTS = {"task", "cheatsheet", "path", "samples", "batch_size"}


@dataclass
class Exemplar:
    docstring: str
    source: str
    score: float


@dataclass
class PathStep:
    docstring: str
    threshold: float
    went_left: bool


@dataclass
class ProposalContext:
    mode: str  # "f2" | "did3"
    task_text: str
    adapter: str
    cheatsheet: str
    batch_size: int
    exemplars_top: list[Exemplar] = field(default_factory=list)
    exemplars_random: list[Exemplar] = field(default_factory=list)
    path: list[PathStep] = field(default_factory=list)
    samples_text: str = ""
    label_summary: str = ""

    def __post_init__(self):
        for ex in self.exemplars_top + self.exemplars_random:
            if not math.isfinite(ex.score):
                raise ConfigError(f"exemplar score must be finite, got {ex.score!r}")


@dataclass
class FeatureCandidate:
    source: str
    docstring: str
    span: tuple[int, int] = (0, 0)


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------

CHEATSHEETS = {
    "chess": """\
The function signature is `function feature(board)`. The board object offers:
- board.fen            full FEN string
- board.turn           "w" or "b"
- board.pieces()       array of {type, color, row, col}; type in p,n,b,r,q,k;
                       color "w"/"b"; row 0 is rank 8, col 0 is file a
- board.at(row, col)   piece at a square, or null
Standard Math and string facilities are available.""",
    "text": """\
The function signature is `function feature(text)` where text is the raw
string. Standard string methods, RegExp, and Math are available.""",
    "image": """\
The function signature is `function feature(image)`. The image object offers:
- image.width, image.height
- image.pixels         row-major array of intensities in [0, 1]
- image.at(row, col)   intensity at a pixel
Standard Math and array facilities are available.""",
    "tabular": """\
The function signature is `function feature(record)` where record is a plain
object of named numeric fields. Standard Math facilities are available.""",
}


def default_cheatsheet(adapter: str) -> str:
    if adapter not in CHEATSHEETS:
        raise ConfigError(f"no cheatsheet for adapter {adapter!r}")
    return CHEATSHEETS[adapter]


def default_template(mode: str, adapter: str) -> str:
    name = f"{mode}_{adapter}.txt"
    try:
        return resources.files("leapr.templates").joinpath(name).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"no bundled template {name!r}") from exc


def load_template(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _render_template(template: str, slots: dict, required: set[str]) -> str:
    present = {name for _, name, _, _ in string.Formatter().parse(template) if name}
    missing = required - present
    if missing:
        raise TemplateError(f"template is missing required slot(s): "
                            f"{', '.join('{%s}' % s for s in sorted(missing))}")
    unknown = present - set(slots)
    if unknown:
        raise TemplateError(f"template uses unknown slot(s): "
                            f"{', '.join('{%s}' % s for s in sorted(unknown))}")
    return template.format(**slots)


def _render_exemplars(ctx: ProposalContext) -> str:
    top = sorted(ctx.exemplars_top, key=lambda e: -e.score)
    blocks = []
    for ex in top:
        blocks.append(f"### importance {ex.score:.3f}\n# {ex.docstring}\n{ex.source}")
    for ex in ctx.exemplars_random:
        blocks.append(f"### importance {ex.score:.3f} (random sample)\n# {ex.docstring}\n{ex.source}")
    if not blocks:
        return "(no existing features yet; this is the first round)"
    return "\n\n".join(blocks)


def _render_path(path: list[PathStep]) -> str:
    if not path:
        return "No constraints yet: this is the root node."
    lines = []
    for step in path:
        op, side = ("<", "left") if step.went_left else (">=", "right")
        lines.append(f"- [{step.docstring}] {op} {step.threshold:g} (went {side})")
    return "\n".join(lines)


def build_f2_prompt(ctx: ProposalContext, template: str) -> list[dict]:
    if ctx.mode != "f2":
        raise ConfigError(f"expected an f2 context, got mode {ctx.mode!r}")
    text = _render_template(template, {
        "task": ctx.task_text,
        "cheatsheet": ctx.cheatsheet,
        "exemplars": _render_exemplars(ctx),
        "batch_size": ctx.batch_size,
    }, F2_SLOTS)
    return [{"role": "user", "content": text}]


def build_did3_prompt(ctx: ProposalContext, template: str) -> list[dict]:
    if ctx.mode != "did3":
        raise ConfigError(f"expected a did3 context, got mode {ctx.mode!r}")
    samples = ctx.samples_text if ctx.samples_text else "(no examples rendered)"
    if ctx.label_summary:
        samples = f"Label summary: {ctx.label_summary}\n{samples}"
    text = _render_template(template, {
        "task": ctx.task_text,
        "cheatsheet": ctx.cheatsheet,
        "path": _render_path(ctx.path),
        "samples": samples,
        "batch_size": ctx.batch_size,
    }, DID3_SLOTS)
    return [{"role": "user", "content": text}]


# ---------------------------------------------------------------------------
# response parsing
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\n(.*?)```", re.DOTALL)
_COMMENT = re.compile(r"^\s*(?:#|//)\s?(.*)$")


def _docstring_of(source: str) -> str:
    try:
        tree = ast.parse(source)
    except SyntaxError:
        tree = None
    if tree is not None:
        for node in ast.walk(tree):
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                doc = ast.get_docstring(node)
                if doc:
                    return doc.strip()
        doc = ast.get_docstring(tree)
        if doc:
            return doc.strip()
    for line in source.splitlines():
        m = _COMMENT.match(line)
        if m and m.group(1).strip():
            return m.group(1).strip()
    return ""


def parse_feature_sources(response_text: str) -> list[FeatureCandidate]:
    """Extract fenced code blocks as candidates, deduplicated by source hash."""
    seen = set()
    out = []
    for m in _FENCE.finditer(response_text):
        source = m.group(1).strip()
        if not source:
            continue
        fid = feature_id(source)
        if fid in seen:
            continue
        seen.add(fid)
        out.append(FeatureCandidate(source=source, docstring=_docstring_of(source),
                                    span=m.span()))
    return out


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

class OpenAIChatBackend:
    """Single-turn chat completions over an OpenAI-compatible HTTP endpoint."""

    def __init__(self, model: str, temperature: float = 1.0,
                 base_url: str | None = None, api_key: str | None = None,
                 max_retries: int = 3, backoff: float = 1.0, timeout: float = 120.0,
                 sleep=time.sleep):
        self.model = model
        self.temperature = temperature
        self.base_url = (base_url or os.environ.get(ENV_API_BASE, DEFAULT_API_BASE)).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._sleep = sleep

    def complete(self, messages: list[dict]) -> str:
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"}
        body = {"model": self.model, "messages": messages, "temperature": self.temperature}
        last = None
        for attempt in range(self.max_retries):
            try:
                resp = httpx.post(url, json=body, headers=headers, timeout=self.timeout)
                if resp.status_code in (429, 500, 502, 503, 504):
                    last = f"HTTP {resp.status_code}"
                else:
                    resp.raise_for_status()
                    data = resp.json()
                    return data["choices"][0]["message"]["content"]
            except httpx.HTTPStatusError as exc:
                raise ProposerTransportError(f"chat completion failed: {exc}") from exc
            except (httpx.TransportError, KeyError, ValueError) as exc:
                last = str(exc)
            if attempt < self.max_retries - 1:
                self._sleep(self.backoff * (2 ** attempt))
        raise ProposerTransportError(f"chat completion failed after "
                                     f"{self.max_retries} attempts: {last}")


class ScriptedBackend:
    """Deterministic stand-in: replays fixture-registry names per iteration.

    The script is a JSON list of per-iteration name lists, or an object keyed
    by mode (``{"f2": [...], "did3": [...]}``). Exhausted scripts yield nothing.
    """

    def __init__(self, script, adapter: str):
        self.adapter = adapter
        if isinstance(script, dict):
            self._per_mode = {m: list(entries) for m, entries in script.items()}
        else:
            self._per_mode = {"f2": list(script), "did3": list(script)}
        self._cursor = {m: 0 for m in self._per_mode}

    def next_candidates(self, mode: str) -> list[FeatureCandidate]:
        entries = self._per_mode.get(mode, [])
        i = self._cursor.get(mode, 0)
        if i >= len(entries):
            return []
        self._cursor[mode] = i + 1
        out = []
        for name in entries[i]:
            fixture = lookup(name, self.adapter)
            out.append(FeatureCandidate(source=f"native:{name}", docstring=fixture.docstring))
        return out


def propose(backend, messages: list[dict], batch_size: int, mode: str = "f2") -> list[FeatureCandidate]:
    """One proposal round. LLM backends make a single chat call and parse fenced
    code blocks; empty parses are not fatal. Scripted backends pop fixtures."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if isinstance(backend, ScriptedBackend):
        return backend.next_candidates(mode)[:batch_size]
    text = backend.complete(messages)
    return parse_feature_sources(text)[:batch_size]
