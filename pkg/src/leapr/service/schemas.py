"""Pydantic request/response models for the HTTP service.

Trainer and forest parameter blocks are passed through as objects; their
semantic validation lives in the run-config layer so the CLI and the service
reject bad configs identically.
"""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class DatasetRef(BaseModel):
    path: str
    adapter: str
    task: str


class HoldoutSpec(BaseModel):
    fraction: float


class ProposerSpec(BaseModel):
    backend: str = "scripted"
    script_path: Optional[str] = None
    model: str = ""
    temperature: float = 1.0
    template_path: Optional[str] = None
    task_text: str = ""
    cheatsheet: Optional[str] = None


class ExecutorSpec(BaseModel):
    kind: str = "native"
    worker_command: list[str] = Field(default_factory=list)
    per_call_timeout: float = 2.0
    load_timeout: float = 10.0
    workers: int = 1
    parallelism: int = 1


class RunConfigModel(BaseModel):
    dataset: DatasetRef
    trainer: str
    output_dir: str
    seed: int = 0
    holdout: Optional[HoldoutSpec] = None
    f2: dict[str, Any] = Field(default_factory=dict)
    did3: dict[str, Any] = Field(default_factory=dict)
    final_forest: dict[str, Any] = Field(default_factory=dict)
    validation_sample_size: int = 10_000
    proposer: ProposerSpec = Field(default_factory=ProposerSpec)
    executor: ExecutorSpec = Field(default_factory=ExecutorSpec)
    positive_class: Optional[str] = None
    resume: bool = False


class TrainRequest(BaseModel):
    config: RunConfigModel


class TrainResponse(BaseModel):
    output_dir: str
    n_features: int
    metrics: dict[str, Any]


class EvalRequest(BaseModel):
    model_path: str
    dataset_path: str
    executor: Optional[ExecutorSpec] = None
    parallelism: int = 1


class EvalResponse(BaseModel):
    metrics: dict[str, Any]


class ExplainRequest(BaseModel):
    model_path: str
    dataset_path: str
    example_id: Optional[int] = None
    sample_size: int = 150
    top_n: int = 3
    target_class: Optional[str] = None
    output_dir: Optional[str] = None
    executor: Optional[ExecutorSpec] = None


class ExportMatrixRequest(BaseModel):
    model_path: str
    dataset_path: str
    out_path: str
    executor: Optional[ExecutorSpec] = None


class ErrorBody(BaseModel):
    error_kind: str
    detail: str
