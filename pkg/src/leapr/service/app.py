"""FastAPI service wrapping the core package.

Error mapping keeps client exit codes honest: config problems become 400 with
``error_kind: config``; mid-run aborts (checkpoint written) become 500 with
``error_kind: runtime_abort``; other package errors are 500 ``runtime``.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import ConfigError, DatasetError, LeaprError, RuntimeAbort
from ..runs import export_matrix, run_eval, run_explain, run_train
from .schemas import (
    EvalRequest,
    EvalResponse,
    ExplainRequest,
    ExportMatrixRequest,
    TrainRequest,
    TrainResponse,
)

app = FastAPI(title="leapr", version="0.1.0")


@app.exception_handler(LeaprError)
async def _leapr_error(request: Request, exc: LeaprError):
    if isinstance(exc, (ConfigError, DatasetError)):
        return JSONResponse(status_code=400,
                            content={"error_kind": "config", "detail": str(exc)})
    if isinstance(exc, RuntimeAbort):
        return JSONResponse(status_code=500,
                            content={"error_kind": "runtime_abort", "detail": str(exc)})
    return JSONResponse(status_code=500,
                        content={"error_kind": "runtime", "detail": str(exc)})


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/train", response_model=TrainResponse)
def train(req: TrainRequest):
    result = run_train(req.config.model_dump())
    return TrainResponse(**result)


@app.post("/eval", response_model=EvalResponse)
def evaluate(req: EvalRequest):
    config = {"parallelism": req.parallelism}
    if req.executor is not None:
        config["executor"] = req.executor.model_dump()
    return EvalResponse(metrics=run_eval(req.model_path, req.dataset_path, config))


@app.post("/explain")
def explain(req: ExplainRequest):
    config = {"executor": req.executor.model_dump()} if req.executor else None
    return run_explain(req.model_path, req.dataset_path,
                       example_id=req.example_id, sample_size=req.sample_size,
                       top_n=req.top_n, target_class=req.target_class,
                       output_dir=req.output_dir, config=config)


@app.post("/export-matrix")
def export(req: ExportMatrixRequest):
    config = {"executor": req.executor.model_dump()} if req.executor else None
    return export_matrix(req.model_path, req.dataset_path, req.out_path, config=config)
