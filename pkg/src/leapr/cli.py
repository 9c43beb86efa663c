"""Thin-client CLI.

Every subcommand talks to the HTTP service: either a remote one (``--server``)
or an in-process instance of the same app, so both paths exercise identical
request handling. Exit codes: 0 success, 2 config error, 3 runtime abort
(checkpoint written).
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .persist import read_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME_ABORT = 3


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service.app import app
    return TestClient(app)


def _finish(resp: httpx.Response) -> dict:
    try:
        body = resp.json()
    except ValueError:
        body = {"detail": resp.text}
    if resp.status_code == 200:
        return body
    kind = body.get("error_kind", "")
    detail = body.get("detail", body)
    click.echo(f"error ({kind or resp.status_code}): {detail}", err=True)
    if resp.status_code in (400, 422):
        sys.exit(EXIT_CONFIG)
    if kind == "runtime_abort":
        sys.exit(EXIT_RUNTIME_ABORT)
    sys.exit(1)


def _apply_overrides(config: dict, overrides: tuple[str, ...]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise click.UsageError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except ValueError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config


@click.group()
def main():
    """Train, evaluate, and explain LeaPR models."""


@main.command()
@click.option("-c", "--config", "config_path", required=True,
              type=click.Path(exists=True), help="Run config JSON file.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config key (dotted paths, JSON values).")
@click.option("--server", default=None, help="Service URL; default runs in-process.")
def train(config_path, overrides, server):
    """Run a training loop and write run artifacts."""
    config = _apply_overrides(read_json(config_path), overrides)
    with _client(server) as client:
        body = _finish(client.post("/train", json={"config": config}))
    click.echo(json.dumps(body, indent=2, sort_keys=True))


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--json", "json_out", default=None, type=click.Path(),
              help="Also write metrics JSON here.")
@click.option("--server", default=None)
def eval_cmd(model_path, dataset_path, json_out, server):
    """Evaluate a model bundle on a dataset and print a metrics table."""
    with _client(server) as client:
        body = _finish(client.post("/eval", json={
            "model_path": model_path, "dataset_path": dataset_path}))
    metrics = body["metrics"]
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, float):
            click.echo(f"{key:<20} {value:.6f}")
        elif not isinstance(value, (dict, list)):
            click.echo(f"{key:<20} {value}")
    if json_out:
        with open(json_out, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--example-id", type=int, default=None,
              help="Explain a single example instead of a sample.")
@click.option("--sample-size", type=int, default=150)
@click.option("--top-n", type=int, default=3)
@click.option("--target-class", default=None)
@click.option("--output-dir", default=None, type=click.Path())
@click.option("--server", default=None)
def explain(model_path, dataset_path, example_id, sample_size, top_n,
            target_class, output_dir, server):
    """SHAP reports: per-example top features, or a dataset-level ranking."""
    with _client(server) as client:
        body = _finish(client.post("/explain", json={
            "model_path": model_path, "dataset_path": dataset_path,
            "example_id": example_id, "sample_size": sample_size,
            "top_n": top_n, "target_class": target_class,
            "output_dir": output_dir}))
    if body["mode"] == "single":
        click.echo(f"example {body['example_id']}: output={body['model_output']:.6f} "
                   f"base={body['base_value']:.6f}")
        for row in body["top_features"]:
            click.echo(f"  {row['contribution']:+.6f}  {row['feature_id']}  {row['docstring']}")
    else:
        click.echo(f"sample_size={body['sample_size']}")
        for i, row in enumerate(body["ranking"][:top_n], start=1):
            click.echo(f"{i}. {row['mean_abs_shap']:.6f}  {row['feature_id']}  {row['docstring']}")
        if body.get("output_dir"):
            click.echo(f"reports written to {body['output_dir']}")


@main.command("export-matrix")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--server", default=None)
def export_matrix_cmd(model_path, dataset_path, out_path, server):
    """Write the feature matrix for a dataset as CSV."""
    with _client(server) as client:
        body = _finish(client.post("/export-matrix", json={
            "model_path": model_path, "dataset_path": dataset_path,
            "out_path": out_path}))
    click.echo(f"wrote {body['n_examples']}x{body['n_features']} matrix to {body['path']}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
