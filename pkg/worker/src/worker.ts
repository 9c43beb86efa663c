// Single-threaded request loop: one response per addressable request, in
// order, and no frame may kill the loop.

import readline from "node:readline";
import { Readable, Writable } from "node:stream";

import { Adapter, decodePayload } from "./adapters";
import { fail, ok, parseRequest, Response } from "./protocol";
import { compileFeature, LoadedFeature, LoadError } from "./sandbox";

export interface WorkerOptions {
  adapter: Adapter;
  input: Readable;
  output: Writable;
  onShutdown?: () => void;
}

export function runWorker(opts: WorkerOptions): void {
  const features = new Map<string, LoadedFeature>();
  const rl = readline.createInterface({ input: opts.input, terminal: false });

  const respond = (resp: Response) => {
    opts.output.write(JSON.stringify(resp) + "\n");
  };

  rl.on("line", (line: string) => {
    let resp: Response | null = null;
    let shutdown = false;
    try {
      const req = parseRequest(line);
      switch (req.kind) {
        case "ignore":
          return;
        case "bad":
          resp = fail(req.id, "runtime_exception", req.message);
          break;
        case "load":
          resp = handleLoad(features, opts.adapter, req.id, req.featureId, req.source);
          break;
        case "eval":
          resp = handleEval(features, opts.adapter, req.id, req.featureId, req.examples);
          break;
        case "shutdown":
          resp = ok(req.id, []);
          shutdown = true;
          break;
      }
    } catch (err) {
      // last-resort guard: the loop itself must survive anything
      process.stderr.write(`worker internal error: ${String(err)}\n`);
      return;
    }
    if (resp) respond(resp);
    if (shutdown) {
      rl.close();
      if (opts.onShutdown) opts.onShutdown();
    }
  });
}

export function handleLoad(
  features: Map<string, LoadedFeature>,
  adapter: Adapter,
  id: number,
  featureId: string,
  source: string,
): Response {
  try {
    features.set(featureId, compileFeature(featureId, source, adapter));
    return ok(id, []);
  } catch (err) {
    const message = err instanceof LoadError ? err.message
      : err instanceof Error ? `${err.name}: ${err.message}` : String(err);
    return fail(id, "load_error", message);
  }
}

export function handleEval(
  features: Map<string, LoadedFeature>,
  adapter: Adapter,
  id: number,
  featureId: string,
  examples: unknown[],
): Response {
  const feature = features.get(featureId);
  if (!feature) {
    return fail(id, "load_error", `feature ${featureId} is not loaded`);
  }
  const values: number[] = [];
  for (let i = 0; i < examples.length; i++) {
    let result: unknown;
    try {
      const input = decodePayload(adapter, examples[i]);
      result = feature.fn(input);
    } catch (err) {
      const message = err instanceof Error ? `${err.name}: ${err.message}` : String(err);
      return fail(id, "runtime_exception", message, i);
    }
    if (typeof result !== "number") {
      return fail(id, "runtime_exception", `non-numeric return of type ${typeof result}`, i);
    }
    if (!Number.isFinite(result)) {
      return fail(id, "non_finite", `feature returned ${result}`, i);
    }
    values.push(result);
  }
  return ok(id, values);
}
