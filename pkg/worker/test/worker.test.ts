import { spawn } from "node:child_process";
import path from "node:path";
import readline from "node:readline";
import { describe, expect, it } from "vitest";

import { decodePayload } from "../src/adapters";
import { parseFen } from "../src/chess";
import { handleEval, handleLoad } from "../src/worker";
import { LoadedFeature } from "../src/sandbox";

const START_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

describe("chess board helper", () => {
  it("parses the starting position", () => {
    const board = parseFen(START_FEN);
    expect(board.turn).toBe("w");
    expect(board.pieces()).toHaveLength(32);
    expect(board.at(0, 0)).toMatchObject({ type: "r", color: "b" });
    expect(board.at(7, 4)).toMatchObject({ type: "k", color: "w" });
    expect(board.at(4, 4)).toBeNull();
  });

  it("rejects malformed boards", () => {
    expect(() => parseFen("8/8 w - - 0 1")).toThrow(/8 ranks/);
    expect(() => parseFen("9/8/8/8/8/8/8/8 w - - 0 1")).toThrow();
  });
});

describe("payload decoding", () => {
  it("decodes images with derived height", () => {
    const img = decodePayload("image", { width: 2, pixels: [0, 0.25, 0.5, 1] }) as any;
    expect(img.height).toBe(2);
    expect(img.at(1, 1)).toBe(1);
  });

  it("rejects ragged images and bad payload shapes", () => {
    expect(() => decodePayload("image", { width: 3, pixels: [0, 1] })).toThrow();
    expect(() => decodePayload("chess", 42)).toThrow();
    expect(() => decodePayload("tabular", [1, 2])).toThrow();
  });
});

describe("handleLoad / handleEval", () => {
  const features = new Map<string, LoadedFeature>();

  it("loads the material twin and evaluates the start position to 0", () => {
    const fs = require("node:fs");
    const source = fs.readFileSync(path.join(__dirname, "..", "twins", "material_difference.js"), "utf-8");
    const resp = handleLoad(features, "chess", 1, "mat", source);
    expect(resp).toMatchObject({ ok: true });
    const evalResp = handleEval(features, "chess", 2, "mat", [START_FEN]);
    expect(evalResp).toMatchObject({ ok: true, values: [0] });
  });

  it("reports the failing example index", () => {
    handleLoad(features, "tabular", 3, "div", "function feature(r) { var v = 1 / r.a; if (!isFinite(v)) { throw new Error('division by zero'); } return v; }");
    const resp = handleEval(features, "tabular", 4, "div", [{ a: 1 }, { a: 2 }, { a: 0 }, { a: 4 }, { a: 5 }]);
    expect(resp).toMatchObject({ ok: false, error: { kind: "runtime_exception", example_index: 2 } });
  });

  it("flags non-finite and non-numeric returns", () => {
    handleLoad(features, "tabular", 5, "inf", "function feature(r) { return 1e308 * 1e308; }");
    expect(handleEval(features, "tabular", 6, "inf", [{ a: 1 }]))
      .toMatchObject({ ok: false, error: { kind: "non_finite", example_index: 0 } });
    handleLoad(features, "tabular", 7, "str", "function feature(r) { return 'nope'; }");
    expect(handleEval(features, "tabular", 8, "str", [{ a: 1 }]))
      .toMatchObject({ ok: false, error: { kind: "runtime_exception", example_index: 0 } });
  });

  it("answers eval of an unloaded feature with load_error", () => {
    expect(handleEval(features, "tabular", 9, "ghost", [{ a: 1 }]))
      .toMatchObject({ ok: false, error: { kind: "load_error" } });
  });
});

describe("spawned worker process", () => {
  const MAIN = path.join(__dirname, "..", "dist", "main.js");

  function talk(lines: string[], adapter = "tabular"): Promise<string[]> {
    return new Promise((resolve, reject) => {
      const proc = spawn("node", [MAIN, adapter], { stdio: ["pipe", "pipe", "inherit"] });
      const out: string[] = [];
      const rl = readline.createInterface({ input: proc.stdout });
      rl.on("line", (line) => out.push(line));
      proc.on("close", () => resolve(out));
      proc.on("error", reject);
      proc.stdin.write(lines.join("\n") + "\n");
    });
  }

  it("round-trips load/eval/shutdown", async () => {
    const out = await talk([
      JSON.stringify({ id: 1, op: "load", feature_id: "f", source: "function feature(r) { return r.a * 2; }" }),
      JSON.stringify({ id: 2, op: "eval", feature_id: "f", examples: [{ a: 1 }, { a: 3 }] }),
      JSON.stringify({ id: 3, op: "shutdown" }),
    ]);
    const responses = out.map((l) => JSON.parse(l));
    expect(responses).toEqual([
      { id: 1, ok: true, values: [] },
      { id: 2, ok: true, values: [2, 6] },
      { id: 3, ok: true, values: [] },
    ]);
  });

  it("survives garbage frames and answers every addressable id exactly once", async () => {
    const out = await talk([
      "garbage {{{",
      '{"no_id": true}',
      '{"id": 10, "op": "bogus"}',
      '"quoted string"',
      JSON.stringify({ id: 11, op: "load", feature_id: "g", source: "function feature(r) { return 1; }" }),
      JSON.stringify({ id: 12, op: "eval", feature_id: "g", examples: [{}] }),
      JSON.stringify({ id: 13, op: "shutdown" }),
    ]);
    const responses = out.map((l) => JSON.parse(l));
    const ids = responses.map((r) => r.id);
    expect(ids).toEqual([10, 11, 12, 13]);
    expect(responses[0].ok).toBe(false);
    expect(responses[2]).toEqual({ id: 12, ok: true, values: [1] });
  });

  it("requires a known adapter argument", async () => {
    const code: number = await new Promise((resolve) => {
      const proc = spawn("node", [MAIN, "audio"], { stdio: ["pipe", "ignore", "ignore"] });
      proc.on("close", (c) => resolve(c ?? -1));
    });
    expect(code).toBe(2);
  });
});
