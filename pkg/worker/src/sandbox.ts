// Compile feature source text in an isolated vm context.
//
// Each feature gets its own context holding only allowlisted globals, so one
// feature's state is never observable by another. The source must define
// `function feature(input)`.

import vm from "node:vm";

// modules a feature may require(), per adapter; the domain helpers arrive as
// the call argument instead, so the default allowlists are empty
const MODULE_ALLOWLIST: Record<string, string[]> = {
  chess: [],
  text: [],
  image: [],
  tabular: [],
};

export class LoadError extends Error {}

export interface LoadedFeature {
  id: string;
  fn: (input: unknown) => unknown;
}

function baseGlobals(adapter: string): Record<string, unknown> {
  const allowed = MODULE_ALLOWLIST[adapter] ?? [];
  return {
    Math,
    JSON,
    Number,
    String,
    Boolean,
    Array,
    Object,
    RegExp,
    Map,
    Set,
    parseInt,
    parseFloat,
    isNaN,
    isFinite,
    NaN,
    Infinity,
    undefined,
    require: (name: string) => {
      if (!allowed.includes(name)) {
        throw new LoadError(`module not allowed: ${name}`);
      }
      // an allowlisted module would be injected here; none are by default
      throw new LoadError(`module not available: ${name}`);
    },
  };
}

function syntaxErrorLine(err: Error): number | null {
  const m = /feature\.js:(\d+)/.exec(err.stack ?? "");
  return m ? Number(m[1]) : null;
}

export function compileFeature(id: string, source: string, adapter: string): LoadedFeature {
  const context = vm.createContext(baseGlobals(adapter), {
    codeGeneration: { strings: false, wasm: false },
  });
  let script: vm.Script;
  try {
    script = new vm.Script(
      `${source}\n;typeof feature === "function" ? feature : undefined`,
      { filename: "feature.js" },
    );
  } catch (err) {
    const line = err instanceof Error ? syntaxErrorLine(err) : null;
    const msg = err instanceof Error ? err.message : String(err);
    throw new LoadError(line === null ? `syntax error: ${msg}` : `syntax error at line ${line}: ${msg}`);
  }
  let fn: unknown;
  try {
    fn = script.runInContext(context, { timeout: 2000 });
  } catch (err) {
    if (err instanceof LoadError) throw err;
    const msg = err instanceof Error ? `${err.name}: ${err.message}` : String(err);
    throw new LoadError(`load failed: ${msg}`);
  }
  if (typeof fn !== "function") {
    throw new LoadError("source must define `function feature(input)`");
  }
  return { id, fn: fn as (input: unknown) => unknown };
}
