// Wire protocol: newline-delimited JSON over stdin/stdout.
//
// Requests:  {"id",op:"load",feature_id,source} | {"id",op:"eval",feature_id,examples}
//          | {"id",op:"shutdown"}
// Responses: {"id",ok:true,values:[...]} | {"id",ok:false,error:{kind,message,example_index?}}

export type ErrorKind = "load_error" | "runtime_exception" | "non_finite";

export interface ErrorBody {
  kind: ErrorKind;
  message: string;
  example_index?: number;
}

export type Response =
  | { id: number; ok: true; values: number[] }
  | { id: number; ok: false; error: ErrorBody };

export type Parsed =
  | { kind: "ignore" } // unparseable or unaddressable: no response owed
  | { kind: "bad"; id: number; message: string }
  | { kind: "load"; id: number; featureId: string; source: string }
  | { kind: "eval"; id: number; featureId: string; examples: unknown[] }
  | { kind: "shutdown"; id: number };

export function parseRequest(line: string): Parsed {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    return { kind: "ignore" };
  }
  if (!raw || typeof raw !== "object" || Array.isArray(raw)) {
    return { kind: "ignore" };
  }
  const obj = raw as Record<string, unknown>;
  const id = obj.id;
  if (typeof id !== "number" || !Number.isInteger(id)) {
    return { kind: "ignore" };
  }
  switch (obj.op) {
    case "load":
      if (typeof obj.feature_id !== "string" || typeof obj.source !== "string") {
        return { kind: "bad", id, message: "load needs feature_id and source" };
      }
      return { kind: "load", id, featureId: obj.feature_id, source: obj.source };
    case "eval":
      if (typeof obj.feature_id !== "string" || !Array.isArray(obj.examples)) {
        return { kind: "bad", id, message: "eval needs feature_id and examples" };
      }
      return { kind: "eval", id, featureId: obj.feature_id, examples: obj.examples };
    case "shutdown":
      return { kind: "shutdown", id };
    default:
      return { kind: "bad", id, message: `unknown op: ${String(obj.op)}` };
  }
}

export function ok(id: number, values: number[]): Response {
  return { id, ok: true, values };
}

export function fail(id: number, kind: ErrorKind, message: string, exampleIndex?: number): Response {
  const error: ErrorBody = { kind, message };
  if (exampleIndex !== undefined) error.example_index = exampleIndex;
  return { id, ok: false, error };
}
