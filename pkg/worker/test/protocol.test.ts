import { describe, expect, it } from "vitest";

import { fail, ok, parseRequest } from "../src/protocol";

describe("parseRequest", () => {
  it("parses the three ops", () => {
    expect(parseRequest('{"id":1,"op":"load","feature_id":"f","source":"s"}'))
      .toEqual({ kind: "load", id: 1, featureId: "f", source: "s" });
    expect(parseRequest('{"id":2,"op":"eval","feature_id":"f","examples":[1]}'))
      .toEqual({ kind: "eval", id: 2, featureId: "f", examples: [1] });
    expect(parseRequest('{"id":3,"op":"shutdown"}')).toEqual({ kind: "shutdown", id: 3 });
  });

  it("ignores frames it cannot address", () => {
    expect(parseRequest("not json").kind).toBe("ignore");
    expect(parseRequest("[1,2]").kind).toBe("ignore");
    expect(parseRequest('"just a string"').kind).toBe("ignore");
    expect(parseRequest('{"op":"load"}').kind).toBe("ignore"); // no id
    expect(parseRequest('{"id":1.5,"op":"load"}').kind).toBe("ignore");
    expect(parseRequest('{"id":"x","op":"load"}').kind).toBe("ignore");
  });

  it("answers addressable but malformed frames with an error", () => {
    expect(parseRequest('{"id":4,"op":"load"}'))
      .toEqual({ kind: "bad", id: 4, message: "load needs feature_id and source" });
    expect(parseRequest('{"id":5,"op":"eval","feature_id":"f"}'))
      .toEqual({ kind: "bad", id: 5, message: "eval needs feature_id and examples" });
    expect(parseRequest('{"id":6,"op":"compute"}'))
      .toEqual({ kind: "bad", id: 6, message: "unknown op: compute" });
  });

  it("builds responses with optional example_index", () => {
    expect(ok(7, [1.5])).toEqual({ id: 7, ok: true, values: [1.5] });
    expect(fail(8, "non_finite", "boom", 2))
      .toEqual({ id: 8, ok: false, error: { kind: "non_finite", message: "boom", example_index: 2 } });
    expect(fail(9, "load_error", "nope"))
      .toEqual({ id: 9, ok: false, error: { kind: "load_error", message: "nope" } });
  });
});
