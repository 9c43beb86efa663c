"""Scriptable stdio worker used to test the framework side of the wire
protocol (timeouts, kill/relaunch/replay, error mapping) without the real
worker runtime. Behavior is keyed by the feature source text."""

import json
import os
import sys
import time


def main():
    loaded = {}
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            continue
        rid = req.get("id")
        op = req.get("op")
        if op == "shutdown":
            print(json.dumps({"id": rid, "ok": True, "values": []}), flush=True)
            return
        if op == "load":
            source = req.get("source", "")
            if source == "fail_load":
                print(json.dumps({"id": rid, "ok": False, "error": {
                    "kind": "load_error", "message": "mock load failure"}}), flush=True)
            else:
                loaded[req["feature_id"]] = source
                print(json.dumps({"id": rid, "ok": True, "values": []}), flush=True)
            continue
        if op == "eval":
            source = loaded.get(req.get("feature_id"), "")
            examples = req.get("examples", [])
            if source.startswith("sleep:"):
                time.sleep(float(source.split(":")[1]))
            if source == "noisy_stdout":
                print("stray non-JSON line", flush=True)
            if source.startswith("raise_at:"):
                k = int(source.split(":")[1])
                if k < len(examples):
                    print(json.dumps({"id": rid, "ok": False, "error": {
                        "kind": "runtime_exception", "message": "mock raise",
                        "example_index": k}}), flush=True)
                    continue
            if source == "short_values":
                print(json.dumps({"id": rid, "ok": True,
                                  "values": [1.0] * max(0, len(examples) - 1)}), flush=True)
                continue
            values = []
            for ex in examples:
                if source.startswith("value:"):
                    values.append(float(source.split(":")[1]))
                elif source == "emit_nan":
                    values.append(float("nan"))
                elif source == "pid":
                    values.append(float(os.getpid()))
                elif source.startswith("echo:"):
                    values.append(float(ex[source.split(":")[1]]))
                else:
                    values.append(0.0)
            print(json.dumps({"id": rid, "ok": True, "values": values}), flush=True)


if __name__ == "__main__":
    main()
