#!/usr/bin/env python3
"""Runs the service tests with response dumping on and validates every
captured response body against schemas/api.schema.json."""

import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def main() -> int:
    if len(sys.argv) != 3:
        print("usage: validate_responses.py <test-binary> <schema-file>", file=sys.stderr)
        return 2
    binary, schema_path = sys.argv[1], Path(sys.argv[2])
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)

    with tempfile.TemporaryDirectory() as dump:
        env = dict(os.environ, COEVAL_RESPONSE_DUMP=dump)
        run = subprocess.run([binary, "--gtest_filter=ServiceApi.*"], env=env, capture_output=True, text=True)
        if run.returncode != 0:
            print(run.stdout[-4000:])
            print("service tests failed", file=sys.stderr)
            return 1

        files = sorted(Path(dump).glob("*.json"))
        failures = 0
        seen = set()
        for f in files:
            captured = json.loads(f.read_text())
            name, status, body = captured["schema"], captured["status"], captured["body"]
            seen.add(name)
            if name not in schema["$defs"]:
                print(f"{f.name}: no schema named {name}")
                failures += 1
                continue
            if status >= 400 and name not in ("error", "draft_batch"):
                print(f"{f.name}: status {status} tagged as {name}")
                failures += 1
            validator = jsonschema.Draft202012Validator({**schema, "$ref": f"#/$defs/{name}"})
            errors = sorted(validator.iter_errors(body), key=lambda e: list(e.path))
            for e in errors[:3]:
                print(f"{f.name}: {'/'.join(map(str, e.path))}: {e.message[:200]}")
            failures += bool(errors)

        print(f"validated {len(files)} responses across {len(seen)} schemas, {failures} failing")
        if len(files) == 0:
            return 1
        return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
