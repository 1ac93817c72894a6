#!/usr/bin/env python3
"""Record the canonical gesture-log session against the in-process
service and dump it as a fixture for the frontend's replay tests.

Usage: python tools/record_gesture_log.py [output.json]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from fastapi.testclient import TestClient

from gesture_log import SWAP_EXPECTED, run_gesture_log
from vizual.service import NotebookStore, create_app


def main() -> int:
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent
        / "frontend" / "tests" / "fixtures" / "gesture_log.json")
    client = TestClient(create_app(NotebookStore()))
    steps: list[dict] = []
    result = run_gesture_log(client, recorder=steps)
    doc = {
        "notebook_id": result["notebook_id"],
        "swap_expected": SWAP_EXPECTED,
        "steps": steps,
    }
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    print(f"recorded {len(steps)} steps -> {out_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
