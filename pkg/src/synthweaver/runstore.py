"""On-disk layout of a run and the I/O used by every stage.

One run directory holds JSONL record files per stage, a state file for
resume bookkeeping, an events log (the only file allowed wall-clock
timestamps), and the cost ledger snapshot.
"""

from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path
from typing import Any, Iterator

from .model import canonical_json

TASKS = "tasks.jsonl"
TRIPLETS = "triplets.jsonl"
TRAJECTORIES_RAW = "trajectories_raw.jsonl"
TRAJECTORIES_REFINED = "trajectories_refined.jsonl"
DROPS = "drops.jsonl"
EVENTS = "events.jsonl"
STATE = "state.json"
MANIFEST = "manifest.json"
LEDGER = "ledger.json"
STATS = "stats.json"
DATASET_DIR = "dataset"


class RunStore:
    """All reads and writes for one run directory; append paths are locked."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def path(self, name: str) -> Path:
        return self.root / name

    def _lock_for(self, name: str) -> threading.Lock:
        with self._locks_guard:
            if name not in self._locks:
                self._locks[name] = threading.Lock()
            return self._locks[name]

    # ------------------------------------------------------------------
    # JSONL records
    # ------------------------------------------------------------------

    def append_record(self, name: str, record: dict[str, Any]) -> None:
        line = canonical_json(record)
        with self._lock_for(name):
            with open(self.path(name), "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def append_records(self, name: str, records: list[dict[str, Any]]) -> None:
        if not records:
            return
        payload = "".join(canonical_json(r) + "\n" for r in records)
        with self._lock_for(name):
            with open(self.path(name), "a", encoding="utf-8") as fh:
                fh.write(payload)

    def read_records(self, name: str) -> Iterator[dict[str, Any]]:
        path = self.path(name)
        if not path.exists():
            return
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def rewrite_records(self, name: str, records: list[dict[str, Any]]) -> None:
        """Atomically replace a record file (used when resume wipes partials)."""
        payload = "".join(canonical_json(r) + "\n" for r in records)
        with self._lock_for(name):
            self._atomic_write(self.path(name), payload)

    # ------------------------------------------------------------------
    # JSON documents
    # ------------------------------------------------------------------

    def write_json(self, name: str, value: Any) -> None:
        with self._lock_for(name):
            self._atomic_write(self.path(name), canonical_json(value) + "\n")

    def read_json(self, name: str, default: Any = None) -> Any:
        path = self.path(name)
        if not path.exists():
            return default
        return json.loads(path.read_text(encoding="utf-8"))

    @staticmethod
    def _atomic_write(path: Path, payload: str) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)

    # ------------------------------------------------------------------
    # state and events
    # ------------------------------------------------------------------

    def load_state(self) -> dict[str, Any]:
        return self.read_json(STATE, default={"explored_sites": [], "stages": []})

    def save_state(self, state: dict[str, Any]) -> None:
        self.write_json(STATE, state)

    def mark_stage(self, stage: str) -> None:
        state = self.load_state()
        if stage not in state["stages"]:
            state["stages"].append(stage)
        self.save_state(state)

    def event(self, kind: str, data: dict[str, Any]) -> None:
        record = {"ts": round(time.time(), 3), "kind": kind, **data}
        self.append_record(EVENTS, record)

    def dataset_dir(self) -> Path:
        path = self.root / DATASET_DIR
        path.mkdir(parents=True, exist_ok=True)
        return path
