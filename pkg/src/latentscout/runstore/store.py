"""Filesystem-backed run storage: one directory per run, JSON manifests.

Manifest and verdict writes are atomic (write temp then rename); verdicts are
an append-only JSON-lines audit trail where the last record per dimension is
the active one. Verdict appends are serialized through an advisory lock.
"""

from __future__ import annotations

import json
import os
import tempfile
import uuid
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

from .. import analysis
from ..errors import ContractError, NotFoundError, StateError

MANIFEST_SCHEMA_VERSION = 1

_STATUS_ORDER = ["training", "analyzed", "judged"]


@dataclass
class RunManifest:
    run_id: str
    dataset_ref: str
    dataset_hash: str
    train_config: dict
    status: str
    created_at: str
    schema_version: int = MANIFEST_SCHEMA_VERSION


@dataclass
class VerdictRecord:
    run_id: str
    dim: int
    verdict: str
    notes: str
    judge: str
    timestamp: str


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class RunStore:
    """CRUD over runs/<id>/ directories under a root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "runs").mkdir(parents=True, exist_ok=True)

    def run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / run_id

    def create_run(self, dataset_ref: str, dataset_hash: str,
                   train_config: dict) -> RunManifest:
        manifest = RunManifest(
            run_id=str(uuid.uuid4()),
            dataset_ref=dataset_ref,
            dataset_hash=dataset_hash,
            train_config=train_config,
            status="training",
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        d = self.run_dir(manifest.run_id)
        d.mkdir(parents=True)
        for sub in ("grids", "extremes", "kde"):
            (d / sub).mkdir()
        self._write_manifest(manifest)
        return manifest

    def _write_manifest(self, manifest: RunManifest):
        path = self.run_dir(manifest.run_id) / "manifest.json"
        _atomic_write(path, json.dumps(asdict(manifest), indent=2))

    def get_run(self, run_id: str) -> RunManifest:
        path = self.run_dir(run_id) / "manifest.json"
        if not path.exists():
            raise NotFoundError(f"unknown run {run_id}")
        return RunManifest(**json.loads(path.read_text(encoding="utf-8")))

    def list_runs(self) -> list[RunManifest]:
        """All runs, newest first."""
        runs = []
        runs_dir = self.root / "runs"
        for d in runs_dir.iterdir() if runs_dir.exists() else []:
            if (d / "manifest.json").exists():
                runs.append(self.get_run(d.name))
        return sorted(runs, key=lambda m: m.created_at, reverse=True)

    def advance_status(self, run_id: str, status: str) -> RunManifest:
        manifest = self.get_run(run_id)
        if status not in _STATUS_ORDER:
            raise ContractError(f"unknown status {status!r}")
        if _STATUS_ORDER.index(status) < _STATUS_ORDER.index(manifest.status):
            raise StateError(
                f"cannot move run {run_id} from {manifest.status} back to {status}"
            )
        manifest.status = status
        self._write_manifest(manifest)
        return manifest

    def record_verdict(self, run_id: str, dim: int, verdict: str,
                       notes: str = "", judge: str = "") -> VerdictRecord:
        manifest = self.get_run(run_id)
        if manifest.status == "training":
            raise StateError(f"run {run_id} is not analyzed yet")
        if verdict not in ("shortcut", "valid", "unclear"):
            raise ContractError(f"invalid verdict {verdict!r}")
        d = int(manifest.train_config.get("latent_dim", 0))
        if not 1 <= dim <= d:
            raise ContractError(f"dimension {dim} outside 1..{d}")
        record = VerdictRecord(
            run_id=run_id, dim=dim, verdict=verdict, notes=notes, judge=judge,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
        path = self.run_dir(run_id) / "verdicts.jsonl"
        lock = FileLock(str(path) + ".lock")
        with lock:
            with open(path, "a", encoding="utf-8") as f:
                f.write(json.dumps(asdict(record)) + "\n")
                f.flush()
                os.fsync(f.fileno())
        return record

    def verdict_history(self, run_id: str) -> list[VerdictRecord]:
        self.get_run(run_id)  # existence check
        path = self.run_dir(run_id) / "verdicts.jsonl"
        if not path.exists():
            return []
        return [VerdictRecord(**json.loads(line))
                for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip()]

    def active_verdicts(self, run_id: str) -> dict[int, VerdictRecord]:
        """Last verdict per dimension wins."""
        active: dict[int, VerdictRecord] = {}
        for rec in self.verdict_history(run_id):
            active[rec.dim] = rec
        return active

    def scoreboard(self, run_id: str) -> list[analysis.DimensionScore] | None:
        path = self.run_dir(run_id) / "scores.json"
        if not path.exists():
            return None
        return analysis.load_scoreboard(path)
