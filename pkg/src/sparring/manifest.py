"""Run manifests: enough provenance to reproduce any generated artifact."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path


def file_hash(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_run_manifest(path: str | Path, command: str, config: dict,
                       seeds: dict | None = None,
                       checkpoints: dict[str, str] | None = None,
                       artifacts: list[str] | None = None) -> Path:
    """checkpoints maps a label to a file path; hashes are computed here."""
    doc = {
        "version": "r2r-manifest/1",
        "command": command,
        "config": config,
        "seeds": seeds or {},
        "checkpoint_hashes": {k: file_hash(v) for k, v in (checkpoints or {}).items()},
        "checkpoint_paths": {k: str(v) for k, v in (checkpoints or {}).items()},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "artifacts": [str(a) for a in (artifacts or [])],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2))
    return path
