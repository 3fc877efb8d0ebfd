"""Run manifests: what a command ran, with what config, producing which files."""
from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Collects run facts and writes run_manifest.json atomically at the end."""

    def __init__(self, command: str, out_dir: Path, config_path=None, resolved=None, seeds=None):
        self.data = {
            "command": command,
            "config_path": str(config_path) if config_path else None,
            "resolved_config": resolved or {},
            "seeds": seeds or [],
            "output_dir": str(out_dir),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        self.out_dir = Path(out_dir)
        self.artifacts: list[Path] = []

    def add_artifact(self, path: Path) -> None:
        self.artifacts.append(Path(path))

    def write(self) -> Path:
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        checksums = {}
        for path in self.artifacts:
            if path.exists():
                checksums[str(path.relative_to(self.out_dir))] = sha256_file(path)
        self.data["artifact_checksums"] = checksums
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.out_dir / "run_manifest.json"
        tmp = target.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True))
        os.replace(tmp, target)
        return target
