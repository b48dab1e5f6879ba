"""Run manifests: enough provenance to reproduce any output directory."""

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

MANIFEST_NAME = "manifest.json"


def code_fingerprint():
    """Content hash over every source file of this package."""
    root = Path(__file__).resolve().parent
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*.py")):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def file_fingerprint(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def utc_now():
    return datetime.now(timezone.utc).isoformat()


def build_manifest(command, config, seed, artifacts, started_at, extra=None):
    manifest = {
        "command": command,
        "config": config,
        "seed": int(seed),
        "code_version": code_fingerprint(),
        "started_at": started_at,
        "finished_at": utc_now(),
        "artifacts": {k: str(v) for k, v in artifacts.items()},
    }
    if extra:
        manifest["extra"] = extra
    return manifest


def write_manifest(out_dir, manifest):
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_manifest(out_dir):
    return json.loads((Path(out_dir) / MANIFEST_NAME).read_text())
