"""Run manifests and output locking for CLI commands.

A manifest snapshots the resolved arguments, seeds, input hashes, and
artifact paths of one command. Re-running with --config <manifest> replays
the stored arguments (explicit flags still win), which reproduces the
metric files byte for byte; the manifest itself carries fresh timestamps.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from contextlib import contextmanager
from pathlib import Path

MANIFEST_NAME = "run_manifest.json"
LOCK_NAME = ".robustlm.lock"


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_run_manifest(
    directory: str | Path,
    command: str,
    args: dict,
    inputs: list[str | Path] | None = None,
    artifacts: list[str | Path] | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(args.items())},
        "inputs": {
            str(p): sha256_file(p) for p in (inputs or []) if p is not None and Path(p).is_file()
        },
        "artifacts": sorted(str(p) for p in (artifacts or [])),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_manifest_args(path: str | Path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if "args" not in payload:
        raise ValueError(f"{path} is not a run manifest (no 'args' key)")
    return payload["args"]


@contextmanager
def output_lock(directory: str | Path):
    """Exclusive lock over an output directory; concurrent writers error out."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock_path = directory / LOCK_NAME
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"output directory {directory} is locked by another run (remove {lock_path} if stale)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock_path.unlink(missing_ok=True)
