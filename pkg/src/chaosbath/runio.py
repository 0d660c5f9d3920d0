"""Output files and the run manifest.

Every experiment writes plain tabular or JSON outputs plus a manifest that
echoes the configuration, records checksums of each output, and is written
atomically only after all outputs succeeded.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(1 << 20)
            if not block:
                break
            h.update(block)
    return h.hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def write_csv(path, header: list[str], columns: list, fmt: str = "%.12g") -> Path:
    """Column-oriented CSV writer with a fixed numeric format."""
    path = Path(path)
    rows = len(columns[0])
    lines = [",".join(header)]
    for r in range(rows):
        lines.append(",".join(
            fmt % col[r] if not isinstance(col[r], (str, int)) else str(col[r])
            for col in columns))
    _atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


class ManifestWriter:
    """Collects outputs during a run and seals the manifest at the end."""

    def __init__(self, out_dir, kind: str, seed: int, config_echo: dict,
                 version: str):
        self.out_dir = Path(out_dir)
        self.kind = kind
        self.seed = seed
        self.config_echo = config_echo
        self.version = version
        self.cache_state: str | None = None
        self._outputs: list[Path] = []
        self._t0 = time.time()
        self._started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    def add(self, path) -> None:
        self._outputs.append(Path(path))

    def seal(self) -> Path:
        payload = {
            "tool": "chaosbath",
            "version": self.version,
            "kind": self.kind,
            "seed": self.seed,
            "config": self.config_echo,
            "started_utc": self._started,
            "elapsed_seconds": round(time.time() - self._t0, 3),
            "cache": self.cache_state,
            "outputs": {p.name: sha256_file(p) for p in self._outputs},
        }
        return write_json(self.out_dir / "manifest.json", payload)
