"""Run manifests: every CLI command records seed, effective configuration
and input/output paths alongside its outputs.

For reproducibility the timestamp honors the ``SOURCE_DATE_EPOCH``
convention; without it the field is null so reruns with the same seed
produce byte-identical artifacts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

MANIFEST_NAME = "manifest.json"


def _version() -> str:
    from . import __version__

    return __version__


def run_timestamp() -> Optional[int]:
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        return None


@dataclass(frozen=True)
class RunManifest:
    command: str
    seed: Optional[int]
    config: Mapping[str, object] = field(default_factory=dict)
    inputs: Sequence[str] = ()
    outputs: Sequence[str] = ()
    tool_version: str = field(default_factory=_version)
    generated_at: Optional[int] = field(default_factory=run_timestamp)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "config": dict(self.config),
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "tool_version": self.tool_version,
            "generated_at": self.generated_at,
        }


def write_manifest(m: RunManifest, out_dir: str | Path) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(m.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
