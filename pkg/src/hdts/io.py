"""File formats: panel/matrix CSV, the HDTS1 binary container, JSON
sidecars and run manifests.

HDTS1 layout: 5 magic bytes ``HDTS1``, then two little-endian uint64
(rows, cols), then rows*cols little-endian float64 in row-major order.
All text output uses %.17g so that round-trips and reruns are
byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .util import sha256_bytes, sha256_file

MAGIC = b"HDTS1"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# Binary container
# ---------------------------------------------------------------------------

def write_array_binary(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
    if arr.ndim != 2:
        raise ValidationError(f"binary container holds 2-d arrays, got shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes(order="C"))


def read_array_binary(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(5)
        if magic != MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        rows, cols = struct.unpack("<QQ", f.read(16))
        data = np.frombuffer(f.read(rows * cols * 8), dtype="<f8")
        if data.size != rows * cols:
            raise ValidationError(f"{path}: truncated payload")
        return data.reshape(rows, cols).astype(float)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_panel_csv(path, data: np.ndarray) -> None:
    """Header t,x1..xp; t counts observations from 1."""
    data = np.asarray(data, dtype=float)
    p = data.shape[1]
    with open(path, "w", newline="") as f:
        f.write("t," + ",".join(f"x{j + 1}" for j in range(p)) + "\n")
        for t, row in enumerate(data, start=1):
            f.write(str(t) + "," + ",".join(_fmt(v) for v in row) + "\n")


def read_panel_csv(path) -> np.ndarray:
    with open(path) as f:
        header = f.readline().strip().split(",")
        if not header or header[0] != "t":
            raise ValidationError(f"{path}: expected a panel CSV with header t,x1..xp")
        rows = [line.strip().split(",")[1:] for line in f if line.strip()]
    if not rows:
        raise ValidationError(f"{path}: empty panel")
    return np.array([[float(v) for v in row] for row in rows])


def write_matrix_csv(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=float)
    with open(path, "w", newline="") as f:
        for row in arr:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as f:
        rows = [line.strip().split(",") for line in f if line.strip()]
    return np.array([[float(v) for v in row] for row in rows])


def read_panel_any(path) -> np.ndarray:
    """Panel from either container, detected by the magic bytes."""
    with open(path, "rb") as f:
        head = f.read(5)
    return read_array_binary(path) if head == MAGIC else read_panel_csv(path)


def write_rows_csv(path, rows: list[dict], columns: list[str] | None = None) -> None:
    if not rows:
        raise ValidationError("no rows to write")
    cols = columns if columns is not None else list(rows[0].keys())
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            cells = []
            for c in cols:
                v = row[c]
                cells.append(_fmt(v) if isinstance(v, float) else str(v))
            f.write(",".join(cells) + "\n")


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    """Provenance record for one CLI invocation.

    Output digests (not the manifest itself, whose timestamp varies) are
    the reproducibility contract: reruns with the same config and seed
    produce identical output digests.
    """

    tool_version: str
    command: str
    base_seed: int
    threads: int
    config_digest: str | None = None
    outputs: dict = field(default_factory=dict)
    created_utc: str = ""

    def add_output(self, path) -> None:
        self.outputs[Path(path).name] = sha256_file(path)

    def write(self, path) -> None:
        self.created_utc = datetime.now(timezone.utc).isoformat()
        write_json(path, {
            "tool_version": self.tool_version,
            "command": self.command,
            "base_seed": self.base_seed,
            "threads": self.threads,
            "config_digest": self.config_digest,
            "outputs": self.outputs,
            "created_utc": self.created_utc,
        })


def config_digest_of(path) -> str:
    with open(path, "rb") as f:
        return sha256_bytes(f.read())
