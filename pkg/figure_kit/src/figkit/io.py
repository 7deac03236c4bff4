"""Readers for the study output formats (manifest, tables, trajectory dumps).

The file schemas are the interface contract with the solver package; this
module re-implements the manifest hashing rule on purpose so that renders
never depend on solver code.  A table or trajectory is accepted only if
the hash embedded in its first line matches the hash recomputed from the
manifest body (timestamp keys excluded).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

_EXCLUDED_KEYS = ("created", "manifest_hash")


class ManifestMismatchError(ValueError):
    """CSV and manifest disagree (tampered or mismatched pair)."""


class SchemaError(ValueError):
    """A required column or metadata entry is missing."""


def read_manifest(path: str) -> dict:
    items = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SchemaError(f"manifest line without '=': {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            items[key] = value
    return items


def manifest_hash(items: dict) -> str:
    body = "\n".join(f"{k} = {items[k]}" for k in sorted(items)
                     if k not in _EXCLUDED_KEYS)
    return hashlib.sha256(body.encode()).hexdigest()


@dataclass
class Table:
    columns: list
    data: dict                      # column -> float array ("s"/"m"/"n" included)
    manifest_hash: str
    slopes: dict = field(default_factory=dict)
    label: str = ""
    path: str = ""

    def column(self, name: str) -> np.ndarray:
        if name not in self.data:
            raise SchemaError(f"{self.path}: missing column '{name}' "
                              f"(has {', '.join(self.columns)})")
        return self.data[name]


def _parse_header_comments(lines, path):
    digest, label, slopes = "", "", {}
    body = []
    for line in lines:
        if line.startswith("# manifest_hash="):
            digest = line.split("=", 1)[1].strip()
        elif line.startswith("# label="):
            label = line.split("=", 1)[1].strip()
        elif line.startswith("# slope "):
            _, _, name, value = line.split(None, 3)
            slopes[name] = float(value)
        elif line.startswith("#"):
            continue
        elif line.strip():
            body.append(line)
    if not digest:
        raise SchemaError(f"{path}: no embedded manifest hash")
    return digest, label, slopes, body


def read_table(path: str) -> Table:
    with open(path) as fh:
        lines = fh.read().splitlines()
    digest, label, slopes, body = _parse_header_comments(lines, path)
    if not body:
        raise SchemaError(f"{path}: no data rows")
    columns = body[0].split(",")
    rows = [line.split(",") for line in body[1:]]
    if not rows:
        raise SchemaError(f"{path}: header only, no data rows")
    if any(len(r) != len(columns) for r in rows):
        raise SchemaError(f"{path}: ragged rows")
    data = {c: np.array([float(r[i]) for r in rows])
            for i, c in enumerate(columns)}
    return Table(columns, data, digest, slopes, label, path)


@dataclass
class TrajectoryDump:
    level: int
    n_steps: int
    horizon: float
    values: np.ndarray              # (n_steps + 1, n_dof)
    times: np.ndarray
    manifest_hash: str
    label: str = ""
    path: str = ""


def read_trajectory(path: str) -> TrajectoryDump:
    with open(path) as fh:
        lines = fh.read().splitlines()
    digest, label, _, body = _parse_header_comments(lines, path)
    meta = {}
    for line in lines:
        if line.startswith("# level="):
            for chunk in line[2:].split():
                key, value = chunk.split("=")
                meta[key] = float(value)
    for key in ("level", "n_steps", "horizon"):
        if key not in meta:
            raise SchemaError(f"{path}: missing grid metadata '{key}'")
    if body[0] != "k,t,node,value":
        raise SchemaError(f"{path}: expected 'k,t,node,value' header, got {body[0]!r}")
    level, n_steps = int(meta["level"]), int(meta["n_steps"])
    n_dof = (2 ** level - 1) ** 2
    values = np.zeros((n_steps + 1, n_dof))
    times = np.zeros(n_steps + 1)
    for line in body[1:]:
        k, t, node, value = line.split(",")
        values[int(k), int(node)] = float(value)
        times[int(k)] = float(t)
    return TrajectoryDump(level, n_steps, float(meta["horizon"]), values,
                          times, digest, label, path)


def verify_against_manifest(obj, manifest_path: str) -> dict:
    """Check the object's embedded hash against the recomputed manifest hash."""
    if not os.path.exists(manifest_path):
        raise ManifestMismatchError(f"manifest not found: {manifest_path}")
    items = read_manifest(manifest_path)
    recomputed = manifest_hash(items)
    recorded = items.get("manifest_hash", "")
    if recorded != recomputed:
        raise ManifestMismatchError(
            f"{manifest_path}: stored hash {recorded[:12]}... does not match "
            f"recomputed {recomputed[:12]}... (manifest edited?)")
    if obj.manifest_hash != recomputed:
        raise ManifestMismatchError(
            f"{obj.path}: embedded hash {obj.manifest_hash[:12]}... does not "
            f"match manifest {recomputed[:12]}...")
    return items


def sibling_manifest(csv_path: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(csv_path)), "manifest.txt")


def interior_to_grid(level: int, vec: np.ndarray) -> np.ndarray:
    """Embed interior nodal values into the full (2^level + 1)^2 grid.

    Interior nodes are ordered row-major by y then x; boundary values are
    zero (homogeneous Dirichlet).
    """
    m = 2 ** level
    if len(vec) != (m - 1) ** 2:
        raise SchemaError(f"field length {len(vec)} does not match level {level}")
    grid = np.zeros((m + 1, m + 1))
    grid[1:m, 1:m] = vec.reshape(m - 1, m - 1)
    return grid
