"""On-disk dataset format and result writers.

A dataset directory holds one plain-text matrix file per view per subject
(one row per line, space separated, 17 significant digits so values
round-trip exactly) and a JSON manifest::

    {
      "format": "scpgcn-dataset",
      "n": 90,
      "metadata": {"generator.seed": "7", ...},
      "records": [
        {"id": "sub000", "label": 0,
         "structural": "matrices/sub000_structural.txt",
         "functional": "matrices/sub000_functional.txt"}
      ]
    }

Paths in the manifest are relative to the manifest's directory. Writers
need exclusive access to the target directory; no locking is done.
"""

from __future__ import annotations

import csv
import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .errors import DatasetError, ScpGcnError
from .graph_core import (
    AsymmetryWarning,
    NetworkInstance,
    symmetrize,
    validate_functional,
    validate_structural,
)

DATASET_FORMAT = "scpgcn-dataset"
MANIFEST_NAME = "manifest.json"
MATRIX_FMT = "%.17g"
_ID_PATTERN = re.compile(r"[A-Za-z0-9._-]+")


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    structural_path: str
    functional_path: str
    label: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "label": self.label,
            "structural": self.structural_path,
            "functional": self.functional_path,
        }


@dataclass(frozen=True)
class DatasetManifest:
    """Index of a dataset directory."""

    records: List[ManifestRecord]
    n: int
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [r.id for r in self.records]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise DatasetError(f"duplicate instance ids: {', '.join(dupes)}")
        for r in self.records:
            if r.label not in (0, 1):
                raise DatasetError(f"label must be 0 or 1, got {r.label}", instance_id=r.id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": DATASET_FORMAT,
            "n": self.n,
            "metadata": dict(sorted(self.metadata.items())),
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DatasetManifest":
        if data.get("format", DATASET_FORMAT) != DATASET_FORMAT:
            raise DatasetError(f"unknown dataset format {data.get('format')!r}")
        try:
            records = [
                ManifestRecord(
                    id=str(r["id"]),
                    structural_path=str(r["structural"]),
                    functional_path=str(r["functional"]),
                    label=int(r["label"]),
                )
                for r in data["records"]
            ]
            n = int(data["n"])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"malformed manifest: {e}") from e
        metadata = {str(k): str(v) for k, v in dict(data.get("metadata", {})).items()}
        return cls(records=records, n=n, metadata=metadata)


def load_manifest(manifest_path: str) -> DatasetManifest:
    path = Path(manifest_path)
    if not path.exists():
        raise DatasetError("manifest not found", path=str(path))
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(f"manifest is not valid JSON: {e}", path=str(path)) from e
    return DatasetManifest.from_dict(data)


def _read_matrix(path: Path, n: int, instance_id: str) -> np.ndarray:
    if not path.exists():
        raise DatasetError("matrix file not found", instance_id=instance_id, path=str(path))
    try:
        m = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except (ValueError, OSError) as e:
        raise DatasetError(f"unreadable matrix: {e}", instance_id=instance_id, path=str(path)) from e
    if m.shape != (n, n):
        raise DatasetError(
            f"matrix is {m.shape[0]}x{m.shape[1]}, manifest declares n={n}",
            instance_id=instance_id,
            path=str(path),
        )
    return m


def load_dataset(manifest_path: str) -> List[NetworkInstance]:
    """Load and validate every instance named by a manifest.

    Matrices are symmetrized as (A + A^T) / 2 (with an ``AsymmetryWarning``
    past 1e-9); any other invariant violation raises ``DatasetError``
    naming the instance and file.
    """
    manifest = load_manifest(manifest_path)
    root = Path(manifest_path).parent
    instances = []
    for rec in manifest.records:
        views: Dict[str, np.ndarray] = {}
        for name, rel, check in (
            ("structural", rec.structural_path, validate_structural),
            ("functional", rec.functional_path, validate_functional),
        ):
            path = root / rel
            m = _read_matrix(path, manifest.n, rec.id)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", AsymmetryWarning)
                m = symmetrize(m, f"{rec.id} {name}")
            for w in caught:
                warnings.warn(f"{w.message} (file {path})", AsymmetryWarning, stacklevel=2)
            try:
                check(m, rec.id)
            except ScpGcnError as e:
                raise DatasetError(str(e), instance_id=rec.id, path=str(path)) from e
            views[name] = m
        try:
            instances.append(NetworkInstance(rec.id, views["structural"], views["functional"], rec.label))
        except ScpGcnError as e:
            raise DatasetError(str(e), instance_id=rec.id, path=str(manifest_path)) from e
    return instances


def _write_matrix(path: Path, m: np.ndarray) -> None:
    np.savetxt(path, m, fmt=MATRIX_FMT, delimiter=" ")


def save_dataset(
    instances: Sequence[NetworkInstance],
    directory: str,
    metadata: Optional[Mapping[str, Any]] = None,
) -> str:
    """Write matrices and a manifest under ``directory``; return the manifest path."""
    if not instances:
        raise DatasetError("refusing to save an empty dataset")
    root = Path(directory)
    matrices = root / "matrices"
    try:
        matrices.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetError(f"cannot create dataset directory: {e}", path=str(matrices)) from e
    n = instances[0].n
    records = []
    for inst in instances:
        if not _ID_PATTERN.fullmatch(inst.id):
            raise DatasetError("id is not usable as a file name", instance_id=inst.id)
        if inst.n != n:
            raise DatasetError(f"instance has {inst.n} nodes, expected {n}", instance_id=inst.id)
        s_rel = f"matrices/{inst.id}_structural.txt"
        f_rel = f"matrices/{inst.id}_functional.txt"
        try:
            _write_matrix(root / s_rel, inst.structural)
            _write_matrix(root / f_rel, inst.functional)
        except OSError as e:
            raise DatasetError(f"write failed: {e}", instance_id=inst.id, path=str(root / s_rel)) from e
        records.append(ManifestRecord(inst.id, s_rel, f_rel, inst.label))
    manifest = DatasetManifest(
        records=records,
        n=n,
        metadata={str(k): str(v) for k, v in (metadata or {}).items()},
    )
    manifest_path = root / MANIFEST_NAME
    write_json(str(manifest_path), manifest.to_dict())
    return str(manifest_path)


# ============================================================================
# RESULT WRITERS
# ============================================================================

def write_json(path: str, obj: Any) -> None:
    """Write JSON with sorted keys and a trailing newline (byte-stable)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write a CSV file; floats use repr so values round-trip exactly."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
