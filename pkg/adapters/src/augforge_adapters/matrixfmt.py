"""Writer for the engine's binary matrix format.

`<base>.f32` holds row-major little-endian float32; `<base>.json` holds
{"dim", "count", "ids", "id_kind"} plus "teacher_name" for predictions. Kept
independent of the engine package: the file format is the interface.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def write_matrix_files(
    base: str | Path,
    ids: list,
    rows: np.ndarray,
    id_kind: str,
    teacher_name: str | None = None,
) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix in (".f32", ".json"):
        base = base.with_suffix("")
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2 or rows.shape[0] != len(ids):
        raise ValueError(f"rows {rows.shape} do not match {len(ids)} ids")
    matrix_path = base.with_suffix(".f32")
    sidecar_path = base.with_suffix(".json")
    matrix_path.parent.mkdir(parents=True, exist_ok=True)
    rows.tofile(matrix_path)
    sidecar = {
        "dim": int(rows.shape[1]),
        "count": len(ids),
        "ids": list(ids),
        "id_kind": id_kind,
    }
    if teacher_name is not None:
        sidecar["teacher_name"] = teacher_name
    sidecar_path.write_text(json.dumps(sidecar) + "\n", encoding="utf-8")
    return matrix_path, sidecar_path


def unit_normalize(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows.astype(np.float64), axis=1)
    if np.any(norms == 0.0):
        raise ValueError("cannot unit-normalize a zero row")
    return (rows / norms[:, None]).astype(np.float32)
