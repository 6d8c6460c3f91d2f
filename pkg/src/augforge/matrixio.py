"""Binary matrix files: little-endian float32, row-major, with a JSON sidecar.

A matrix is stored as two files sharing a basename: `<base>.f32` holds the
raw rows and `<base>.json` holds metadata:

    {"dim": int, "count": int, "ids": [...], "id_kind": str}

`ids` are integers for images/questions and strings for text prompts.
Prediction matrices add a "teacher_name" field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicateId, MalformedFile, MissingEmbedding, ShapeMismatch, ZeroVector

MATRIX_SUFFIX = ".f32"
SIDECAR_SUFFIX = ".json"

ID_KINDS = ("image", "noun_prompt", "qa_prompt", "question", "pair_prediction")


@dataclass
class EmbeddingMatrix:
    dim: int
    ids: list
    rows: np.ndarray  # (count, dim) float32
    id_kind: str
    teacher_name: str | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape != (len(self.ids), self.dim):
            raise ShapeMismatch(
                f"matrix shape {self.rows.shape} does not match {len(self.ids)} ids x dim {self.dim}"
            )
        if not np.all(np.isfinite(self.rows)):
            raise ShapeMismatch("matrix contains NaN or Inf entries")
        if not self._index:
            self._index = {id_: i for i, id_ in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise DuplicateId(f"duplicate ids in {self.id_kind} matrix")

    def row(self, id_) -> np.ndarray:
        try:
            return self.rows[self._index[id_]]
        except KeyError:
            raise MissingEmbedding(f"no {self.id_kind} row for id {id_!r}") from None

    def has(self, id_) -> bool:
        return id_ in self._index

    def row_indices(self, ids) -> np.ndarray:
        """Dense row indices for a sequence of ids; MissingEmbedding on any gap."""
        out = np.empty(len(ids), dtype=np.int64)
        for i, id_ in enumerate(ids):
            try:
                out[i] = self._index[id_]
            except KeyError:
                raise MissingEmbedding(f"no {self.id_kind} row for id {id_!r}") from None
        return out

    def unit_rows(self) -> np.ndarray:
        """Rows normalized to unit length, as float64. ZeroVector on any zero row."""
        rows = self.rows.astype(np.float64)
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms == 0.0):
            bad = self.ids[int(np.argmin(norms))]
            raise ZeroVector(f"{self.id_kind} row for id {bad!r} has zero norm")
        return rows / norms[:, None]


def matrix_paths(base: str | Path) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix in (MATRIX_SUFFIX, SIDECAR_SUFFIX):
        base = base.with_suffix("")
    return base.with_suffix(MATRIX_SUFFIX), base.with_suffix(SIDECAR_SUFFIX)


def write_matrix(base: str | Path, matrix: EmbeddingMatrix) -> tuple[Path, Path]:
    matrix_path, sidecar_path = matrix_paths(base)
    matrix_path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.ascontiguousarray(matrix.rows, dtype="<f4")
    rows.tofile(matrix_path)
    sidecar = {
        "dim": matrix.dim,
        "count": len(matrix.ids),
        "ids": list(matrix.ids),
        "id_kind": matrix.id_kind,
    }
    if matrix.teacher_name is not None:
        sidecar["teacher_name"] = matrix.teacher_name
    sidecar_path.write_text(json.dumps(sidecar) + "\n", encoding="utf-8")
    return matrix_path, sidecar_path


def read_matrix(base: str | Path, expect_kind: str | None = None) -> EmbeddingMatrix:
    matrix_path, sidecar_path = matrix_paths(base)
    if not sidecar_path.exists():
        raise MalformedFile(f"missing sidecar {sidecar_path}")
    if not matrix_path.exists():
        raise MalformedFile(f"missing matrix file {matrix_path}")
    try:
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{sidecar_path}: invalid JSON at line {exc.lineno} col {exc.colno}") from exc
    try:
        dim = int(meta["dim"])
        count = int(meta["count"])
        ids = list(meta["ids"])
        id_kind = str(meta["id_kind"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"{sidecar_path}: bad sidecar fields ({exc})") from exc
    if len(ids) != count:
        raise ShapeMismatch(f"{sidecar_path}: count={count} but {len(ids)} ids listed")
    if expect_kind is not None and id_kind != expect_kind:
        raise ShapeMismatch(f"{sidecar_path}: id_kind is {id_kind!r}, expected {expect_kind!r}")
    raw = np.fromfile(matrix_path, dtype="<f4")
    if raw.size != count * dim:
        raise ShapeMismatch(
            f"{matrix_path}: {raw.size} floats on disk, sidecar promises {count}x{dim}"
        )
    return EmbeddingMatrix(
        dim=dim,
        ids=ids,
        rows=raw.reshape(count, dim),
        id_kind=id_kind,
        teacher_name=meta.get("teacher_name"),
    )
