"""Binary matrix file format round-trips and validation."""

from __future__ import annotations

import json

import numpy as np
import pytest

from augforge.errors import MalformedFile, MissingEmbedding, ShapeMismatch, ZeroVector
from augforge.matrixio import EmbeddingMatrix, matrix_paths, read_matrix, write_matrix


def test_round_trip(tmp_path):
    rows = np.arange(12, dtype=np.float32).reshape(3, 4) + 1
    m = EmbeddingMatrix(dim=4, ids=[7, 8, 9], rows=rows, id_kind="image")
    write_matrix(tmp_path / "emb", m)
    back = read_matrix(tmp_path / "emb")
    assert back.dim == 4
    assert back.ids == [7, 8, 9]
    assert back.id_kind == "image"
    np.testing.assert_array_equal(back.rows, rows)


def test_string_ids_and_teacher_name(tmp_path):
    rows = np.ones((2, 2), dtype=np.float32)
    m = EmbeddingMatrix(dim=2, ids=["a photo of dog", "a photo of cat"], rows=rows,
                        id_kind="noun_prompt", teacher_name="ref")
    write_matrix(tmp_path / "p", m)
    back = read_matrix(tmp_path / "p")
    assert back.teacher_name == "ref"
    assert back.row("a photo of cat") is not None


def test_shape_mismatch_on_truncated_file(tmp_path):
    rows = np.ones((3, 4), dtype=np.float32)
    write_matrix(tmp_path / "m", EmbeddingMatrix(dim=4, ids=[0, 1, 2], rows=rows, id_kind="image"))
    matrix_path, _ = matrix_paths(tmp_path / "m")
    matrix_path.write_bytes(matrix_path.read_bytes()[:-4])
    with pytest.raises(ShapeMismatch):
        read_matrix(tmp_path / "m")


def test_sidecar_count_mismatch(tmp_path):
    rows = np.ones((2, 2), dtype=np.float32)
    write_matrix(tmp_path / "m", EmbeddingMatrix(dim=2, ids=[0, 1], rows=rows, id_kind="image"))
    _, sidecar = matrix_paths(tmp_path / "m")
    meta = json.loads(sidecar.read_text())
    meta["count"] = 5
    sidecar.write_text(json.dumps(meta))
    with pytest.raises(ShapeMismatch):
        read_matrix(tmp_path / "m")


def test_missing_sidecar(tmp_path):
    with pytest.raises(MalformedFile):
        read_matrix(tmp_path / "absent")


def test_nan_rejected():
    rows = np.ones((2, 2), dtype=np.float32)
    rows[0, 0] = np.nan
    with pytest.raises(ShapeMismatch, match="NaN"):
        EmbeddingMatrix(dim=2, ids=[0, 1], rows=rows, id_kind="image")


def test_kind_check(tmp_path):
    rows = np.ones((1, 2), dtype=np.float32)
    write_matrix(tmp_path / "m", EmbeddingMatrix(dim=2, ids=[0], rows=rows, id_kind="image"))
    with pytest.raises(ShapeMismatch, match="id_kind"):
        read_matrix(tmp_path / "m", expect_kind="question")


def test_missing_row_lookup():
    m = EmbeddingMatrix(dim=2, ids=[1], rows=np.ones((1, 2), dtype=np.float32), id_kind="image")
    with pytest.raises(MissingEmbedding):
        m.row(99)


def test_zero_vector_normalization():
    rows = np.zeros((1, 3), dtype=np.float32)
    m = EmbeddingMatrix(dim=3, ids=[1], rows=rows, id_kind="image")
    with pytest.raises(ZeroVector):
        m.unit_rows()


def test_unit_rows_normalize():
    rows = np.array([[3.0, 4.0]], dtype=np.float32)
    m = EmbeddingMatrix(dim=2, ids=[1], rows=rows, id_kind="image")
    np.testing.assert_allclose(m.unit_rows(), [[0.6, 0.8]], atol=1e-7)
