"""Extraction runs: detections, embeddings, and teacher predictions.

Every run writes its outputs in the engine's file formats plus a manifest
JSON recording the backend, parameters, and output digests.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import numpy as np

from .backends import ATTRIBUTE_SCORE_MIN, MAX_OBJECTS, OBJECT_SCORE_MIN
from .matrixfmt import unit_normalize, write_matrix_files

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
_DIGITS = re.compile(r"(\d+)")

PROMPT_TEMPLATE = "a photo of "


def image_id_for(path: Path) -> int:
    """Image id from the trailing digit run of the filename (COCO convention)."""
    matches = _DIGITS.findall(path.stem)
    if not matches:
        raise ValueError(f"cannot derive an image id from {path.name!r}")
    return int(matches[-1])


def list_images(image_dir: str | Path) -> list[Path]:
    image_dir = Path(image_dir)
    files = [p for p in sorted(image_dir.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES]
    if not files:
        raise ValueError(f"no image files under {image_dir}")
    return files


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_path: Path, command: str, backend, parameters: dict, outputs: list[Path]) -> Path:
    manifest = {
        "tool": "augforge-adapt",
        "command": command,
        "backend": {"name": backend.name, "checksum": backend.checksum()},
        "parameters": parameters,
        "outputs": [{"path": p.name, "sha256": _sha256(p)} for p in sorted(outputs)],
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def extract_detections(image_dir: str | Path, out_path: str | Path, backend) -> Path:
    """One JSONL record per image, thresholds enforced, at most 36 objects."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    records = []
    for path in list_images(image_dir):
        objects = backend.detect(path.read_bytes())
        kept = []
        for obj in objects:
            if obj["score"] < OBJECT_SCORE_MIN:
                continue
            attrs = [a for a in obj.get("attributes", []) if a["score"] >= ATTRIBUTE_SCORE_MIN]
            kept.append({"category": obj["category"], "score": obj["score"], "attributes": attrs})
        kept = kept[:MAX_OBJECTS]
        records.append({"image_id": image_id_for(path), "objects": kept})
    records.sort(key=lambda r: r["image_id"])
    with open(out_path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    write_manifest(out_path, "detections", backend,
                   {"image_dir": str(image_dir), "object_score_min": OBJECT_SCORE_MIN,
                    "attribute_score_min": ATTRIBUTE_SCORE_MIN, "max_objects": MAX_OBJECTS},
                   [out_path])
    return out_path


def _ids_and_payloads(kind: str, source: str | Path) -> tuple[list, list, str]:
    """Resolve (ids, payloads, payload_type) for an embedding kind."""
    source = Path(source)
    if kind == "image":
        files = list_images(source)
        return [image_id_for(p) for p in files], [p.read_bytes() for p in files], "image"
    if kind == "question":
        payload = json.loads(source.read_text(encoding="utf-8"))
        questions = payload["questions"]
        ids = [int(q["question_id"]) for q in questions]
        return ids, [str(q["question"]) for q in questions], "text"
    if kind == "noun_prompt":
        categories: set[str] = set()
        for line in source.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            for obj in json.loads(line).get("objects", []):
                categories.add(str(obj["category"]).lower())
        prompts = [PROMPT_TEMPLATE + c for c in sorted(categories)]
        return prompts, prompts, "text"
    if kind == "qa_prompt":
        prompts = []
        for line in source.read_text(encoding="utf-8").splitlines():
            if line.strip():
                prompts.append(str(json.loads(line)["prompt"]))
        prompts = sorted(set(prompts))
        return prompts, prompts, "text"
    raise ValueError(f"unknown embedding kind {kind!r}")


def extract_embeddings(kind: str, source: str | Path, out_base: str | Path, backend) -> Path:
    """Unit-normalized rows for images, questions, or prompt strings."""
    ids, payloads, payload_type = _ids_and_payloads(kind, source)
    if payload_type == "image":
        rows = backend.embed_images(payloads)
    else:
        rows = backend.embed_texts(payloads)
    rows = unit_normalize(np.asarray(rows))
    matrix_path, sidecar_path = write_matrix_files(out_base, ids, rows, id_kind=kind)
    write_manifest(matrix_path, "embeddings", backend,
                   {"kind": kind, "source": str(source), "count": len(ids)},
                   [matrix_path, sidecar_path])
    return matrix_path


def run_teachers(
    request_path: str | Path,
    vocab_path: str | Path,
    out_id: str | Path,
    out_ood: str | Path,
    backend,
    predictor=None,
) -> tuple[Path, Path]:
    """One prediction row per requested pair for the ID and OOD teachers.

    `predictor(teacher_name, questions, vocab_size) -> rows` overrides the
    backend, so a checkpoint-backed callable can be plugged in unchanged.
    """
    request_path = Path(request_path)
    records = [json.loads(line) for line in request_path.read_text(encoding="utf-8").splitlines()
               if line.strip()]
    pair_ids = [int(r["pair_id"]) for r in records]
    questions = [str(r["question"]) for r in records]
    vocab = json.loads(Path(vocab_path).read_text(encoding="utf-8"))["answers"]
    predict = predictor if predictor is not None else backend.predict_answers

    written = []
    for teacher_name, out_base in (("id", out_id), ("ood", out_ood)):
        rows = np.asarray(predict(teacher_name, questions, len(vocab)), dtype=np.float64)
        if rows.shape != (len(records), len(vocab)):
            raise ValueError(f"{teacher_name}: predictor returned {rows.shape}, "
                             f"expected ({len(records)}, {len(vocab)})")
        sums = rows.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise ValueError(f"{teacher_name}: a prediction row has no positive mass")
        rows = rows / sums
        matrix_path, sidecar_path = write_matrix_files(
            out_base, pair_ids, rows, id_kind="pair_prediction", teacher_name=teacher_name)
        write_manifest(matrix_path, "teachers", backend,
                       {"request": str(request_path), "vocab": str(vocab_path),
                        "teacher": teacher_name, "pairs": len(records)},
                       [matrix_path, sidecar_path])
        written.append(matrix_path)
    return written[0], written[1]
