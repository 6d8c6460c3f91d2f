"""Shared fixture builders: corpus files, in-memory corpora, embedding files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from augforge.corpus import (
    AnswerCategory,
    Corpus,
    DetectedObject,
    GroundTruth,
    ImageRecord,
    QuestionRecord,
    load_corpus,
)
from augforge.matrixio import EmbeddingMatrix, write_matrix
from augforge.relevance import noun_prompt


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[{status}] {name} ({report.duration:.2f}s)")


def ten_answers(*answers: str) -> list[str]:
    """Pad a ragged answer list to the 10 annotator slots by repeating the first."""
    out = list(answers)
    while len(out) < 10:
        out.append(answers[0])
    return out[:10]


def write_corpus_files(
    tmp_path: Path,
    questions: list[dict],
    annotations: list[dict],
    detections: list[dict],
    prefix: str = "",
) -> tuple[Path, Path, Path]:
    q_path = tmp_path / f"{prefix}questions.json"
    a_path = tmp_path / f"{prefix}annotations.json"
    d_path = tmp_path / f"{prefix}detections.jsonl"
    q_path.write_text(json.dumps({"questions": questions}), encoding="utf-8")
    a_path.write_text(json.dumps({"annotations": annotations}), encoding="utf-8")
    with open(d_path, "w", encoding="utf-8") as f:
        for record in detections:
            f.write(json.dumps(record) + "\n")
    return q_path, a_path, d_path


def detection(image_id: int, *objects) -> dict:
    """objects: (category, score) or (category, score, [(attr, score), ...])."""
    objs = []
    for obj in objects:
        category, score = obj[0], obj[1]
        attrs = [{"name": n, "score": s} for n, s in (obj[2] if len(obj) > 2 else [])]
        objs.append({"category": category, "score": score, "attributes": attrs})
    return {"image_id": image_id, "objects": objs}


def question(question_id: int, image_id: int, text: str) -> dict:
    return {"question_id": question_id, "image_id": image_id, "question": text}


def annotation(
    question_id: int,
    image_id: int,
    question_type: str,
    answer_type: str,
    answers: list[str],
    majority: str | None = None,
) -> dict:
    return {
        "question_id": question_id,
        "image_id": image_id,
        "question_type": question_type,
        "answer_type": answer_type,
        "answers": [{"answer": a} for a in answers],
        "multiple_choice_answer": majority if majority is not None else answers[0],
    }


@pytest.fixture
def small_corpus(tmp_path) -> Corpus:
    """Three questions, two images, three annotations."""
    questions = [
        question(1, 10, "How many giraffes are eating?"),
        question(2, 11, "What color is the sock?"),
        question(3, 11, "Is this picture in color?"),
    ]
    annotations = [
        annotation(1, 10, "how many", "number", ten_answers("2")),
        annotation(2, 11, "what color is the", "other", ten_answers("red")),
        annotation(3, 11, "is this", "yes/no", ten_answers("yes")),
    ]
    detections = [
        detection(10, ("giraffe", 0.95), ("giraffe", 0.9), ("tree", 0.85)),
        detection(11, ("sock", 0.9, [("red", 0.8)]), ("girl", 0.88)),
    ]
    paths = write_corpus_files(tmp_path, questions, annotations, detections)
    return load_corpus(*paths)


def make_memory_corpus(
    images: dict[int, frozenset[str]],
    questions: list[tuple[int, int, frozenset[str], AnswerCategory]],
) -> Corpus:
    """Corpus built directly in memory with nouns preassigned.

    `images` maps image_id to its category set; `questions` entries are
    (question_id, source_image_id, nouns, answer_category).
    """
    image_records = {}
    for image_id, cats in images.items():
        objs = [DetectedObject(category=c, score=0.9) for c in sorted(cats)]
        image_records[image_id] = ImageRecord(
            image_id=image_id, objects=objs, category_counts={c: 1 for c in cats}
        )
    question_records = {}
    gts = {}
    for qid, src, nouns, category in questions:
        text = "is the " + " and ".join(sorted(nouns)) if nouns else "is it"
        qtype = {"yes/no": "is the", "number": "how many", "other": "what is"}[category.value]
        question_records[qid] = QuestionRecord(
            question_id=qid, source_image_id=src, text=text,
            question_type=qtype, answer_category=category, nouns=nouns,
        )
        answer = {"yes/no": "yes", "number": "1", "other": "thing"}[category.value]
        gts[qid] = GroundTruth(qid, ten_answers(answer), {answer: 1.0}, answer)
    corpus = Corpus(questions=question_records, images=image_records, ground_truths=gts)
    corpus.composable_ids = frozenset(q for q, _, nouns, _ in questions if nouns)
    corpus.prune_fraction = 0.0
    return corpus


def write_embeddings(
    base: Path, ids: list, rows: np.ndarray, id_kind: str, teacher_name: str | None = None
) -> Path:
    matrix = EmbeddingMatrix(
        dim=rows.shape[1], ids=ids, rows=rows.astype(np.float32), id_kind=id_kind,
        teacher_name=teacher_name,
    )
    write_matrix(base, matrix)
    return base


def random_unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    rows = rng.normal(size=(count, dim))
    return (rows / np.linalg.norm(rows, axis=1)[:, None]).astype(np.float32)


def noun_prompt_embeddings(base: Path, categories: list[str], rng: np.random.Generator, dim: int) -> Path:
    prompts = [noun_prompt(c) for c in categories]
    return write_embeddings(base, prompts, random_unit_rows(rng, len(prompts), dim), "noun_prompt")


PIPELINE_CATEGORIES = ["giraffe", "sock", "dog", "tree", "knife", "fork"]


def build_pipeline_fixture(root: Path, teachers: dict | None = None, **config_overrides) -> Path:
    """Full on-disk dataset + embeddings + config for end-to-end runs.

    Returns the config path. Teachers default to the built-in bias/uniform
    reference pair, so the run needs no external prediction files.
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(1234)
    dim = 8

    questions = [
        question(1, 1, "How many giraffes are eating?"),
        question(2, 2, "What color is the sock?"),
        question(3, 3, "What is near the fork?"),
        question(4, 1, "Is the giraffe eating leaves?"),
        question(5, 4, "Is the dog near the giraffe?"),
        question(6, 6, "Is this picture in color?"),
        question(7, 6, "Are the dogs tails up or down?"),
        question(8, 2, "How many dogs are there?"),
        question(9, 5, "What color are the socks?"),
        question(10, 3, "Is there a knife?"),
    ]
    annotations = [
        annotation(1, 1, "how many", "number", ["2"] * 10),
        annotation(2, 2, "what color is the", "other", ["red"] * 8 + ["maroon"] * 2),
        annotation(3, 3, "what is", "other", ["knife"] * 9 + ["spoon"]),
        annotation(4, 1, "is the", "yes/no", ["yes"] * 10),
        annotation(5, 4, "is the", "yes/no", ["yes"] * 6 + ["no"] * 4),
        annotation(6, 6, "is this", "yes/no", ["yes"] * 10),
        annotation(7, 6, "are the", "other", ["down"] * 10),
        annotation(8, 2, "how many", "number", ["1"] * 10),
        annotation(9, 5, "what color", "other", ["red"] * 6 + ["blue"] * 4),
        annotation(10, 3, "is there", "yes/no", ["yes"] * 10),
    ]
    detections = [
        detection(1, ("giraffe", 0.95), ("giraffe", 0.9), ("tree", 0.85)),
        detection(2, ("sock", 0.9, [("red", 0.8)]), ("dog", 0.88)),
        detection(3, ("knife", 0.92), ("fork", 0.9)),
        detection(4, ("giraffe", 0.9), ("dog", 0.9)),
        detection(5, ("sock", 0.9, [("blue", 0.7)]), ("sock", 0.85, [("red", 0.6)]),
                  ("fork", 0.82), ("knife", 0.81)),
        detection(6, ("dog", 0.9), ("tree", 0.8)),
    ]
    write_corpus_files(root, questions, annotations, detections)

    write_embeddings(root / "image_emb", [1, 2, 3, 4, 5, 6],
                     random_unit_rows(rng, 6, dim), "image")
    noun_prompt_embeddings(root / "noun_emb", PIPELINE_CATEGORIES, rng, dim)

    # questions 2 and 9 are near-duplicates; everything else is spread out
    q_rows = random_unit_rows(rng, 10, dim)
    q_rows[8] = q_rows[1] + rng.normal(scale=0.003, size=dim).astype(np.float32)
    q_rows[8] /= np.linalg.norm(q_rows[8])
    write_embeddings(root / "question_emb", list(range(1, 11)), q_rows, "question")

    config = {
        "questions": "questions.json",
        "annotations": "annotations.json",
        "detections": "detections.jsonl",
        "image_embeddings": "image_emb",
        "noun_prompt_embeddings": "noun_emb",
        "question_embeddings": "question_emb",
        "output_dir": "out",
        "teachers": teachers if teachers is not None else {
            "id": {"kind": "bias"},
            "ood": {"kind": "uniform"},
        },
        "alpha_percent": 100.0,
        "delta_percent": 100.0,
        "seed": 0,
        "mode": "basic",
    }
    config.update(config_overrides)
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return config_path


def tree_digest(out_dir: Path) -> dict[str, str]:
    """Relative path -> content hash for every file under a directory."""
    import hashlib

    digests = {}
    for path in sorted(out_dir.rglob("*")):
        if path.is_file():
            digests[str(path.relative_to(out_dir))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests
