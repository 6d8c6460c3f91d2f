"""Teacher answer distributions for candidate pairs.

External teachers run out of process: the engine writes a batch request file,
the teacher writes one prediction row per pair in the shared binary matrix
format, and ingestion normalizes whatever comes back. Built-in reference
teachers (bias / uniform / perturbed-bias / table) are deterministic stand-ins
used for testing and single-phase runs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compose import CandidatePair
from .corpus import AnswerVocab, BiasPrior, Corpus
from .errors import ConfigError, DegenerateRow, MalformedFile, MissingTableRow, ShapeMismatch
from .matrixio import EmbeddingMatrix, read_matrix

log = logging.getLogger(__name__)

PREDICTION_ID_KIND = "pair_prediction"

REFERENCE_KINDS = ("bias", "uniform", "perturbed_bias", "table")
TEACHER_KINDS = REFERENCE_KINDS + ("external",)


@dataclass
class TeacherSpec:
    name: str
    kind: str  # one of TEACHER_KINDS
    path: str | None = None  # external / table: matrix basename
    mix: float = 0.5  # perturbed_bias: weight of the random simplex point
    seed: int = 0  # perturbed_bias: base seed

    def __post_init__(self):
        if self.kind not in TEACHER_KINDS:
            raise ConfigError(f"unknown teacher kind {self.kind!r} (expected one of {TEACHER_KINDS})")
        if self.kind in ("external", "table") and not self.path:
            raise ConfigError(f"teacher {self.name!r} of kind {self.kind!r} needs a path")
        if not (0.0 <= self.mix <= 1.0):
            raise ConfigError(f"teacher {self.name!r}: mix must be in [0, 1]")


@dataclass
class TeacherPrediction:
    pair_id: int
    distribution: np.ndarray


def write_request(pairs: list[CandidatePair], corpus: Corpus, out_path: str | Path) -> Path:
    """One JSONL record per pair, in candidate order; pair_id is the dense index."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        for pair_id, pair in enumerate(pairs):
            record = {
                "pair_id": pair_id,
                "image_id": pair.image_id,
                "question_id": pair.question_id,
                "question": corpus.questions[pair.question_id].text,
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return out_path


def read_request(path: str | Path) -> list[dict]:
    records = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise MalformedFile(f"{path}: file not found") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
    return records


def normalize_rows(rows: np.ndarray, context: str) -> np.ndarray:
    """Clamp negatives to zero and renormalize each row to sum 1.

    Rejects rows that are all zero after clamping: there is nothing to
    normalize and silently substituting a distribution would hide a broken
    teacher.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if np.any(rows < 0.0):
        log.info("%s: clamped negative prediction entries", context)
    clamped = np.maximum(rows, 0.0)
    sums = clamped.sum(axis=1)
    dead = np.flatnonzero(sums == 0.0)
    if dead.size:
        raise DegenerateRow(f"{context}: row {int(dead[0])} is all zeros")
    return clamped / sums[:, None]


def load_predictions(base: str | Path, expected_pairs: int, vocab: AnswerVocab) -> np.ndarray:
    """Prediction matrix for the candidate list: (pairs, |vocab|), rows normalized."""
    matrix = read_matrix(base, expect_kind=PREDICTION_ID_KIND)
    if matrix.dim != len(vocab):
        raise ShapeMismatch(
            f"{base}: prediction dim {matrix.dim} != vocabulary size {len(vocab)}"
        )
    if len(matrix.ids) != expected_pairs:
        raise ShapeMismatch(
            f"{base}: {len(matrix.ids)} prediction rows for {expected_pairs} candidate pairs"
        )
    if list(matrix.ids) != list(range(expected_pairs)):
        raise ShapeMismatch(f"{base}: prediction ids must be the dense pair indices 0..N-1")
    return normalize_rows(matrix.rows, context=str(base))


def _simplex_point(vocab_size: int, seed: int, pair_id: int) -> np.ndarray:
    rng = np.random.default_rng([seed, pair_id])
    return rng.dirichlet(np.ones(vocab_size))


def reference_predict(
    spec: TeacherSpec,
    pair_id: int,
    pair: CandidatePair,
    corpus: Corpus,
    vocab: AnswerVocab,
    prior: BiasPrior,
    table: EmbeddingMatrix | None = None,
) -> TeacherPrediction:
    """Deterministic prediction of a built-in teacher for one pair."""
    if spec.kind == "external":
        raise ConfigError(f"teacher {spec.name!r} is external; use load_predictions")
    if spec.kind == "bias":
        qtype = corpus.questions[pair.question_id].question_type
        dist = prior.vector(qtype).copy()
    elif spec.kind == "uniform":
        dist = np.full(len(vocab), 1.0 / len(vocab))
    elif spec.kind == "perturbed_bias":
        qtype = corpus.questions[pair.question_id].question_type
        bias = prior.vector(qtype)
        dist = (1.0 - spec.mix) * bias + spec.mix * _simplex_point(len(vocab), spec.seed, pair_id)
    else:  # table
        if table is None or not table.has(pair_id):
            raise MissingTableRow(f"teacher {spec.name!r}: no stored row for pair {pair_id}")
        dist = normalize_rows(table.row(pair_id)[None, :], context=spec.name)[0]
    return TeacherPrediction(pair_id=pair_id, distribution=dist)


def prior_rows(pairs: list[CandidatePair], corpus: Corpus, prior: BiasPrior) -> np.ndarray:
    """(pairs, |vocab|) matrix of each pair's question-type prior."""
    types = sorted(prior.per_type)
    slot = {t: i for i, t in enumerate(types)}
    table = np.stack([prior.per_type[t] for t in types])
    idx = np.fromiter(
        (slot[corpus.questions[p.question_id].question_type] for p in pairs),
        dtype=np.int64, count=len(pairs),
    )
    return table[idx]


def predict_batch(
    spec: TeacherSpec,
    pairs: list[CandidatePair],
    corpus: Corpus,
    vocab: AnswerVocab,
    prior: BiasPrior,
) -> np.ndarray:
    """(pairs, |vocab|) matrix of one teacher's predictions for the candidate list."""
    if spec.kind == "external":
        return load_predictions(spec.path, expected_pairs=len(pairs), vocab=vocab)
    if spec.kind == "bias":
        return prior_rows(pairs, corpus, prior)
    if spec.kind == "uniform":
        return np.full((len(pairs), len(vocab)), 1.0 / len(vocab))
    if spec.kind == "perturbed_bias":
        bias = prior_rows(pairs, corpus, prior)
        noise = np.stack([_simplex_point(len(vocab), spec.seed, pid) for pid in range(len(pairs))])
        return (1.0 - spec.mix) * bias + spec.mix * noise
    table = read_matrix(spec.path, expect_kind=PREDICTION_ID_KIND)
    if table.dim != len(vocab):
        raise ShapeMismatch(f"{spec.path}: table dim {table.dim} != vocabulary size {len(vocab)}")
    missing = [pid for pid in range(len(pairs)) if not table.has(pid)]
    if missing:
        raise MissingTableRow(f"teacher {spec.name!r}: no stored row for pair {missing[0]}")
    idx = table.row_indices(list(range(len(pairs))))
    return normalize_rows(table.rows[idx], context=spec.name)
