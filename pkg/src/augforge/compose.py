"""Image-question pair composition.

A question is reasonable for an image when every meaningful noun of the
question is a detected category of the image. Yes/No questions are grouped by
their noun set and at most `yesno_sample_k` questions per group are sampled
before pairing, to keep the Yes/No share of the augmented set in check.
Paraphrase pairs come from precomputed question embeddings instead.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from operator import attrgetter
from pathlib import Path

import numpy as np

from .corpus import AnswerCategory, Corpus
from .errors import DimensionMismatch, MalformedFile
from .matrixio import EmbeddingMatrix

log = logging.getLogger(__name__)

DEFAULT_YESNO_SAMPLE_K = 3
DEFAULT_PARAPHRASE_THRESHOLD = 0.95
DEFAULT_PARAPHRASE_TOP_K = 3


class PairOrigin(str, Enum):
    COMPOSED = "composed"
    PARAPHRASE = "paraphrase"
    YESNO_SAMPLED = "yesno_sampled"


@dataclass(slots=True)
class CandidatePair:
    image_id: int
    question_id: int
    origin: PairOrigin
    relevance: float | None = None
    rank: int | None = None
    # Paraphrase pairs keep the source question whose ground truth they reuse.
    anchor_question_id: int | None = None

    def key(self) -> tuple[int, int]:
        return (self.question_id, self.image_id)


@dataclass
class YesNoGroup:
    noun_set: frozenset[str]
    question_ids: list[int]


@dataclass
class InvertedIndex:
    by_category: dict[str, np.ndarray]  # category -> sorted unique image ids

    def lookup(self, category: str) -> np.ndarray:
        return self.by_category.get(category, _EMPTY_IDS)

    def images_with_all(self, nouns) -> np.ndarray:
        """Sorted image ids containing every noun (empty when any noun is undetected)."""
        lists = sorted((self.lookup(n) for n in nouns), key=len)
        if not lists or len(lists[0]) == 0:
            return _EMPTY_IDS
        return reduce(lambda a, b: np.intersect1d(a, b, assume_unique=True), lists)


_EMPTY_IDS = np.empty(0, dtype=np.int64)


def build_index(corpus: Corpus) -> InvertedIndex:
    buckets: dict[str, list[int]] = {}
    for image_id in sorted(corpus.images):
        for category in corpus.images[image_id].category_counts:
            buckets.setdefault(category, []).append(image_id)
    return InvertedIndex(by_category={c: np.asarray(ids, dtype=np.int64) for c, ids in buckets.items()})


def yesno_groups(corpus: Corpus, question_ids) -> list[YesNoGroup]:
    """Yes/No questions grouped by identical noun sets, in sorted group-key order."""
    grouped: dict[frozenset[str], list[int]] = {}
    for qid in question_ids:
        q = corpus.questions[qid]
        if q.answer_category is AnswerCategory.YESNO:
            grouped.setdefault(q.nouns, []).append(qid)
    groups = [YesNoGroup(noun_set=k, question_ids=sorted(v)) for k, v in grouped.items()]
    groups.sort(key=lambda g: tuple(sorted(g.noun_set)))
    return groups


def compose_reasonable(
    corpus: Corpus,
    index: InvertedIndex,
    yesno_sample_k: int = DEFAULT_YESNO_SAMPLE_K,
    seed: int = 0,
    question_ids=None,
    jobs: int = 1,
) -> list[CandidatePair]:
    """All reasonable pairs, Yes/No groups sampled, sorted by (question_id, image_id).

    Pairs that duplicate an original training sample (the question's own source
    image) are dropped. The Yes/No sampler consumes one seeded generator in
    sorted group order, so output is a pure function of (corpus, seed, config).
    """
    if corpus.composable_ids is None:
        raise ValueError("compose_reasonable requires noun extraction and pruning first")
    eligible = sorted(corpus.composable_ids if question_ids is None
                      else corpus.composable_ids & set(question_ids))

    rng = np.random.default_rng(seed)
    sampled_yesno: list[int] = []
    for group in yesno_groups(corpus, eligible):
        k = min(yesno_sample_k, len(group.question_ids))
        chosen = rng.choice(np.asarray(group.question_ids, dtype=np.int64), size=k, replace=False)
        sampled_yesno.extend(int(qid) for qid in chosen)

    work: list[tuple[int, PairOrigin]] = []
    for qid in eligible:
        if corpus.questions[qid].answer_category is not AnswerCategory.YESNO:
            work.append((qid, PairOrigin.COMPOSED))
    for qid in sorted(sampled_yesno):
        work.append((qid, PairOrigin.YESNO_SAMPLED))

    def pairs_for(item: tuple[int, PairOrigin]) -> list[CandidatePair]:
        qid, origin = item
        q = corpus.questions[qid]
        images = index.images_with_all(q.nouns)
        return [
            CandidatePair(image_id=int(i), question_id=qid, origin=origin)
            for i in images
            if int(i) != q.source_image_id
        ]

    if jobs > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = pool.map(pairs_for, work)
            pairs = [p for chunk in chunks for p in chunk]
    else:
        pairs = [p for item in work for p in pairs_for(item)]
    pairs.sort(key=attrgetter("question_id", "image_id"))
    return pairs


def compose_paraphrases(
    corpus: Corpus,
    question_embeddings: EmbeddingMatrix,
    threshold: float = DEFAULT_PARAPHRASE_THRESHOLD,
    top_k: int = DEFAULT_PARAPHRASE_TOP_K,
) -> list[CandidatePair]:
    """Pairs (image of Q_i, similar question Q_j) carrying Q_i's ground truth.

    Similarity is cosine between question embedding rows; candidates below
    `threshold` are dropped and at most `top_k` (ties to the smaller
    question_id) are kept per original sample.
    """
    qids = corpus.question_ids()
    if question_embeddings.dim <= 0:
        raise DimensionMismatch("question embeddings have dimension 0")
    rows = question_embeddings.unit_rows()
    row_of = question_embeddings.row_indices(qids)  # MissingEmbedding on gaps
    mat = rows[row_of]  # (n, dim), aligned with qids
    n = len(qids)

    best: dict[tuple[int, int], CandidatePair] = {}
    block = 1024
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = mat[start:stop] @ mat.T  # (block, n)
        for i in range(start, stop):
            row = sims[i - start]
            order = [j for j in range(n) if j != i and row[j] >= threshold]
            order.sort(key=lambda j: (-row[j], qids[j]))
            anchor = corpus.questions[qids[i]]
            for j in order[:top_k]:
                pair_qid = qids[j]
                image_id = anchor.source_image_id
                if corpus.questions[pair_qid].source_image_id == image_id:
                    continue  # would duplicate an original training pair
                candidate = CandidatePair(
                    image_id=image_id,
                    question_id=pair_qid,
                    origin=PairOrigin.PARAPHRASE,
                    relevance=float(row[j]),
                    anchor_question_id=anchor.question_id,
                )
                key = candidate.key()
                held = best.get(key)
                # Same (image, question) reachable from several anchors: keep
                # the most similar anchor, ties to the smaller anchor id.
                if (
                    held is None
                    or candidate.relevance > held.relevance
                    or (candidate.relevance == held.relevance
                        and candidate.anchor_question_id < held.anchor_question_id)
                ):
                    best[key] = candidate
    return sorted(best.values(), key=CandidatePair.key)


def merge_candidates(
    composed: list[CandidatePair], paraphrases: list[CandidatePair]
) -> list[CandidatePair]:
    """Union with unique (image, question) keys; a paraphrase wins a collision
    because it carries human ground truth."""
    merged: dict[tuple[int, int], CandidatePair] = {p.key(): p for p in composed}
    merged.update({p.key(): p for p in paraphrases})
    return sorted(merged.values(), key=CandidatePair.key)


def write_candidates(pairs: list[CandidatePair], path: str | Path) -> Path:
    """Candidate dump, one JSON object per line in list order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            record = {"image_id": p.image_id, "question_id": p.question_id, "origin": p.origin.value}
            if p.anchor_question_id is not None:
                record["anchor_question_id"] = p.anchor_question_id
            if p.relevance is not None:
                record["relevance"] = float(f"{p.relevance:.9g}")
            if p.rank is not None:
                record["rank"] = p.rank
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def read_candidates(path: str | Path) -> list[CandidatePair]:
    pairs = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise MalformedFile(f"{path}: file not found") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            pairs.append(
                CandidatePair(
                    image_id=int(record["image_id"]),
                    question_id=int(record["question_id"]),
                    origin=PairOrigin(record["origin"]),
                    relevance=record.get("relevance"),
                    rank=record.get("rank"),
                    anchor_question_id=record.get("anchor_question_id"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"{path}: line {lineno}: bad candidate record ({exc})") from exc
    return pairs
