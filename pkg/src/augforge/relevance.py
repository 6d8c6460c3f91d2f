"""Image-text relevance scoring and filtering over precomputed embeddings.

The engine never runs an encoder: image rows, noun-prompt rows, and QA-prompt
rows arrive as matrix files and only cosines are computed here. A pair's
relevance is the mean cosine between the image row and the prompt rows of the
question's nouns; since all rows are unit-normalized first, that equals the
dot product with the mean of the noun-prompt unit rows.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from .compose import CandidatePair
from .corpus import AnswerCategory, Corpus, QuestionRecord
from .errors import ConfigError, EmptyInput, NoNoun
from .matrixio import EmbeddingMatrix
from .nouns import pluralize_category

log = logging.getLogger(__name__)

PROMPT_TEMPLATE = "a photo of "


def noun_prompt(noun: str) -> str:
    return PROMPT_TEMPLATE + noun


@dataclass(slots=True)
class RelevanceScore:
    pair: CandidatePair
    score: float


def score_pairs(
    pairs: list[CandidatePair],
    image_emb: EmbeddingMatrix,
    prompt_emb: EmbeddingMatrix,
    corpus: Corpus,
) -> list[RelevanceScore]:
    """Mean image/noun-prompt cosine per pair, in input order.

    The mean of cosines equals the dot product of the unit image row with the
    mean of the nouns' unit prompt rows, so each distinct question needs one
    probe vector and the pair loop stays vectorized. Raises MissingEmbedding
    when an image or a noun prompt has no row and ZeroVector when a row cannot
    be normalized.
    """
    if not pairs:
        return []
    image_unit = image_emb.unit_rows()
    prompt_unit = prompt_emb.unit_rows()

    # One probe vector per distinct question, indexed densely.
    question_slot: dict[int, int] = {}
    probe_rows: list[np.ndarray] = []
    for pair in pairs:
        qid = pair.question_id
        if qid in question_slot:
            continue
        q = corpus.questions[qid]
        if not q.nouns:
            raise ValueError(f"question {qid} has no nouns to score")
        idx = prompt_emb.row_indices([noun_prompt(n) for n in sorted(q.nouns)])
        question_slot[qid] = len(probe_rows)
        probe_rows.append(prompt_unit[idx].mean(axis=0))
    probes = np.stack(probe_rows)

    image_idx = image_emb.row_indices([p.image_id for p in pairs])
    probe_idx = np.fromiter((question_slot[p.question_id] for p in pairs), dtype=np.int64, count=len(pairs))
    scores = np.einsum("ij,ij->i", image_unit[image_idx], probes[probe_idx])
    return [RelevanceScore(pair=p, score=s) for p, s in zip(pairs, scores.tolist())]


def top_count(n: int, percent: float) -> int:
    """How many of n items a percent cut keeps: ceil(percent/100 * n), 0 at percent=0."""
    if percent <= 0:
        return 0
    return math.ceil(percent * n / 100.0)


def filter_top(scores: list[RelevanceScore], alpha_percent: float) -> list[CandidatePair]:
    """Keep the top alpha% by score, ties to ascending (question_id, image_id).

    Output is sorted by descending score then ids, with relevance and a
    1-based rank stamped on each kept pair.
    """
    if not scores:
        raise EmptyInput("no scored pairs to filter")
    if not (0.0 < alpha_percent <= 100.0):
        raise ConfigError(f"alpha_percent must be in (0, 100], got {alpha_percent}")
    vals = np.fromiter((s.score for s in scores), dtype=np.float64, count=len(scores))
    qids = np.fromiter((s.pair.question_id for s in scores), dtype=np.int64, count=len(scores))
    iids = np.fromiter((s.pair.image_id for s in scores), dtype=np.int64, count=len(scores))
    order = np.lexsort((iids, qids, -vals))  # primary: descending score
    kept = order[: top_count(len(scores), alpha_percent)].tolist()
    out = []
    for rank, k in enumerate(kept, start=1):
        s = scores[k]
        p = s.pair
        out.append(
            CandidatePair(
                image_id=p.image_id,
                question_id=p.question_id,
                origin=p.origin,
                relevance=s.score,
                rank=rank,
                anchor_question_id=p.anchor_question_id,
            )
        )
    return out


_WS_RE = re.compile(r"\s+")


def _clean_text(text: str) -> str:
    return _WS_RE.sub(" ", text.lower().replace("?", " ")).strip()


def _noun_surfaces(noun: str) -> tuple[tuple[str, ...], ...]:
    """Token sequences that count as this noun in question text (singular + plural)."""
    return (tuple(noun.split()), tuple(pluralize_category(noun).split()))


def clip_rank_prompt(question: QuestionRecord, answer: str) -> str:
    """Prompt for ranking an augmented question-answer pair against its image.

    Counting and color questions drop the question-type prefix and put the
    answer directly before the noun; every other question replaces the prefix
    with the answer. The trailing question mark is stripped throughout.
    """
    text = _clean_text(question.text)
    prefix = _clean_text(question.question_type)
    if prefix and (text == prefix or text.startswith(prefix + " ")):
        remainder = text[len(prefix):].strip()
    else:
        remainder = text

    if question.answer_category is AnswerCategory.NUMBER or is_color_question(question):
        if not question.nouns or len(question.nouns) != 1:
            raise NoNoun(f"question {question.question_id} has no single noun to anchor the answer")
        noun = next(iter(question.nouns))
        tokens = remainder.split()
        for start in range(len(tokens)):
            for surface in _noun_surfaces(noun):
                if tuple(tokens[start:start + len(surface)]) == surface:
                    return " ".join(tokens[:start] + [answer] + tokens[start:])
        raise NoNoun(f"noun {noun!r} not found in question {question.question_id}")
    return (answer + " " + remainder).strip()


def is_color_question(question: QuestionRecord) -> bool:
    return "color" in question.question_type or "colour" in question.question_type


def rank_by_answer_quality(
    samples: list[tuple[CandidatePair, str]],
    image_emb: EmbeddingMatrix,
    prompt_emb: EmbeddingMatrix,
) -> list[tuple[CandidatePair, float]]:
    """Samples (pair, qa_prompt) sorted by descending image/prompt cosine.

    Equal scores keep ascending (question_id, image_id) order so the ranking
    is a deterministic total order.
    """
    if not samples:
        return []
    image_unit = image_emb.unit_rows()
    prompt_unit = prompt_emb.unit_rows()
    img_idx = image_emb.row_indices([p.image_id for p, _ in samples])
    prm_idx = prompt_emb.row_indices([prompt for _, prompt in samples])
    scores = np.einsum("ij,ij->i", image_unit[img_idx], prompt_unit[prm_idx])
    order = sorted(
        range(len(samples)),
        key=lambda i: (-scores[i], samples[i][0].question_id, samples[i][0].image_id),
    )
    return [(samples[i][0], float(scores[i])) for i in order]


def split_top(ranked: list, delta_percent: float) -> tuple[list, list]:
    """Split a ranked list into (top delta%, rest) with the ceil counting rule."""
    k = top_count(len(ranked), delta_percent)
    return ranked[:k], ranked[k:]
