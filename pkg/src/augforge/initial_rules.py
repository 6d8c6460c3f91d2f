"""Rule-based initial answers for color, counting, and "what" questions.

Each rule applies only to questions with exactly one meaningful noun and
falls back to no-rule when its evidence is missing, in which case the pair is
later anchored on the question-type prior instead.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .compose import CandidatePair, PairOrigin
from .corpus import AnswerCategory, AnswerVocab, Corpus
from .relevance import is_color_question

log = logging.getLogger(__name__)

# Attribute values accepted as colors. The detector emits mixed attributes
# (materials, states, colors); only these count for the color rule.
DEFAULT_COLOR_TERMS = frozenset({
    "red", "orange", "yellow", "green", "blue", "purple", "pink", "brown",
    "black", "white", "gray", "grey", "tan", "beige", "gold", "golden",
    "silver", "maroon", "navy", "teal", "turquoise", "violet", "cream",
    "blonde", "dark", "light blue", "dark blue", "light brown", "dark brown",
})


class RuleKind(str, Enum):
    COLOR = "color"
    NUMBER = "number"
    WHAT = "what"
    NONE = "none"


@dataclass
class InitialAnswer:
    pair: CandidatePair
    rule: RuleKind
    distribution: np.ndarray | None = None  # over the vocab, sums to 1 when rule != NONE

    @property
    def covered(self) -> bool:
        return self.rule is not RuleKind.NONE


def _none(pair: CandidatePair) -> InitialAnswer:
    return InitialAnswer(pair=pair, rule=RuleKind.NONE)


def rule_kind_for(corpus: Corpus, pair: CandidatePair) -> RuleKind:
    """Which rule could apply to this pair: color/number/what need one noun."""
    q = corpus.questions[pair.question_id]
    if pair.origin is PairOrigin.PARAPHRASE or q.answer_category is AnswerCategory.YESNO:
        return RuleKind.NONE
    if q.nouns is None or len(q.nouns) != 1:
        return RuleKind.NONE
    if is_color_question(q):
        return RuleKind.COLOR
    if q.answer_category is AnswerCategory.NUMBER:
        return RuleKind.NUMBER
    if q.question_type.startswith("what"):
        return RuleKind.WHAT
    return RuleKind.NONE


def assign_color(
    pair: CandidatePair,
    corpus: Corpus,
    vocab: AnswerVocab,
    color_terms: frozenset[str] = DEFAULT_COLOR_TERMS,
) -> InitialAnswer:
    """Frequency-weighted distribution over the colors detected on the noun."""
    q = corpus.questions[pair.question_id]
    noun = next(iter(q.nouns))
    image = corpus.images[pair.image_id]
    colors = Counter()
    for obj in image.objects:
        if obj.category != noun:
            continue
        for attr in obj.attributes:
            if attr.name in color_terms and attr.name in vocab:
                colors[attr.name] += 1
    if not colors:
        return _none(pair)
    vec = np.zeros(len(vocab), dtype=np.float64)
    total = sum(colors.values())
    for color, count in colors.items():
        vec[vocab.index[color]] = count / total
    return InitialAnswer(pair=pair, rule=RuleKind.COLOR, distribution=vec)


def assign_number(pair: CandidatePair, corpus: Corpus, vocab: AnswerVocab) -> InitialAnswer:
    """One-hot on the detected count of the noun, when that count is an answer."""
    q = corpus.questions[pair.question_id]
    noun = next(iter(q.nouns))
    count = corpus.images[pair.image_id].category_counts.get(noun, 0)
    answer = str(count)
    if answer not in vocab:
        return _none(pair)
    vec = np.zeros(len(vocab), dtype=np.float64)
    vec[vocab.index[answer]] = 1.0
    return InitialAnswer(pair=pair, rule=RuleKind.NUMBER, distribution=vec)


def assign_what(pair: CandidatePair, corpus: Corpus, vocab: AnswerVocab) -> InitialAnswer:
    """One-hot on the original majority answer when the paired image detects it."""
    q = corpus.questions[pair.question_id]
    answer = corpus.ground_truths[q.question_id].majority_answer
    image = corpus.images[pair.image_id]
    if answer not in image.category_counts or answer not in vocab:
        return _none(pair)
    vec = np.zeros(len(vocab), dtype=np.float64)
    vec[vocab.index[answer]] = 1.0
    return InitialAnswer(pair=pair, rule=RuleKind.WHAT, distribution=vec)


def assign_initial(
    pair: CandidatePair,
    corpus: Corpus,
    vocab: AnswerVocab,
    color_terms: frozenset[str] = DEFAULT_COLOR_TERMS,
) -> InitialAnswer:
    kind = rule_kind_for(corpus, pair)
    if kind is RuleKind.COLOR:
        return assign_color(pair, corpus, vocab, color_terms)
    if kind is RuleKind.NUMBER:
        return assign_number(pair, corpus, vocab)
    if kind is RuleKind.WHAT:
        return assign_what(pair, corpus, vocab)
    return _none(pair)


def assign_initial_all(
    pairs: list[CandidatePair],
    corpus: Corpus,
    vocab: AnswerVocab,
    color_terms: frozenset[str] = DEFAULT_COLOR_TERMS,
) -> list[InitialAnswer]:
    return [assign_initial(p, corpus, vocab, color_terms) for p in pairs]
