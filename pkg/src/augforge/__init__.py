"""Offline data-augmentation engine for visual question answering.

Composes reasonable image-question pairs from a detected-object corpus,
filters them by embedding relevance, and fuses teacher predictions into soft
pseudo-answers for an augmented training set.
"""

__version__ = "0.1.0"

from .corpus import (
    AnswerCategory,
    AnswerVocab,
    BiasPrior,
    Corpus,
    build_answer_vocab,
    build_bias_prior,
    load_corpus,
)
from .compose import (
    CandidatePair,
    InvertedIndex,
    PairOrigin,
    build_index,
    compose_paraphrases,
    compose_reasonable,
)
from .kd_assign import (
    AssignMode,
    FusionWeights,
    PseudoAnswer,
    cross_entropy,
    fuse_multi,
    fuse_weights,
    fuse_with_init,
)
from .eval_metrics import evaluate, harmonic_mean, vqa_accuracy
from .relevance import clip_rank_prompt, filter_top, noun_prompt, score_pairs

__all__ = [
    "AnswerCategory",
    "AnswerVocab",
    "AssignMode",
    "BiasPrior",
    "CandidatePair",
    "Corpus",
    "FusionWeights",
    "InvertedIndex",
    "PairOrigin",
    "PseudoAnswer",
    "build_answer_vocab",
    "build_bias_prior",
    "build_index",
    "clip_rank_prompt",
    "compose_paraphrases",
    "compose_reasonable",
    "cross_entropy",
    "evaluate",
    "filter_top",
    "fuse_multi",
    "fuse_weights",
    "fuse_with_init",
    "harmonic_mean",
    "load_corpus",
    "noun_prompt",
    "score_pairs",
    "vqa_accuracy",
    "__version__",
]
