"""Soft pseudo-answer fusion.

Two teachers contribute an answer distribution per pair. Each teacher's
confidence is the reciprocal of its cross-entropy against an anchor (the
question-type prior, or a rule-based initial answer when one exists), and the
weights swap sides: the teacher closer to the anchor gets the smaller weight,
so a bias-hugging teacher never dominates the label.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .compose import CandidatePair
from .errors import VocabMismatch

log = logging.getLogger(__name__)

XE_EPS = 1e-12  # clamp inside the log and on XE before inversion


class AnchorKind(str, Enum):
    BIAS_PRIOR = "bias_prior"
    INITIAL_ANSWER = "initial_answer"


class AssignMode(str, Enum):
    SINGLE_TEACHER = "single_teacher"
    MULTI_TEACHER = "multi_teacher"
    MULTI_TEACHER_INIT = "multi_teacher_init"
    GROUND_TRUTH = "ground_truth"  # paraphrase pairs reuse human labels, no fusion


@dataclass(slots=True)
class FusionWeights:
    w_id: float
    w_ood: float
    c_id: float | None
    c_ood: float | None
    anchor: AnchorKind

    def __post_init__(self):
        if abs(self.w_id + self.w_ood - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {self.w_id} + {self.w_ood}")


@dataclass(slots=True)
class PseudoAnswer:
    pair: CandidatePair
    distribution: np.ndarray
    mode: AssignMode
    weights: FusionWeights | None = None


def cross_entropy(p: np.ndarray, q: np.ndarray, eps: float = XE_EPS) -> float:
    """-sum(p * ln(max(q, eps))); finite for any pair of distributions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise VocabMismatch(f"distribution shapes differ: {p.shape} vs {q.shape}")
    return float(-(p * np.log(np.maximum(q, eps))).sum())


def cross_entropy_rows(P: np.ndarray, Q: np.ndarray, eps: float = XE_EPS) -> np.ndarray:
    """Row-wise cross-entropy for (n, vocab) matrices."""
    if P.shape != Q.shape:
        raise VocabMismatch(f"matrix shapes differ: {P.shape} vs {Q.shape}")
    logq = np.log(np.maximum(Q, eps))
    return -np.einsum("ij,ij->i", P, logq)


def fuse_weights(
    anchor: np.ndarray,
    pred_id: np.ndarray,
    pred_ood: np.ndarray,
    eps: float = XE_EPS,
    anchor_kind: AnchorKind = AnchorKind.BIAS_PRIOR,
) -> FusionWeights:
    """Confidences are inverted cross-entropies against the anchor; the weights
    cross over so the anchor-hugging teacher is downweighted."""
    xe_id = max(cross_entropy(anchor, pred_id, eps), eps)
    xe_ood = max(cross_entropy(anchor, pred_ood, eps), eps)
    c_id = 1.0 / xe_id
    c_ood = 1.0 / xe_ood
    total = c_id + c_ood
    return FusionWeights(
        w_id=c_ood / total,
        w_ood=c_id / total,
        c_id=c_id,
        c_ood=c_ood,
        anchor=anchor_kind,
    )


def forced_weights(w_ood: float, anchor_kind: AnchorKind = AnchorKind.BIAS_PRIOR) -> FusionWeights:
    """Fixed-weight variant used by the single/averaged-teacher ablations."""
    if not (0.0 <= w_ood <= 1.0):
        raise ValueError(f"w_ood must be in [0, 1], got {w_ood}")
    return FusionWeights(w_id=1.0 - w_ood, w_ood=w_ood, c_id=None, c_ood=None, anchor=anchor_kind)


def fuse_multi(
    pred_id: np.ndarray,
    pred_ood: np.ndarray,
    weights: FusionWeights,
    pair: CandidatePair | None = None,
) -> PseudoAnswer:
    dist = weights.w_id * np.asarray(pred_id, dtype=np.float64) \
        + weights.w_ood * np.asarray(pred_ood, dtype=np.float64)
    return PseudoAnswer(pair=pair, distribution=dist, mode=AssignMode.MULTI_TEACHER, weights=weights)


def fuse_with_init(
    a_init: np.ndarray,
    pred_id: np.ndarray,
    pred_ood: np.ndarray,
    eps: float = XE_EPS,
    pair: CandidatePair | None = None,
) -> PseudoAnswer:
    """Initial answer replaces both the anchor and the in-domain content:
    a^t = w_id * a_init + w_ood * pred_ood."""
    weights = fuse_weights(a_init, pred_id, pred_ood, eps, anchor_kind=AnchorKind.INITIAL_ANSWER)
    dist = weights.w_id * np.asarray(a_init, dtype=np.float64) \
        + weights.w_ood * np.asarray(pred_ood, dtype=np.float64)
    return PseudoAnswer(pair=pair, distribution=dist, mode=AssignMode.MULTI_TEACHER_INIT, weights=weights)


def fuse_rows(
    anchors: np.ndarray,
    pred_id: np.ndarray,
    pred_ood: np.ndarray,
    id_content: np.ndarray | None = None,
    eps: float = XE_EPS,
    forced_w_ood: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Vectorized fusion over (n, vocab) blocks.

    `id_content` is what the w_id weight multiplies: the ID predictions by
    default, the initial answers in the anchored variant. Returns
    (fused, w_id, w_ood, c_id, c_ood); confidences are None for forced weights.
    """
    if forced_w_ood is None:
        xe_id = np.maximum(cross_entropy_rows(anchors, pred_id, eps), eps)
        xe_ood = np.maximum(cross_entropy_rows(anchors, pred_ood, eps), eps)
        c_id = 1.0 / xe_id
        c_ood = 1.0 / xe_ood
        total = c_id + c_ood
        w_id = c_ood / total
        w_ood = c_id / total
    else:
        n = anchors.shape[0]
        w_ood = np.full(n, float(forced_w_ood))
        w_id = 1.0 - w_ood
        c_id = c_ood = None
    content = pred_id if id_content is None else id_content
    fused = w_id[:, None] * content + w_ood[:, None] * pred_ood
    return fused, w_id, w_ood, c_id, c_ood


def assign_all(
    pairs: list[CandidatePair],
    anchors: np.ndarray,
    predictions_id: np.ndarray | None,
    predictions_ood: np.ndarray | None,
    initial_answers: list | None = None,
    delta_percent: float = 100.0,
    ranking: list[tuple[CandidatePair, float]] | None = None,
    ground_truth_rows: dict[int, np.ndarray] | None = None,
    skip_indices: set[int] | None = None,
    eps: float = XE_EPS,
    forced_w_ood: float | None = None,
) -> list[PseudoAnswer | None]:
    """Route every pair to its fusion mode and return answers in pair order.

    - paraphrase pairs (listed in `ground_truth_rows` by dense index) keep the
      anchor sample's human label;
    - rule-covered pairs inside the top delta% of `ranking` fuse with the
      initial answer as anchor and in-domain content;
    - everything else fuses the two teachers against the question-type prior;
    - with a single teacher, its prediction passes through unchanged.

    Entries named in `skip_indices` come back as None (dropped pairs).
    """
    from .relevance import top_count  # local import to avoid a cycle

    n = len(pairs)
    ground_truth_rows = ground_truth_rows or {}
    skip = skip_indices or set()

    init_by_index: dict[int, np.ndarray] = {}
    if initial_answers and any(ia.covered for ia in initial_answers):
        pair_index = {p.key(): i for i, p in enumerate(pairs)}
        for ia in initial_answers:
            if ia.covered:
                init_by_index[pair_index[ia.pair.key()]] = ia.distribution

    use_init: set[int] = set()
    if init_by_index and delta_percent > 0:
        if delta_percent >= 100.0:
            use_init = set(init_by_index)
        else:
            if ranking is None:
                raise ValueError("a ranking is required for a partial initial-answer split")
            ranked_covered = [
                pair_index[p.key()] for p, _ in ranking if pair_index[p.key()] in init_by_index
            ]
            if len(ranked_covered) < len(init_by_index):
                raise ValueError(
                    f"ranking covers {len(ranked_covered)} of {len(init_by_index)} rule-covered pairs"
                )
            use_init = set(ranked_covered[: top_count(len(ranked_covered), delta_percent)])

    single = predictions_id is None or predictions_ood is None
    if single and (predictions_id is None) == (predictions_ood is None):
        raise ValueError("at least one teacher prediction matrix is required")
    if single and use_init:
        log.info("single-teacher run: initial-answer anchoring disabled for %d pairs", len(use_init))
        use_init = set()

    out: list[PseudoAnswer | None] = [None] * n
    done = set(skip)

    for i in sorted(ground_truth_rows):
        if i in skip:
            continue
        out[i] = PseudoAnswer(pair=pairs[i], distribution=ground_truth_rows[i],
                              mode=AssignMode.GROUND_TRUTH, weights=None)
        done.add(i)

    if single:
        preds = predictions_id if predictions_id is not None else predictions_ood
        side = "id" if predictions_id is not None else "ood"
        for i in range(n):
            if i in done:
                continue
            weights = forced_weights(1.0 if side == "ood" else 0.0)
            out[i] = PseudoAnswer(pair=pairs[i], distribution=preds[i].copy(),
                                  mode=AssignMode.SINGLE_TEACHER, weights=weights)
        return out

    def fill(indices: list[int], anchor_rows: np.ndarray, id_content: np.ndarray | None,
             mode: AssignMode, anchor_kind: AnchorKind) -> None:
        idx = np.asarray(indices, dtype=np.int64)
        fused, w_id, w_ood, c_id, c_ood = fuse_rows(
            anchor_rows, predictions_id[idx], predictions_ood[idx],
            id_content=id_content, eps=eps, forced_w_ood=forced_w_ood,
        )
        none_list = [None] * len(indices)
        c_id_l = c_id.tolist() if c_id is not None else none_list
        c_ood_l = c_ood.tolist() if c_ood is not None else none_list
        chosen = [pairs[i] for i in indices]
        for i, pair, row, wi, wo, ci, co in zip(
            indices, chosen, fused, w_id.tolist(), w_ood.tolist(), c_id_l, c_ood_l
        ):
            out[i] = PseudoAnswer(pair, row, mode, FusionWeights(wi, wo, ci, co, anchor_kind))

    if not done and not use_init:
        plain = list(range(n))
    else:
        plain = [i for i in range(n) if i not in done and i not in use_init]
    if plain:
        fill(plain, anchors[np.asarray(plain, dtype=np.int64)], None,
             AssignMode.MULTI_TEACHER, AnchorKind.BIAS_PRIOR)

    init_indices = sorted(use_init - done)
    if init_indices:
        init_rows = np.stack([init_by_index[i] for i in init_indices])
        fill(init_indices, init_rows, init_rows,
             AssignMode.MULTI_TEACHER_INIT, AnchorKind.INITIAL_ANSWER)
    return out
