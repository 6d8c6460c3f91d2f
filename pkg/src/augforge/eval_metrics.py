"""Accuracy scoring and the in-domain / out-of-distribution trade-off metric."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import AnswerCategory, Corpus, normalize_answer
from .errors import EmptyInput, MalformedFile, NonPositiveInput, UnknownQuestion

log = logging.getLogger(__name__)

ACCURACY_DIVISOR = 3  # an answer matching 3+ of the 10 annotators scores full credit


def vqa_accuracy(predicted_answer: str, raw_answers: list[str]) -> float:
    """min(matching annotators / 3, 1) after answer normalization."""
    predicted = normalize_answer(predicted_answer)
    counts = Counter(normalize_answer(a) for a in raw_answers)
    return min(counts[predicted] / ACCURACY_DIVISOR, 1.0)


def harmonic_mean(id_acc: float, ood_acc: float) -> float:
    """2ab / (a + b); both accuracies must be positive."""
    if id_acc <= 0.0 or ood_acc <= 0.0:
        raise NonPositiveInput(f"harmonic mean needs positive inputs, got ({id_acc}, {ood_acc})")
    return 2.0 * id_acc * ood_acc / (id_acc + ood_acc)


@dataclass
class EvalResult:
    overall: float  # percentage
    per_category: dict[AnswerCategory, float]
    per_category_n: dict[AnswerCategory, int]
    n: int

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "n": self.n,
            "per_category": {c.value: acc for c, acc in sorted(self.per_category.items(), key=lambda kv: kv[0].value)},
            "per_category_n": {c.value: n for c, n in sorted(self.per_category_n.items(), key=lambda kv: kv[0].value)},
        }


def evaluate(predictions: dict[int, str], corpus: Corpus) -> EvalResult:
    """Overall and per-category accuracy (percent) over the prediction set."""
    if not predictions:
        raise EmptyInput("no predictions to evaluate")
    totals: dict[AnswerCategory, float] = {c: 0.0 for c in AnswerCategory}
    counts: dict[AnswerCategory, int] = {c: 0 for c in AnswerCategory}
    for qid, answer in predictions.items():
        q = corpus.questions.get(qid)
        if q is None:
            raise UnknownQuestion(f"prediction for unknown question_id {qid}")
        acc = vqa_accuracy(answer, corpus.ground_truths[qid].raw_answers)
        totals[q.answer_category] += acc
        counts[q.answer_category] += 1
    per_category = {c: (100.0 * totals[c] / counts[c]) if counts[c] else 0.0 for c in AnswerCategory}
    n = sum(counts.values())
    overall = 100.0 * sum(totals.values()) / n
    return EvalResult(
        overall=overall,
        per_category={c: per_category[c] for c in AnswerCategory if counts[c]},
        per_category_n={c: counts[c] for c in AnswerCategory if counts[c]},
        n=n,
    )


def read_predictions(path: str | Path) -> dict[int, str]:
    """Predictions file: JSON Lines {"question_id": int, "answer": str}."""
    predictions: dict[int, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise MalformedFile(f"{path}: file not found") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            qid = int(record["question_id"])
            answer = str(record["answer"])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise MalformedFile(f"{path}: line {lineno}: bad prediction record ({exc})") from exc
        if qid in predictions:
            raise MalformedFile(f"{path}: line {lineno}: duplicate prediction for question {qid}")
        predictions[qid] = answer
    return predictions


_CATEGORY_LABELS = {
    AnswerCategory.YESNO: "Yes/No",
    AnswerCategory.NUMBER: "Number",
    AnswerCategory.OTHER: "Other",
}


def render_table(result: EvalResult) -> str:
    """Aligned text table of the evaluation result."""
    rows = [("Category", "N", "Accuracy (%)")]
    for category in AnswerCategory:
        if category in result.per_category:
            rows.append((
                _CATEGORY_LABELS[category],
                str(result.per_category_n[category]),
                f"{result.per_category[category]:.2f}",
            ))
    rows.append(("All", str(result.n), f"{result.overall:.2f}"))
    widths = [max(len(r[c]) for r in rows) for c in range(3)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[c] for c in range(3)))
    return "\n".join(lines) + "\n"
