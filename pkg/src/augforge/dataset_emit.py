"""Serialize the augmented dataset with provenance, plus run statistics.

Three files per run: a questions file in the standard VQA schema (with fresh
question ids so the augmented set never collides with the original), a sparse
soft-labels JSONL keyed by the new ids, and a header describing the run.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import AnswerVocab, Corpus
from .errors import DuplicateId, MalformedFile
from .kd_assign import PseudoAnswer

log = logging.getLogger(__name__)

ENGINE_VERSION = "0.1.0"
LABEL_FLOOR = 1e-6  # entries below this are not written; fused labels are sparse in practice

QUESTIONS_FILE = "augmented_questions.json"
LABELS_FILE = "augmented_labels.jsonl"
HEADER_FILE = "header.json"
VOCAB_FILE = "vocab.json"


def _fnum(x: float) -> float:
    """Floats are written with 9 significant digits."""
    return float(f"{x:.9g}")


@dataclass
class EmitResult:
    questions_path: Path
    labels_path: Path
    header_path: Path
    vocab_path: Path
    count: int


def fresh_question_ids(samples: list[PseudoAnswer], corpus: Corpus) -> list[int]:
    """New ids: max original id + dense counter, in emitted sample order."""
    base = max(corpus.questions, default=0) + 1
    return [base + i for i in range(len(samples))]


def emit(
    samples: list[PseudoAnswer],
    corpus: Corpus,
    vocab: AnswerVocab,
    out_dir: str | Path,
    config_digest: str = "",
    seed: int = 0,
    alpha_percent: float = 100.0,
    delta_percent: float = 100.0,
) -> EmitResult:
    """Write questions, labels, header, and vocabulary; deterministic bytes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ordered = sorted(samples, key=lambda s: (s.pair.question_id, s.pair.image_id, s.pair.origin.value))
    new_ids = fresh_question_ids(ordered, corpus)
    if len(set(new_ids)) != len(new_ids):
        raise DuplicateId("fresh question ids collide")

    questions = []
    label_lines = []
    origin_counts = Counter()
    category_counts = Counter()
    for new_id, sample in zip(new_ids, ordered):
        pair = sample.pair
        q = corpus.questions[pair.question_id]
        questions.append({"image_id": pair.image_id, "question": q.text, "question_id": new_id})
        entries = [
            [int(i), _fnum(float(w))]
            for i, w in enumerate(sample.distribution)
            if w >= LABEL_FLOOR
        ]
        record = {
            "question_id": new_id,
            "image_id": pair.image_id,
            "labels": entries,
            "mode": sample.mode.value,
            "w_id": _fnum(sample.weights.w_id) if sample.weights else 1.0,
            "w_ood": _fnum(sample.weights.w_ood) if sample.weights else 0.0,
            "origin": pair.origin.value,
            "relevance": _fnum(pair.relevance) if pair.relevance is not None else None,
            "source_question_id": pair.question_id,
        }
        if pair.anchor_question_id is not None:
            record["anchor_question_id"] = pair.anchor_question_id
        label_lines.append(json.dumps(record, sort_keys=True))
        origin_counts[pair.origin.value] += 1
        category_counts[q.answer_category.value] += 1

    questions_path = out_dir / QUESTIONS_FILE
    questions_path.write_text(json.dumps({"questions": questions}, sort_keys=True) + "\n", encoding="utf-8")

    labels_path = out_dir / LABELS_FILE
    labels_path.write_text("\n".join(label_lines) + ("\n" if label_lines else ""), encoding="utf-8")

    vocab_path = out_dir / VOCAB_FILE
    vocab_path.write_text(json.dumps({"answers": list(vocab.entries)}) + "\n", encoding="utf-8")

    header = {
        "engine_version": ENGINE_VERSION,
        "config_digest": config_digest,
        "seed": seed,
        "alpha_percent": _fnum(alpha_percent),
        "delta_percent": _fnum(delta_percent),
        "counts": {
            "total": len(ordered),
            "by_origin": dict(sorted(origin_counts.items())),
            "by_answer_category": dict(sorted(category_counts.items())),
        },
        "first_new_question_id": new_ids[0] if new_ids else None,
    }
    header_path = out_dir / HEADER_FILE
    header_path.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    log.info("emitted %d augmented samples to %s", len(ordered), out_dir)
    return EmitResult(
        questions_path=questions_path,
        labels_path=labels_path,
        header_path=header_path,
        vocab_path=vocab_path,
        count=len(ordered),
    )


@dataclass
class EmittedSample:
    question_id: int
    image_id: int
    labels: dict[int, float]
    mode: str
    origin: str
    w_id: float
    w_ood: float
    relevance: float | None
    source_question_id: int | None = None
    anchor_question_id: int | None = None


def load_emitted(out_dir: str | Path) -> tuple[list[dict], list[EmittedSample], dict]:
    """Re-ingest an emitted dataset: (questions, labeled samples, header)."""
    out_dir = Path(out_dir)
    try:
        questions = json.loads((out_dir / QUESTIONS_FILE).read_text(encoding="utf-8"))["questions"]
        header = json.loads((out_dir / HEADER_FILE).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise MalformedFile(f"{out_dir}: missing emitted file ({exc})") from None
    except (json.JSONDecodeError, KeyError) as exc:
        raise MalformedFile(f"{out_dir}: bad emitted file ({exc})") from exc
    samples = []
    for lineno, line in enumerate((out_dir / LABELS_FILE).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
            samples.append(
                EmittedSample(
                    question_id=int(r["question_id"]),
                    image_id=int(r["image_id"]),
                    labels={int(i): float(w) for i, w in r["labels"]},
                    mode=str(r["mode"]),
                    origin=str(r["origin"]),
                    w_id=float(r["w_id"]),
                    w_ood=float(r["w_ood"]),
                    relevance=r.get("relevance"),
                    source_question_id=r.get("source_question_id"),
                    anchor_question_id=r.get("anchor_question_id"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"{LABELS_FILE}: line {lineno}: bad record ({exc})") from exc
    return questions, samples, header


def stats_report(
    samples: list[EmittedSample] | list[PseudoAnswer],
    corpus: Corpus,
    alpha_percent: float | None = None,
    delta_percent: float | None = None,
    yesno_group_count: int | None = None,
) -> dict:
    """Machine-readable run summary; `render_stats` formats it for humans."""
    origin_counts = Counter()
    mode_counts = Counter()
    category_counts = Counter()
    for s in samples:
        if isinstance(s, EmittedSample):
            origin_counts[s.origin] += 1
            mode_counts[s.mode] += 1
            qid = s.source_question_id
        else:
            origin_counts[s.pair.origin.value] += 1
            mode_counts[s.mode.value] += 1
            qid = s.pair.question_id
        if qid is not None and qid in corpus.questions:
            category_counts[corpus.questions[qid].answer_category.value] += 1
    report = {
        "original_samples": len(corpus.questions),
        "augmented_samples": sum(origin_counts.values()),
        "total_samples": len(corpus.questions) + sum(origin_counts.values()),
        "by_origin": dict(sorted(origin_counts.items())),
        "by_mode": dict(sorted(mode_counts.items())),
        "by_answer_category": dict(sorted(category_counts.items())),
        "prune_fraction": corpus.prune_fraction,
        "corpus": corpus.stats(),
    }
    if alpha_percent is not None:
        report["alpha_percent"] = alpha_percent
    if delta_percent is not None:
        report["delta_percent"] = delta_percent
    if yesno_group_count is not None:
        report["yesno_group_count"] = yesno_group_count
    if not origin_counts:
        report["empty_augmentation"] = True
        log.warning("augmentation produced zero samples")
    return report


def render_stats(report: dict) -> str:
    lines = ["augmentation run summary", "========================"]
    lines.append(f"original samples   {report['original_samples']}")
    lines.append(f"augmented samples  {report['augmented_samples']}")
    lines.append(f"total samples      {report['total_samples']}")
    if report.get("empty_augmentation"):
        lines.append("WARNING: empty augmentation")
    if "alpha_percent" in report:
        lines.append(f"alpha percent      {report['alpha_percent']}")
    if "delta_percent" in report:
        lines.append(f"delta percent      {report['delta_percent']}")
    if "yesno_group_count" in report:
        lines.append(f"yes/no groups      {report['yesno_group_count']}")
    if report.get("prune_fraction") is not None:
        lines.append(f"pruned questions   {100 * report['prune_fraction']:.1f}%")
    for section in ("by_origin", "by_answer_category", "by_mode"):
        lines.append("")
        lines.append(section.replace("_", " "))
        for key, count in report[section].items():
            lines.append(f"  {key:<22}{count}")
    return "\n".join(lines) + "\n"


def write_stats_tsv(report: dict, path: str | Path) -> Path:
    """Delimited flat view of the summary (one key per row)."""
    path = Path(path)
    rows = [
        ("original_samples", report["original_samples"]),
        ("augmented_samples", report["augmented_samples"]),
        ("total_samples", report["total_samples"]),
    ]
    for section in ("by_origin", "by_answer_category", "by_mode"):
        for key, count in report[section].items():
            rows.append((f"{section}.{key}", count))
    if report.get("prune_fraction") is not None:
        rows.append(("prune_fraction", _fnum(report["prune_fraction"])))
    for key in ("alpha_percent", "delta_percent", "yesno_group_count"):
        if key in report:
            rows.append((key, report[key]))
    with open(path, "w", encoding="utf-8") as f:
        f.write("key\tvalue\n")
        for key, value in rows:
            f.write(f"{key}\t{value}\n")
    return path
