"""Corpus ingestion and statistics.

Reads the three training inputs (questions JSON, annotations JSON, detections
JSONL), cross-references them, and derives the answer vocabulary and the
per-question-type answer prior. The corpus is immutable after load and safe to
share across workers.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DanglingReference, DuplicateId, EmptyType, MalformedFile

log = logging.getLogger(__name__)

# Detector ingestion thresholds. Re-applied here even if an upstream extractor
# already filtered, so the engine is the single source of truth.
OBJECT_SCORE_MIN = 0.8
ATTRIBUTE_SCORE_MIN = 0.4
MAX_OBJECTS_PER_IMAGE = 36

SOFT_SCORE_DIVISOR = 3  # score(a) = min(count(a) / 3, 1) over the 10 annotator answers
ANNOTATOR_COUNT = 10


class AnswerCategory(str, Enum):
    YESNO = "yes/no"
    NUMBER = "number"
    OTHER = "other"

    @classmethod
    def from_answer_type(cls, answer_type: str) -> "AnswerCategory":
        t = answer_type.strip().lower()
        if t == "yes/no":
            return cls.YESNO
        if t == "number":
            return cls.NUMBER
        return cls.OTHER


@dataclass(frozen=True)
class DetectedAttribute:
    name: str
    score: float


@dataclass(frozen=True)
class DetectedObject:
    category: str
    score: float
    attributes: tuple[DetectedAttribute, ...] = ()


@dataclass
class ImageRecord:
    image_id: int
    objects: list[DetectedObject]
    category_counts: dict[str, int]

    @property
    def categories(self) -> frozenset[str]:
        return frozenset(self.category_counts)


@dataclass
class QuestionRecord:
    question_id: int
    source_image_id: int
    text: str
    question_type: str
    answer_category: AnswerCategory
    nouns: frozenset[str] | None = None  # None until noun extraction runs


@dataclass
class GroundTruth:
    question_id: int
    raw_answers: list[str]
    soft_scores: dict[str, float]  # normalized answer string -> min(count/3, 1)
    majority_answer: str  # normalized multiple_choice_answer


@dataclass
class AnswerVocab:
    """Answer strings in descending training-set frequency (ties lexicographic)."""

    entries: tuple[str, ...]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {a: i for i, a in enumerate(self.entries)}
        if len(self.index) != len(self.entries):
            raise DuplicateId("answer vocabulary has duplicate entries")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, answer: str) -> bool:
        return answer in self.index

    def vectorize(self, scores: dict[str, float]) -> tuple[np.ndarray, int]:
        """Dense score vector over the vocab plus the count of dropped OOV answers."""
        vec = np.zeros(len(self.entries), dtype=np.float64)
        dropped = 0
        for answer, score in scores.items():
            i = self.index.get(answer)
            if i is None:
                dropped += 1
            else:
                vec[i] = score
        return vec, dropped


@dataclass
class BiasPrior:
    """Per-question-type answer distribution over the vocabulary."""

    per_type: dict[str, np.ndarray]

    def vector(self, question_type: str) -> np.ndarray:
        try:
            return self.per_type[question_type]
        except KeyError:
            raise EmptyType(f"no bias prior for question type {question_type!r}") from None


@dataclass
class Corpus:
    questions: dict[int, QuestionRecord]
    images: dict[int, ImageRecord]
    ground_truths: dict[int, GroundTruth]
    composable_ids: frozenset[int] | None = None  # set by noun pruning
    prune_fraction: float | None = None

    def question_ids(self) -> list[int]:
        return sorted(self.questions)

    def stats(self) -> dict:
        n = len(self.questions)
        by_cat = Counter(q.answer_category for q in self.questions.values())
        return {
            "questions": n,
            "images": len(self.images),
            "annotations": len(self.ground_truths),
            "question_types": len({q.question_type for q in self.questions.values()}),
            "yesno_fraction": (by_cat[AnswerCategory.YESNO] / n) if n else 0.0,
            "number_fraction": (by_cat[AnswerCategory.NUMBER] / n) if n else 0.0,
            "other_fraction": (by_cat[AnswerCategory.OTHER] / n) if n else 0.0,
            "prune_fraction": self.prune_fraction,
        }


# Answer normalization shared by vocabulary building, the rule-based answers,
# and the accuracy metric (the benchmark scorer's published rules).
_CONTRACTIONS = {
    "aint": "ain't", "arent": "aren't", "cant": "can't", "couldve": "could've",
    "couldnt": "couldn't", "didnt": "didn't", "doesnt": "doesn't", "dont": "don't",
    "hadnt": "hadn't", "hasnt": "hasn't", "havent": "haven't", "hed": "he'd",
    "hes": "he's", "howd": "how'd", "howll": "how'll", "hows": "how's",
    "id": "i'd", "ill": "i'll", "im": "i'm", "ive": "i've", "isnt": "isn't",
    "itd": "it'd", "itll": "it'll", "lets": "let's", "maam": "ma'am",
    "mightve": "might've", "mustve": "must've", "shant": "shan't", "shed": "she'd",
    "shes": "she's", "shouldve": "should've", "shouldnt": "shouldn't",
    "somebodyd": "somebody'd", "somebodyll": "somebody'll", "somebodys": "somebody's",
    "someoned": "someone'd", "someonell": "someone'll", "someones": "someone's",
    "somethingd": "something'd", "somethingll": "something'll", "thats": "that's",
    "thered": "there'd", "therere": "there're", "theres": "there's", "theyd": "they'd",
    "theyll": "they'll", "theyre": "they're", "theyve": "they've", "twas": "'twas",
    "wasnt": "wasn't", "wed": "we'd", "weve": "we've", "werent": "weren't",
    "whatll": "what'll", "whatre": "what're", "whats": "what's", "whatve": "what've",
    "whens": "when's", "whered": "where'd", "wheres": "where's", "whereve": "where've",
    "whod": "who'd", "wholl": "who'll", "whos": "who's", "whove": "who've",
    "whyll": "why'll", "whyre": "why're", "whys": "why's", "wont": "won't",
    "wouldve": "would've", "wouldnt": "wouldn't", "yall": "y'all", "youd": "you'd",
    "youll": "you'll", "youre": "you're", "youve": "you've",
}
_NUMBER_WORDS = {
    "none": "0", "zero": "0", "one": "1", "two": "2", "three": "3", "four": "4",
    "five": "5", "six": "6", "seven": "7", "eight": "8", "nine": "9", "ten": "10",
}
_ARTICLES = {"a", "an", "the"}
_PUNCT = list(";/[]\"{}()=+\\_-><@`,?!")
_COMMA_IN_NUMBER = re.compile(r"(\d)(,)(\d)")
_PERIOD = re.compile(r"(?<!\d)\.(?!\d)")


def normalize_answer(answer: str) -> str:
    """Lowercase, strip punctuation/articles, map digit words, fix contractions."""
    s = answer.replace("\n", " ").replace("\t", " ").strip().lower()
    s = _COMMA_IN_NUMBER.sub(r"\1\3", s)
    for p in _PUNCT:
        s = s.replace(p, "" if p != "-" and p != "/" else " ")
    s = _PERIOD.sub("", s)
    words = []
    for word in s.split():
        word = _NUMBER_WORDS.get(word, word)
        if word in _ARTICLES:
            continue
        words.append(_CONTRACTIONS.get(word, word))
    return " ".join(words)


def _load_json(path: Path, top_key: str) -> list:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise MalformedFile(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: invalid JSON at line {exc.lineno} col {exc.colno}") from exc
    if not isinstance(payload, dict) or top_key not in payload:
        raise MalformedFile(f"{path}: expected a JSON object with a {top_key!r} list")
    return payload[top_key]


def _ingest_detection(record: dict, path: Path, lineno: int) -> ImageRecord:
    try:
        image_id = int(record["image_id"])
        raw_objects = record.get("objects", [])
        objects = []
        for obj in raw_objects:
            score = float(obj["score"])
            if score < OBJECT_SCORE_MIN:
                continue
            attrs = tuple(
                DetectedAttribute(name=str(a["name"]).strip().lower(), score=float(a["score"]))
                for a in obj.get("attributes", [])
                if float(a["score"]) >= ATTRIBUTE_SCORE_MIN
            )
            objects.append(
                DetectedObject(category=str(obj["category"]).strip().lower(), score=score, attributes=attrs)
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"{path}: line {lineno}: bad detection record ({exc})") from exc
    for obj in objects:
        if not (0.0 <= obj.score <= 1.0) or any(not (0.0 <= a.score <= 1.0) for a in obj.attributes):
            raise MalformedFile(f"{path}: line {lineno}: detection score outside [0, 1]")
    # Cap at 36 detections, keeping the most confident (ties: category, order).
    if len(objects) > MAX_OBJECTS_PER_IMAGE:
        order = sorted(range(len(objects)), key=lambda i: (-objects[i].score, objects[i].category, i))
        objects = [objects[i] for i in sorted(order[:MAX_OBJECTS_PER_IMAGE])]
    counts = Counter(obj.category for obj in objects)
    return ImageRecord(image_id=image_id, objects=objects, category_counts=dict(counts))


def load_corpus(questions_path: str | Path, annotations_path: str | Path,
                detections_path: str | Path) -> Corpus:
    """Load and cross-reference the three input files.

    Raises MalformedFile on parse problems, DuplicateId on repeated ids, and
    DanglingReference when an annotation names an unknown question or a
    question names an image with no detection record.
    """
    questions_path = Path(questions_path)
    annotations_path = Path(annotations_path)
    detections_path = Path(detections_path)

    images: dict[int, ImageRecord] = {}
    try:
        lines = detections_path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise MalformedFile(f"{detections_path}: file not found") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"{detections_path}: line {lineno}: invalid JSON ({exc.msg})") from exc
        image = _ingest_detection(record, detections_path, lineno)
        if image.image_id in images:
            raise DuplicateId(f"{detections_path}: line {lineno}: duplicate image_id {image.image_id}")
        images[image.image_id] = image

    raw_questions = _load_json(questions_path, "questions")
    questions: dict[int, QuestionRecord] = {}
    pending: dict[int, dict] = {}
    for i, q in enumerate(raw_questions):
        try:
            qid = int(q["question_id"])
            image_id = int(q["image_id"])
            text = str(q["question"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"{questions_path}: questions[{i}]: bad record ({exc})") from exc
        if qid in pending:
            raise DuplicateId(f"{questions_path}: duplicate question_id {qid}")
        if image_id not in images:
            raise DanglingReference(f"{questions_path}: question {qid} references unknown image {image_id}")
        pending[qid] = {"image_id": image_id, "text": text}

    raw_annotations = _load_json(annotations_path, "annotations")
    ground_truths: dict[int, GroundTruth] = {}
    for i, ann in enumerate(raw_annotations):
        try:
            qid = int(ann["question_id"])
            qtype = str(ann["question_type"]).strip().lower()
            atype = str(ann["answer_type"])
            answers = [str(a["answer"]) for a in ann["answers"]]
            majority = str(ann["multiple_choice_answer"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"{annotations_path}: annotations[{i}]: bad record ({exc})") from exc
        if qid not in pending:
            raise DanglingReference(f"{annotations_path}: annotation references unknown question_id {qid}")
        if qid in ground_truths:
            raise DuplicateId(f"{annotations_path}: duplicate annotation for question_id {qid}")
        if len(answers) != ANNOTATOR_COUNT:
            raise MalformedFile(
                f"{annotations_path}: annotations[{i}]: expected {ANNOTATOR_COUNT} answers, got {len(answers)}"
            )
        counts = Counter(normalize_answer(a) for a in answers)
        soft = {a: min(c / SOFT_SCORE_DIVISOR, 1.0) for a, c in counts.items()}
        ground_truths[qid] = GroundTruth(
            question_id=qid,
            raw_answers=answers,
            soft_scores=soft,
            majority_answer=normalize_answer(majority),
        )
        info = pending[qid]
        questions[qid] = QuestionRecord(
            question_id=qid,
            source_image_id=info["image_id"],
            text=info["text"],
            question_type=qtype,
            answer_category=AnswerCategory.from_answer_type(atype),
        )

    missing = set(pending) - set(questions)
    if missing:
        raise DanglingReference(
            f"{annotations_path}: {len(missing)} questions without annotations (e.g. {sorted(missing)[:3]})"
        )
    log.info("loaded corpus: %d questions, %d images", len(questions), len(images))
    return Corpus(questions=questions, images=images, ground_truths=ground_truths)


def build_answer_vocab(corpus: Corpus, min_count: int = 0) -> AnswerVocab:
    """Answers seen at least `min_count` times among raw annotator answers."""
    counts = Counter()
    for gt in corpus.ground_truths.values():
        counts.update(normalize_answer(a) for a in gt.raw_answers)
    counts.pop("", None)
    kept = [a for a, c in counts.items() if c >= min_count]
    kept.sort(key=lambda a: (-counts[a], a))
    if not kept:
        log.warning("answer vocabulary is empty (min_count=%d)", min_count)
    return AnswerVocab(entries=tuple(kept))


def build_bias_prior(corpus: Corpus, vocab: AnswerVocab) -> BiasPrior:
    """Per-type answer distribution: summed soft scores, normalized to 1."""
    sums: dict[str, np.ndarray] = defaultdict(lambda: np.zeros(len(vocab), dtype=np.float64))
    dropped = 0
    for q in corpus.questions.values():
        gt = corpus.ground_truths[q.question_id]
        vec, d = vocab.vectorize(gt.soft_scores)
        dropped += d
        sums[q.question_type] += vec
    if dropped:
        log.info("bias prior: dropped %d out-of-vocabulary answer entries", dropped)
    per_type = {}
    for qtype, vec in sums.items():
        total = vec.sum()
        if total <= 0.0:
            raise EmptyType(f"question type {qtype!r} has no in-vocabulary answer mass")
        per_type[qtype] = vec / total
    return BiasPrior(per_type=per_type)
