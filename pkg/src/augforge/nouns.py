"""Meaningful-noun extraction by lexicon matching against detector categories.

A question token counts as a meaningful noun only when its canonical
(singular) form is one of the detector's object categories and is not a stop
noun. Plural surface forms are generated from the categories with
deterministic inflection rules plus a small irregulars table.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus, QuestionRecord
from .errors import MalformedFile

log = logging.getLogger(__name__)

DEFAULT_STOP_NOUNS = frozenset({"picture", "photo", "image", "photograph"})

IRREGULAR_PLURALS = {
    "man": "men",
    "woman": "women",
    "person": "people",
    "child": "children",
    "foot": "feet",
    "tooth": "teeth",
    "mouse": "mice",
    "leaf": "leaves",
    "knife": "knives",
    "shelf": "shelves",
}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def pluralize(word: str, irregulars: dict[str, str] | None = None) -> str:
    """Plural surface form of a single lowercase word."""
    table = IRREGULAR_PLURALS if irregulars is None else irregulars
    if word in table:
        return table[word]
    if word.endswith(("s", "x", "z", "ch", "sh")):
        return word + "es"
    if len(word) > 1 and word.endswith("y") and word[-2] not in "aeiou":
        return word[:-1] + "ies"
    return word + "s"


def pluralize_category(category: str, irregulars: dict[str, str] | None = None) -> str:
    """Multiword categories pluralize their last word ("traffic light" -> "traffic lights")."""
    head, sep, last = category.rpartition(" ")
    return head + sep + pluralize(last, irregulars)


@dataclass
class NounLexicon:
    canonical: frozenset[str]
    plural_map: dict[str, str]  # plural surface form -> canonical category
    stop_nouns: frozenset[str]

    def canonicalize(self, surface: str) -> str | None:
        """Canonical category for a surface form, or None when it is not one."""
        if surface in self.canonical:
            return surface
        return self.plural_map.get(surface)


def load_lexicon_overrides(path: str | Path) -> tuple[frozenset[str], dict[str, str]]:
    """Optional override file: {"stop_nouns": [...], "irregular_plurals": {...}}."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MalformedFile(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: invalid JSON at line {exc.lineno} col {exc.colno}") from exc
    stop = frozenset(str(s).lower() for s in payload.get("stop_nouns", []))
    irregulars = {str(k).lower(): str(v).lower() for k, v in payload.get("irregular_plurals", {}).items()}
    return stop, irregulars


def build_lexicon(
    corpus: Corpus,
    extra_stop_nouns: frozenset[str] | set[str] = frozenset(),
    irregular_overrides: dict[str, str] | None = None,
) -> NounLexicon:
    """Lexicon over every detected category in the corpus."""
    canonical = set()
    for image in corpus.images.values():
        canonical.update(image.category_counts)
    irregulars = dict(IRREGULAR_PLURALS)
    if irregular_overrides:
        irregulars.update(irregular_overrides)
    plural_map: dict[str, str] = {}
    for category in sorted(canonical):
        plural = pluralize_category(category, irregulars)
        if plural in canonical:
            continue  # surface form is itself a category; the category wins
        if plural not in plural_map:
            plural_map[plural] = category
    stop = DEFAULT_STOP_NOUNS | frozenset(s.lower() for s in extra_stop_nouns)
    return NounLexicon(canonical=frozenset(canonical), plural_map=plural_map, stop_nouns=stop)


def extract_nouns(question: QuestionRecord | str, lexicon: NounLexicon) -> frozenset[str]:
    """Canonical meaningful nouns of a question. Bigrams are tried before unigrams
    so multiword categories like "traffic light" match as one noun."""
    text = question if isinstance(question, str) else question.text
    tokens = _TOKEN_RE.findall(text.lower())
    found: set[str] = set()
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens):
            bigram = tokens[i] + " " + tokens[i + 1]
            canonical = lexicon.canonicalize(bigram)
            if canonical is not None:
                if canonical not in lexicon.stop_nouns:
                    found.add(canonical)
                i += 2
                continue
        canonical = lexicon.canonicalize(tokens[i])
        if canonical is not None and canonical not in lexicon.stop_nouns:
            found.add(canonical)
        i += 1
    return frozenset(found)


def annotate_nouns(corpus: Corpus, lexicon: NounLexicon) -> Corpus:
    """Fill the nouns field of every question in place."""
    for q in corpus.questions.values():
        q.nouns = extract_nouns(q, lexicon)
    return corpus


def prune_nounless(corpus: Corpus) -> Corpus:
    """Mark questions without meaningful nouns as excluded from composition.

    The questions stay in the corpus (evaluation still sees them); only the
    composable set shrinks. Idempotent.
    """
    undecided = [q for q in corpus.questions.values() if q.nouns is None]
    if undecided:
        raise ValueError(f"{len(undecided)} questions have no extracted nouns yet")
    keep = frozenset(qid for qid, q in corpus.questions.items() if q.nouns)
    total = len(corpus.questions)
    corpus.composable_ids = keep
    corpus.prune_fraction = (total - len(keep)) / total if total else 0.0
    if corpus.prune_fraction:
        log.info("pruned %.1f%% of questions (no meaningful nouns)", 100 * corpus.prune_fraction)
    return corpus
