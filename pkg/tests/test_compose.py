"""Pair composition: inverted index, reasonable pairs, yes/no sampling, paraphrases."""

from __future__ import annotations

import numpy as np
import pytest

from augforge.compose import (
    CandidatePair,
    PairOrigin,
    build_index,
    compose_paraphrases,
    compose_reasonable,
    merge_candidates,
    read_candidates,
    write_candidates,
    yesno_groups,
)
from augforge.corpus import AnswerCategory
from augforge.errors import MissingEmbedding
from augforge.matrixio import EmbeddingMatrix

from conftest import make_memory_corpus


def test_index_contents():
    corpus = make_memory_corpus(
        images={1: frozenset({"dog"}), 2: frozenset({"dog", "cat"})},
        questions=[],
    )
    index = build_index(corpus)
    assert index.lookup("dog").tolist() == [1, 2]
    assert index.lookup("cat").tolist() == [2]
    assert index.lookup("zebra").tolist() == []


def test_empty_corpus_index():
    corpus = make_memory_corpus(images={}, questions=[])
    assert build_index(corpus).by_category == {}


def test_index_matches_brute_force_scan():
    rng = np.random.default_rng(11)
    cats = [f"c{i}" for i in range(12)]
    images = {
        i: frozenset(rng.choice(cats, size=rng.integers(1, 5), replace=False).tolist())
        for i in range(100)
    }
    corpus = make_memory_corpus(images=images, questions=[])
    index = build_index(corpus)
    for c in cats:
        brute = sorted(i for i, cset in images.items() if c in cset)
        assert index.lookup(c).tolist() == brute


def test_reasonable_pair_requires_all_nouns():
    corpus = make_memory_corpus(
        images={1: frozenset({"girl", "sock", "bed"}), 2: frozenset({"suitcase", "car"})},
        questions=[
            (100, 2, frozenset({"girl", "sock"}), AnswerCategory.OTHER),
            (101, 1, frozenset({"suitcase", "trunk"}), AnswerCategory.OTHER),
        ],
    )
    pairs = compose_reasonable(corpus, build_index(corpus), seed=0)
    keys = {(p.question_id, p.image_id) for p in pairs}
    assert (100, 1) in keys  # girl and sock both detected
    assert all(q != 101 for q, _ in keys)  # trunk never detected


def test_own_image_pair_excluded():
    corpus = make_memory_corpus(
        images={1: frozenset({"dog"}), 2: frozenset({"dog"})},
        questions=[(100, 1, frozenset({"dog"}), AnswerCategory.OTHER)],
    )
    pairs = compose_reasonable(corpus, build_index(corpus), seed=0)
    assert [(p.question_id, p.image_id) for p in pairs] == [(100, 2)]


def brute_force_pairs(corpus, question_ids=None):
    keys = set()
    eligible = corpus.composable_ids if question_ids is None else corpus.composable_ids & set(question_ids)
    for qid in eligible:
        q = corpus.questions[qid]
        for image_id, image in corpus.images.items():
            if image_id == q.source_image_id:
                continue
            if q.nouns <= image.categories:
                keys.add((qid, image_id))
    return keys


def random_corpus(rng, n_questions, n_images, n_categories, yesno_fraction=0.3):
    cats = [f"c{i}" for i in range(n_categories)]
    images = {
        i: frozenset(rng.choice(cats, size=int(rng.integers(1, min(6, n_categories + 1))), replace=False).tolist())
        for i in range(n_images)
    }
    questions = []
    for qid in range(n_questions):
        nouns = frozenset(rng.choice(cats, size=int(rng.integers(1, 4)), replace=False).tolist())
        category = AnswerCategory.YESNO if rng.random() < yesno_fraction else AnswerCategory.OTHER
        questions.append((qid, int(rng.integers(0, n_images)), nouns, category))
    return make_memory_corpus(images=images, questions=questions)


def test_compose_equals_brute_force_with_sampling_disabled():
    rng = np.random.default_rng(42)
    corpus = random_corpus(rng, n_questions=200, n_images=100, n_categories=20)
    # k larger than any group keeps every yes/no question: pure subset semantics
    pairs = compose_reasonable(corpus, build_index(corpus), yesno_sample_k=10**6, seed=0)
    assert {(p.question_id, p.image_id) for p in pairs} == brute_force_pairs(corpus)


def test_output_sorted_and_unique():
    rng = np.random.default_rng(3)
    corpus = random_corpus(rng, 50, 30, 8)
    pairs = compose_reasonable(corpus, build_index(corpus), yesno_sample_k=10**6, seed=0)
    keys = [(p.question_id, p.image_id) for p in pairs]
    assert keys == sorted(keys)
    assert len(keys) == len(set(keys))


def test_yesno_group_cap_and_determinism():
    # 5 yes/no questions sharing one noun set, k=3
    corpus = make_memory_corpus(
        images={i: frozenset({"dog"}) for i in range(4)},
        questions=[(q, 0, frozenset({"dog"}), AnswerCategory.YESNO) for q in range(5)],
    )
    index = build_index(corpus)
    first = compose_reasonable(corpus, index, yesno_sample_k=3, seed=9)
    again = compose_reasonable(corpus, index, yesno_sample_k=3, seed=9)
    assert first == again
    sampled = {p.question_id for p in first}
    assert len(sampled) == 3
    assert all(p.origin is PairOrigin.YESNO_SAMPLED for p in first)
    other_seed = compose_reasonable(corpus, index, yesno_sample_k=3, seed=10)
    assert {p.question_id for p in other_seed} != sampled or other_seed == first


def test_yesno_groups_keyed_by_noun_set():
    corpus = make_memory_corpus(
        images={0: frozenset({"dog", "cat"})},
        questions=[
            (1, 0, frozenset({"dog"}), AnswerCategory.YESNO),
            (2, 0, frozenset({"dog"}), AnswerCategory.YESNO),
            (3, 0, frozenset({"cat"}), AnswerCategory.YESNO),
            (4, 0, frozenset({"dog"}), AnswerCategory.OTHER),
        ],
    )
    groups = yesno_groups(corpus, [1, 2, 3, 4])
    assert [(sorted(g.noun_set), g.question_ids) for g in groups] == [
        (["cat"], [3]),
        (["dog"], [1, 2]),
    ]


def test_jobs_do_not_change_output(tmp_path):
    rng = np.random.default_rng(7)
    corpus = random_corpus(rng, 120, 60, 10)
    index = build_index(corpus)
    reference = None
    for jobs in (1, 2, 4, 8):
        pairs = compose_reasonable(corpus, index, yesno_sample_k=3, seed=5, jobs=jobs)
        path = tmp_path / f"jobs{jobs}.jsonl"
        write_candidates(pairs, path)
        data = path.read_bytes()
        if reference is None:
            reference = data
        assert data == reference


def _question_embeddings(ids, rows):
    return EmbeddingMatrix(dim=rows.shape[1], ids=ids, rows=rows.astype(np.float32), id_kind="question")


def test_paraphrase_identical_rows_pair():
    corpus = make_memory_corpus(
        images={1: frozenset({"dog"}), 2: frozenset({"dog"})},
        questions=[
            (100, 1, frozenset({"dog"}), AnswerCategory.OTHER),
            (101, 2, frozenset({"dog"}), AnswerCategory.OTHER),
        ],
    )
    rows = np.array([[1.0, 0.0], [1.0, 0.0]])
    pairs = compose_paraphrases(corpus, _question_embeddings([100, 101], rows))
    keys = {(p.question_id, p.image_id, p.anchor_question_id) for p in pairs}
    assert (101, 1, 100) in keys and (100, 2, 101) in keys
    assert all(p.origin is PairOrigin.PARAPHRASE for p in pairs)
    assert all(p.relevance == pytest.approx(1.0) for p in pairs)


def test_paraphrase_orthogonal_rows_no_pair():
    corpus = make_memory_corpus(
        images={1: frozenset({"dog"}), 2: frozenset({"dog"})},
        questions=[
            (100, 1, frozenset({"dog"}), AnswerCategory.OTHER),
            (101, 2, frozenset({"dog"}), AnswerCategory.OTHER),
        ],
    )
    rows = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert compose_paraphrases(corpus, _question_embeddings([100, 101], rows)) == []


def test_paraphrase_missing_row():
    corpus = make_memory_corpus(
        images={1: frozenset({"dog"})},
        questions=[(100, 1, frozenset({"dog"}), AnswerCategory.OTHER)],
    )
    with pytest.raises(MissingEmbedding):
        compose_paraphrases(corpus, _question_embeddings([999], np.ones((1, 2))))


def test_paraphrase_matches_all_pairs_oracle():
    rng = np.random.default_rng(13)
    n = 10
    threshold, top_k = 0.9, 3
    images = {i: frozenset({"dog"}) for i in range(n)}
    questions = [(100 + i, i, frozenset({"dog"}), AnswerCategory.OTHER) for i in range(n)]
    corpus = make_memory_corpus(images=images, questions=questions)
    base = rng.normal(size=(3, 4))
    rows = np.stack([base[i % 3] + rng.normal(scale=0.05, size=4) for i in range(n)])
    qids = [100 + i for i in range(n)]
    pairs = compose_paraphrases(corpus, _question_embeddings(qids, rows), threshold, top_k)

    # oracle: all-pairs cosine over the float32-stored rows, threshold, top-k
    stored = rows.astype(np.float32).astype(np.float64)
    unit = stored / np.linalg.norm(stored, axis=1)[:, None]
    sims = unit @ unit.T
    expected = {}
    for i in range(n):
        cands = [(float(sims[i, j]), qids[j]) for j in range(n) if j != i and sims[i, j] >= threshold]
        cands.sort(key=lambda t: (-t[0], t[1]))
        for sim, qj in cands[:top_k]:
            if corpus.questions[qj].source_image_id == corpus.questions[qids[i]].source_image_id:
                continue
            key = (qj, corpus.questions[qids[i]].source_image_id)
            held = expected.get(key)
            if held is None or sim > held[0] or (sim == held[0] and qids[i] < held[1]):
                expected[key] = (sim, qids[i])
    got = {(p.question_id, p.image_id): (p.relevance, p.anchor_question_id) for p in pairs}
    assert set(got) == set(expected)
    for key, (sim, anchor) in expected.items():
        assert got[key][0] == pytest.approx(sim, abs=1e-6)
        assert got[key][1] == anchor


def test_merge_prefers_paraphrase():
    composed = [CandidatePair(image_id=1, question_id=100, origin=PairOrigin.COMPOSED)]
    para = [CandidatePair(image_id=1, question_id=100, origin=PairOrigin.PARAPHRASE,
                          relevance=0.99, anchor_question_id=50)]
    merged = merge_candidates(composed, para)
    assert len(merged) == 1
    assert merged[0].origin is PairOrigin.PARAPHRASE


def test_candidate_dump_round_trip(tmp_path):
    pairs = [
        CandidatePair(image_id=2, question_id=7, origin=PairOrigin.COMPOSED, relevance=0.5, rank=1),
        CandidatePair(image_id=3, question_id=9, origin=PairOrigin.PARAPHRASE,
                      relevance=0.97, anchor_question_id=4),
    ]
    path = write_candidates(pairs, tmp_path / "cands.jsonl")
    back = read_candidates(path)
    assert [(p.question_id, p.image_id, p.origin) for p in back] == \
        [(p.question_id, p.image_id, p.origin) for p in pairs]
    assert back[1].anchor_question_id == 4
