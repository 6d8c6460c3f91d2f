"""End-to-end orchestration over a single declarative config.

Stages communicate through files in the output directory, so the monolithic
run and the per-stage subcommands produce byte-identical trees: `run` simply
invokes the same stage functions in order. External teachers make it a
two-phase flow (phase 1 writes the request files; phase 2 resumes once the
prediction matrices exist).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import compose as compose_mod
from . import dataset_emit, eval_metrics, initial_rules, kd_assign, relevance, report, teacher_hub
from .corpus import AnswerCategory, AnswerVocab, Corpus, build_answer_vocab, build_bias_prior, load_corpus
from .errors import ConfigError, MalformedFile, NoNoun
from .matrixio import read_matrix
from .nouns import annotate_nouns, build_lexicon, load_lexicon_overrides, prune_nounless

log = logging.getLogger(__name__)

CANDIDATES_FILE = "candidates.jsonl"
SCORED_FILE = "scored.jsonl"
ASSIGNED_FILE = "assigned.jsonl"
COMPOSE_META_FILE = "compose_meta.json"
TEACHER_REQUEST_FILE = "teacher_request.jsonl"
QA_PROMPT_REQUEST_FILE = "qa_prompt_request.jsonl"

MODES = ("basic", "extra")


@dataclass
class RunConfig:
    questions: Path
    annotations: Path
    detections: Path
    output_dir: Path
    image_embeddings: Path | None = None
    noun_prompt_embeddings: Path | None = None
    question_embeddings: Path | None = None
    qa_prompt_embeddings: Path | None = None
    teachers: dict[str, teacher_hub.TeacherSpec] = field(default_factory=dict)
    alpha_percent: float = 10.0
    delta_percent: float = 100.0
    yesno_sample_k: int = compose_mod.DEFAULT_YESNO_SAMPLE_K
    paraphrase_threshold: float = compose_mod.DEFAULT_PARAPHRASE_THRESHOLD
    paraphrase_top_k: int = compose_mod.DEFAULT_PARAPHRASE_TOP_K
    seed: int = 0
    mode: str = "basic"
    vocab_min_count: int = 0
    stop_nouns: tuple[str, ...] = ()
    noun_overrides: Path | None = None
    fixed_w_ood: float | None = None
    jobs: int = 1

    def validate(self) -> None:
        if not (0.0 < self.alpha_percent <= 100.0):
            raise ConfigError(f"alpha_percent must be in (0, 100], got {self.alpha_percent}")
        if not (0.0 <= self.delta_percent <= 100.0):
            raise ConfigError(f"delta_percent must be in [0, 100], got {self.delta_percent}")
        if self.yesno_sample_k < 1:
            raise ConfigError(f"yesno_sample_k must be >= 1, got {self.yesno_sample_k}")
        if not (0.0 < self.paraphrase_threshold <= 1.0):
            raise ConfigError(f"paraphrase_threshold must be in (0, 1], got {self.paraphrase_threshold}")
        if self.paraphrase_top_k < 0:
            raise ConfigError(f"paraphrase_top_k must be >= 0, got {self.paraphrase_top_k}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.fixed_w_ood is not None and not (0.0 <= self.fixed_w_ood <= 1.0):
            raise ConfigError(f"fixed_w_ood must be in [0, 1], got {self.fixed_w_ood}")
        if self.vocab_min_count < 0:
            raise ConfigError(f"vocab_min_count must be >= 0, got {self.vocab_min_count}")
        roles = set(self.teachers)
        if roles and not roles <= {"id", "ood"}:
            raise ConfigError(f"teacher roles must be 'id' and/or 'ood', got {sorted(roles)}")

    def digest(self) -> str:
        """Hash of the logical run parameters (paths excluded, so relocated but
        otherwise identical runs stamp the same digest)."""
        payload = {
            "uses_question_embeddings": self.question_embeddings is not None,
            "uses_qa_prompt_embeddings": self.qa_prompt_embeddings is not None,
            "teachers": {
                role: {"name": t.name, "kind": t.kind, "mix": t.mix, "seed": t.seed}
                for role, t in sorted(self.teachers.items())
            },
            "alpha_percent": self.alpha_percent,
            "delta_percent": self.delta_percent,
            "yesno_sample_k": self.yesno_sample_k,
            "paraphrase_threshold": self.paraphrase_threshold,
            "paraphrase_top_k": self.paraphrase_top_k,
            "seed": self.seed,
            "mode": self.mode,
            "vocab_min_count": self.vocab_min_count,
            "stop_nouns": sorted(self.stop_nouns),
            "fixed_w_ood": self.fixed_w_ood,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _resolve(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config; relative paths resolve against the config file."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} col {exc.colno}") from exc
    if overrides:
        payload.update({k: v for k, v in overrides.items() if v is not None})
    base = path.parent

    teachers = {}
    for role, spec in (payload.get("teachers") or {}).items():
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigError(f"teacher {role!r}: expected an object with a 'kind'")
        t_path = spec.get("path")
        teachers[role] = teacher_hub.TeacherSpec(
            name=spec.get("name", f"{role}-teacher"),
            kind=spec["kind"],
            path=str(_resolve(base, t_path)) if t_path else None,
            mix=float(spec.get("mix", 0.5)),
            seed=int(spec.get("seed", payload.get("seed", 0))),
        )

    try:
        cfg = RunConfig(
            questions=_resolve(base, payload["questions"]),
            annotations=_resolve(base, payload["annotations"]),
            detections=_resolve(base, payload["detections"]),
            output_dir=_resolve(base, payload["output_dir"]),
            image_embeddings=_resolve(base, payload.get("image_embeddings")),
            noun_prompt_embeddings=_resolve(base, payload.get("noun_prompt_embeddings")),
            question_embeddings=_resolve(base, payload.get("question_embeddings")),
            qa_prompt_embeddings=_resolve(base, payload.get("qa_prompt_embeddings")),
            teachers=teachers,
            alpha_percent=float(payload.get("alpha_percent", 10.0)),
            delta_percent=float(payload.get("delta_percent", 100.0)),
            yesno_sample_k=int(payload.get("yesno_sample_k", compose_mod.DEFAULT_YESNO_SAMPLE_K)),
            paraphrase_threshold=float(payload.get("paraphrase_threshold", compose_mod.DEFAULT_PARAPHRASE_THRESHOLD)),
            paraphrase_top_k=int(payload.get("paraphrase_top_k", compose_mod.DEFAULT_PARAPHRASE_TOP_K)),
            seed=int(payload.get("seed", 0)),
            mode=str(payload.get("mode", "basic")),
            vocab_min_count=int(payload.get("vocab_min_count", 0)),
            stop_nouns=tuple(payload.get("stop_nouns", ())),
            noun_overrides=_resolve(base, payload.get("noun_overrides")),
            fixed_w_ood=None if payload.get("fixed_w_ood") is None else float(payload["fixed_w_ood"]),
            jobs=int(payload.get("jobs", 1)),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing required config key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad config value ({exc})") from exc
    cfg.validate()
    return cfg


def question_in_mode(question, mode: str) -> bool:
    """Basic mode keeps the yes/no, counting, color, and "what" question types."""
    if mode == "extra":
        return True
    return (
        question.answer_category in (AnswerCategory.YESNO, AnswerCategory.NUMBER)
        or question.question_type.startswith("what")
    )


def prepare_corpus(cfg: RunConfig) -> Corpus:
    corpus = load_corpus(cfg.questions, cfg.annotations, cfg.detections)
    extra_stop, irregulars = frozenset(cfg.stop_nouns), None
    if cfg.noun_overrides is not None:
        file_stop, irregulars = load_lexicon_overrides(cfg.noun_overrides)
        extra_stop = extra_stop | file_stop
    lexicon = build_lexicon(corpus, extra_stop_nouns=extra_stop, irregular_overrides=irregulars)
    annotate_nouns(corpus, lexicon)
    prune_nounless(corpus)
    return corpus


def _mode_question_ids(corpus: Corpus, mode: str) -> list[int]:
    return [qid for qid, q in corpus.questions.items() if question_in_mode(q, mode)]


def run_compose(cfg: RunConfig) -> Path:
    """Stage 1: ingest, extract nouns, compose candidate pairs."""
    corpus = prepare_corpus(cfg)
    index = compose_mod.build_index(corpus)
    eligible = _mode_question_ids(corpus, cfg.mode)
    composed = compose_mod.compose_reasonable(
        corpus, index,
        yesno_sample_k=cfg.yesno_sample_k,
        seed=cfg.seed,
        question_ids=eligible,
        jobs=cfg.jobs,
    )
    paraphrases = []
    if cfg.question_embeddings is not None and cfg.paraphrase_top_k > 0:
        q_emb = read_matrix(cfg.question_embeddings, expect_kind="question")
        paraphrases = compose_mod.compose_paraphrases(
            corpus, q_emb,
            threshold=cfg.paraphrase_threshold,
            top_k=cfg.paraphrase_top_k,
        )
    candidates = compose_mod.merge_candidates(composed, paraphrases)
    out = cfg.output_dir / CANDIDATES_FILE
    compose_mod.write_candidates(candidates, out)

    groups = compose_mod.yesno_groups(
        corpus, [qid for qid in eligible if qid in (corpus.composable_ids or frozenset())]
    )
    meta = {
        "mode": cfg.mode,
        "prune_fraction": corpus.prune_fraction,
        "yesno_group_count": len(groups),
        "composed": sum(1 for p in candidates if p.origin is not compose_mod.PairOrigin.PARAPHRASE),
        "paraphrase": sum(1 for p in candidates if p.origin is compose_mod.PairOrigin.PARAPHRASE),
    }
    (cfg.output_dir / COMPOSE_META_FILE).write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    log.info("composed %d candidate pairs (%d paraphrase)", len(candidates), meta["paraphrase"])
    return out


def _initial_answer_prompt(corpus: Corpus, ia: initial_rules.InitialAnswer, vocab: AnswerVocab) -> str:
    """QA prompt for a rule-covered pair; the answer is the top-weight entry."""
    dist = ia.distribution
    best = min(
        (i for i in np.flatnonzero(dist == dist.max())),
        key=lambda i: vocab.entries[int(i)],
    )
    answer = vocab.entries[int(best)]
    return relevance.clip_rank_prompt(corpus.questions[ia.pair.question_id], answer)


def run_score(cfg: RunConfig) -> Path:
    """Stage 2: relevance scoring, alpha filtering, request files for phase 2."""
    corpus = prepare_corpus(cfg)
    candidates = compose_mod.read_candidates(cfg.output_dir / CANDIDATES_FILE)
    if cfg.image_embeddings is None or cfg.noun_prompt_embeddings is None:
        raise ConfigError("score requires image_embeddings and noun_prompt_embeddings")
    image_emb = read_matrix(cfg.image_embeddings, expect_kind="image")
    prompt_emb = read_matrix(cfg.noun_prompt_embeddings, expect_kind="noun_prompt")

    scoreable = [p for p in candidates if p.origin is not compose_mod.PairOrigin.PARAPHRASE]
    paraphrases = [p for p in candidates if p.origin is compose_mod.PairOrigin.PARAPHRASE]
    final: list[compose_mod.CandidatePair] = []
    if scoreable:
        scores = relevance.score_pairs(scoreable, image_emb, prompt_emb, corpus)
        final.extend(relevance.filter_top(scores, cfg.alpha_percent))
    final.extend(sorted(paraphrases, key=compose_mod.CandidatePair.key))

    out = cfg.output_dir / SCORED_FILE
    compose_mod.write_candidates(final, out)

    vocab = build_answer_vocab(corpus, cfg.vocab_min_count)
    (cfg.output_dir / dataset_emit.VOCAB_FILE).write_text(
        json.dumps({"answers": list(vocab.entries)}) + "\n", encoding="utf-8"
    )
    teacher_hub.write_request(final, corpus, cfg.output_dir / TEACHER_REQUEST_FILE)

    prompts = set()
    for ia in initial_rules.assign_initial_all(final, corpus, vocab):
        if ia.covered:
            try:
                prompts.add(_initial_answer_prompt(corpus, ia, vocab))
            except NoNoun:
                log.warning("no rank prompt for pair (%d, %d): noun not in text",
                            ia.pair.question_id, ia.pair.image_id)
    with open(cfg.output_dir / QA_PROMPT_REQUEST_FILE, "w", encoding="utf-8") as f:
        for prompt in sorted(prompts):
            f.write(json.dumps({"prompt": prompt}) + "\n")
    log.info("kept %d of %d scoreable pairs at alpha=%s", len(final) - len(paraphrases),
             len(scoreable), cfg.alpha_percent)
    return out


def teacher_predictions_ready(cfg: RunConfig) -> bool:
    """True when every external teacher's matrix files exist."""
    from .matrixio import matrix_paths

    for spec in cfg.teachers.values():
        if spec.kind == "external":
            matrix_path, sidecar_path = matrix_paths(spec.path)
            if not (matrix_path.exists() and sidecar_path.exists()):
                return False
    return True


def run_assign(cfg: RunConfig) -> Path:
    """Stage 3: teacher predictions + initial rules -> fused soft answers."""
    corpus = prepare_corpus(cfg)
    pairs = compose_mod.read_candidates(cfg.output_dir / SCORED_FILE)
    vocab = build_answer_vocab(corpus, cfg.vocab_min_count)
    prior = build_bias_prior(corpus, vocab)
    if not cfg.teachers:
        raise ConfigError("assign requires at least one teacher in the config")

    predictions = {
        role: teacher_hub.predict_batch(spec, pairs, corpus, vocab, prior)
        for role, spec in sorted(cfg.teachers.items())
    }
    pred_id = predictions.get("id")
    pred_ood = predictions.get("ood")

    initials = initial_rules.assign_initial_all(pairs, corpus, vocab)

    ranking = None
    need_ranking = (
        any(ia.covered for ia in initials)
        and 0.0 < cfg.delta_percent < 100.0
        and pred_id is not None and pred_ood is not None
    )
    if need_ranking:
        if cfg.qa_prompt_embeddings is None or cfg.image_embeddings is None:
            raise ConfigError(
                "a partial delta split needs qa_prompt_embeddings and image_embeddings"
            )
        image_emb = read_matrix(cfg.image_embeddings, expect_kind="image")
        qa_emb = read_matrix(cfg.qa_prompt_embeddings, expect_kind="qa_prompt")
        samples = []
        for k, ia in enumerate(initials):
            if not ia.covered:
                continue
            try:
                samples.append((ia.pair, _initial_answer_prompt(corpus, ia, vocab)))
            except NoNoun:
                # unrankable pair: fall back to the question-type prior
                initials[k] = initial_rules.InitialAnswer(pair=ia.pair, rule=initial_rules.RuleKind.NONE)
        ranking = relevance.rank_by_answer_quality(samples, image_emb, qa_emb)

    anchors = teacher_hub.prior_rows(pairs, corpus, prior)

    ground_truth_rows: dict[int, np.ndarray] = {}
    skip_indices: set[int] = set()
    for i, pair in enumerate(pairs):
        if pair.origin is not compose_mod.PairOrigin.PARAPHRASE:
            continue
        gt = corpus.ground_truths[pair.anchor_question_id]
        vec, _ = vocab.vectorize(gt.soft_scores)
        total = vec.sum()
        if total <= 0.0:
            skip_indices.add(i)
            continue
        ground_truth_rows[i] = vec / total
    if skip_indices:
        log.warning("dropped %d paraphrase pairs with no in-vocabulary ground truth", len(skip_indices))

    answers = kd_assign.assign_all(
        pairs,
        anchors=anchors,
        predictions_id=pred_id,
        predictions_ood=pred_ood,
        initial_answers=initials,
        delta_percent=cfg.delta_percent,
        ranking=ranking,
        ground_truth_rows=ground_truth_rows,
        skip_indices=skip_indices,
        forced_w_ood=cfg.fixed_w_ood,
    )

    out = cfg.output_dir / ASSIGNED_FILE
    with open(out, "w", encoding="utf-8") as f:
        for pair_id, answer in enumerate(answers):
            if answer is None:
                continue  # dropped paraphrase pair
            pair = answer.pair
            entries = [
                [int(i), float(f"{w:.9g}")]
                for i, w in enumerate(answer.distribution)
                if w >= dataset_emit.LABEL_FLOOR
            ]
            record = {
                "pair_id": pair_id,
                "image_id": pair.image_id,
                "question_id": pair.question_id,
                "origin": pair.origin.value,
                "mode": answer.mode.value,
                "w_id": float(f"{answer.weights.w_id:.9g}") if answer.weights else 1.0,
                "w_ood": float(f"{answer.weights.w_ood:.9g}") if answer.weights else 0.0,
                "labels": entries,
                "relevance": None if pair.relevance is None else float(f"{pair.relevance:.9g}"),
            }
            if pair.anchor_question_id is not None:
                record["anchor_question_id"] = pair.anchor_question_id
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return out


def _assigned_to_samples(cfg: RunConfig, corpus: Corpus, vocab: AnswerVocab) -> list[kd_assign.PseudoAnswer]:
    path = cfg.output_dir / ASSIGNED_FILE
    samples = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise MalformedFile(f"{path}: run the assign stage first") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
            dist = np.zeros(len(vocab), dtype=np.float64)
            for i, w in r["labels"]:
                dist[int(i)] = float(w)
            mode = kd_assign.AssignMode(r["mode"])
            pair = compose_mod.CandidatePair(
                image_id=int(r["image_id"]),
                question_id=int(r["question_id"]),
                origin=compose_mod.PairOrigin(r["origin"]),
                relevance=r.get("relevance"),
                anchor_question_id=r.get("anchor_question_id"),
            )
            weights = None
            if mode in (kd_assign.AssignMode.MULTI_TEACHER, kd_assign.AssignMode.MULTI_TEACHER_INIT,
                        kd_assign.AssignMode.SINGLE_TEACHER):
                anchor = (kd_assign.AnchorKind.INITIAL_ANSWER
                          if mode is kd_assign.AssignMode.MULTI_TEACHER_INIT
                          else kd_assign.AnchorKind.BIAS_PRIOR)
                weights = kd_assign.FusionWeights(
                    w_id=float(r["w_id"]), w_ood=float(r["w_ood"]), c_id=None, c_ood=None, anchor=anchor,
                )
            samples.append(kd_assign.PseudoAnswer(pair=pair, distribution=dist, mode=mode, weights=weights))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"{path}: line {lineno}: bad record ({exc})") from exc
    return samples


def run_emit(cfg: RunConfig) -> dataset_emit.EmitResult:
    """Stage 4: final dataset files."""
    corpus = prepare_corpus(cfg)
    vocab = build_answer_vocab(corpus, cfg.vocab_min_count)
    samples = _assigned_to_samples(cfg, corpus, vocab)
    return dataset_emit.emit(
        samples, corpus, vocab, cfg.output_dir,
        config_digest=cfg.digest(),
        seed=cfg.seed,
        alpha_percent=cfg.alpha_percent,
        delta_percent=cfg.delta_percent,
    )


def run_stats(cfg: RunConfig) -> dict:
    """Summaries + figures for an emitted run."""
    corpus = prepare_corpus(cfg)
    _, samples, _header = dataset_emit.load_emitted(cfg.output_dir)
    meta = {}
    meta_path = cfg.output_dir / COMPOSE_META_FILE
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    stats = dataset_emit.stats_report(
        samples, corpus,
        alpha_percent=cfg.alpha_percent,
        delta_percent=cfg.delta_percent,
        yesno_group_count=meta.get("yesno_group_count"),
    )
    (cfg.output_dir / "stats.json").write_text(
        json.dumps(stats, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    dataset_emit.write_stats_tsv(stats, cfg.output_dir / "stats.tsv")
    (cfg.output_dir / "stats.txt").write_text(dataset_emit.render_stats(stats), encoding="utf-8")
    relevances = [s.relevance for s in samples if s.relevance is not None]
    report.render_stats_figures(stats, cfg.output_dir, relevances=relevances)
    return stats


def run_eval(
    cfg: RunConfig,
    predictions_path: str | Path,
    hm_with: float | None = None,
) -> eval_metrics.EvalResult:
    """Score a predictions file against the corpus; JSON + table + figure.

    `hm_with` is a companion overall accuracy (the other benchmark's result);
    when given, the report includes the harmonic mean of the two.
    """
    corpus = load_corpus(cfg.questions, cfg.annotations, cfg.detections)
    predictions = eval_metrics.read_predictions(predictions_path)
    result = eval_metrics.evaluate(predictions, corpus)
    payload = result.to_dict()
    if hm_with is not None:
        payload["harmonic_mean_with"] = hm_with
        payload["harmonic_mean"] = eval_metrics.harmonic_mean(result.overall, hm_with)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "eval.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (cfg.output_dir / "eval.txt").write_text(eval_metrics.render_table(result), encoding="utf-8")
    report.render_eval_figures(result, cfg.output_dir)
    return result


def run_pipeline(cfg: RunConfig) -> bool:
    """Full run. Returns False when stopping after phase 1 (requests written)."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    run_compose(cfg)
    run_score(cfg)
    if not teacher_predictions_ready(cfg):
        log.info("external teacher predictions missing; phase 1 artifacts written to %s", cfg.output_dir)
        return False
    run_assign(cfg)
    run_emit(cfg)
    run_stats(cfg)
    return True
