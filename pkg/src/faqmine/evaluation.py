"""Mailing-list reconstruction evaluation and parameter sweeps.

Several source lists are merged into one corpus with the list labels kept
aside as ground truth; the miner is asked for one topic per list, and each
topic is scored against the list most of its conversations come from.
Scores are taken at three stages: raw (no text filtering), pp (filtering
on) and faq (after Q&A assembly), plus single-parameter deviation sweeps.

A deterministic synthetic corpus generator stands in for real mailing
lists so the whole harness runs at desk scale; any labeled corpus in the
interchange format can be evaluated the same way.
"""

from __future__ import annotations

import csv
import random
import statistics
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .assembly import AssemblyConfig, assemble, split_unfocused
from .corpus import Conversation, Entry, LabeledCorpus
from .preprocess import ViewConfig, preprocess_corpus
from .topics import LdaModel, associate, build_lda_corpus, fit

STAGES = ("raw", "pp", "faq")


@dataclass
class TopicScore:
    topic_id: int
    main_list: str
    precision: float
    recall: float
    n_docs: int
    stage: str


@dataclass
class StageReport:
    stage: str
    scores: list[TopicScore]
    filtered: list[int] = field(default_factory=list)
    qa_counts: dict[int, int] = field(default_factory=dict)

    def median_precision(self) -> float:
        return statistics.median(s.precision for s in self.scores)

    def median_recall(self) -> float:
        return statistics.median(s.recall for s in self.scores)

    def median_qas(self) -> float:
        counted = [self.qa_counts[s.topic_id] for s in self.scores]
        return statistics.median(counted) if counted else 0.0

    def total_qas(self) -> int:
        return sum(self.qa_counts.values())


@dataclass
class SweepRow:
    parameter: str
    default_value: str
    new_value: str
    median_recall: float
    median_precision: float
    median_qas: float
    total_qas: int
    n_faqs: int
    iterations: int


@dataclass
class PipelineConfig:
    """Everything a reconstruction run needs besides the corpus itself."""

    n_topics: int | None = None  # default: one per source list
    iterations: int = 1000
    burn_in: int = 200
    optimize_every: int = 50
    seed: int = 13
    assoc_threshold: float = 0.25
    assembly: AssemblyConfig = field(default_factory=AssemblyConfig)
    views: ViewConfig = field(default_factory=ViewConfig)


def score_topic(
    topic_id: int,
    members: list[str],
    label_of: dict[str, str],
    list_sizes: dict[str, int],
    stage: str,
) -> TopicScore | None:
    """Precision/recall of one topic against its main (modal) source list.

    Returns None for an empty member set; such topics are reported as
    filtered rather than scored.
    """
    if not members:
        return None
    tallies: dict[str, int] = {}
    for conv_id in members:
        label = label_of[conv_id]
        tallies[label] = tallies.get(label, 0) + 1
    main_list = min(tallies, key=lambda lbl: (-tallies[lbl], lbl))
    hits = tallies[main_list]
    # Independent recount guards the set arithmetic.
    recount = sum(1 for conv_id in members if label_of[conv_id] == main_list)
    assert recount == hits, "modal-label tally mismatch"
    precision = hits / len(members)
    recall = hits / list_sizes[main_list]
    return TopicScore(
        topic_id=topic_id,
        main_list=main_list,
        precision=precision,
        recall=recall,
        n_docs=len(members),
        stage=stage,
    )


def _mine(
    labeled: LabeledCorpus, view_config: ViewConfig, config: PipelineConfig
) -> tuple[list, LdaModel]:
    views = preprocess_corpus(labeled.conversations, view_config)
    _, corpus = build_lda_corpus(views)
    n_topics = config.n_topics or len(labeled.per_list_counts)
    model = fit(
        corpus,
        n_topics,
        iterations=config.iterations,
        seed=config.seed,
        optimize_every=config.optimize_every,
        burn_in=config.burn_in,
    )
    return views, model


def _association_report(
    labeled: LabeledCorpus, model: LdaModel, stage: str, threshold: float
) -> StageReport:
    assoc = associate(model, threshold)
    scores: list[TopicScore] = []
    filtered: list[int] = []
    qa_counts: dict[int, int] = {}
    for topic_id in sorted(assoc.by_topic):
        members = [conv_id for conv_id, _ in assoc.by_topic[topic_id]]
        score = score_topic(topic_id, members, labeled.label_of, labeled.per_list_counts, stage)
        if score is None:
            filtered.append(topic_id)
        else:
            scores.append(score)
            qa_counts[topic_id] = len(members)
    return StageReport(stage=stage, scores=scores, filtered=filtered, qa_counts=qa_counts)


def _faq_report(
    labeled: LabeledCorpus,
    model: LdaModel,
    views: list,
    config: PipelineConfig,
) -> StageReport:
    assoc = associate(model, config.assoc_threshold)
    candidates = assemble(assoc, model, views, config.assembly)
    kept, removed = split_unfocused(candidates, config.assembly.faq_min_ratio)
    scores: list[TopicScore] = []
    filtered = sorted(c.topic_id for c in removed)
    qa_counts: dict[int, int] = {}
    for candidate in kept:
        members = sorted({qa.conv_id for qa in candidate.qas})
        score = score_topic(
            candidate.topic_id, members, labeled.label_of, labeled.per_list_counts, "faq"
        )
        if score is None:
            filtered.append(candidate.topic_id)
            continue
        scores.append(score)
        qa_counts[candidate.topic_id] = len(candidate.qas)
    return StageReport(stage="faq", scores=scores, filtered=sorted(filtered), qa_counts=qa_counts)


def run_reconstruction(
    labeled: LabeledCorpus, config: PipelineConfig | None = None
) -> dict[str, StageReport]:
    """Score reconstruction at the raw, pp and faq stages.

    raw: topic mining on unfiltered token streams; pp: mining with all text
    filters on; faq: pp mining followed by Q&A assembly, where a topic's
    members are the conversations contributing a surviving pair.
    """
    config = config or PipelineConfig()
    raw_views_config = config.views.with_all_filters(False)
    _, raw_model = _mine(labeled, raw_views_config, config)
    raw_report = _association_report(labeled, raw_model, "raw", config.assoc_threshold)

    pp_views, pp_model = _mine(labeled, config.views, config)
    pp_report = _association_report(labeled, pp_model, "pp", config.assoc_threshold)
    faq_report = _faq_report(labeled, pp_model, pp_views, config)
    return {"raw": raw_report, "pp": pp_report, "faq": faq_report}


# ---------------------------------------------------------------------------
# parameter sweep
# ---------------------------------------------------------------------------

_FILTER_FLAGS = {
    "rules": "strip_rules",
    "repeated-sentences": "prune_sentences",
    "stopwords": "filter_stopwords",
    "long-paragraphs": "drop_long",
    "punctuation": "drop_punctuation_heavy",
}

SWEEP_PARAMETERS = tuple(_FILTER_FLAGS) + (
    "all-filters",
    "assoc-threshold",
    "qa-cosine",
    "faq-ratio",
    "max-question-chars",
)


def _parse_toggle(value) -> bool:
    if isinstance(value, bool):
        return value
    if str(value).lower() in ("off", "false", "0", "no"):
        return False
    if str(value).lower() in ("on", "true", "1", "yes"):
        return True
    raise ValueError(f"expected on/off, got {value!r}")


def _parse_threshold(value) -> float:
    if str(value).lower() == "off":
        return 0.0
    return float(value)


def apply_parameter(config: PipelineConfig, name: str, value) -> PipelineConfig:
    """Return a copy of ``config`` with one named parameter deviated."""
    views = config.views
    asm = config.assembly
    if name in _FILTER_FLAGS:
        views = replace(views, **{_FILTER_FLAGS[name]: _parse_toggle(value)})
    elif name == "all-filters":
        views = views.with_all_filters(_parse_toggle(value))
    elif name == "assoc-threshold":
        return replace(config, assoc_threshold=_parse_threshold(value))
    elif name == "qa-cosine":
        t = _parse_threshold(value)
        asm = replace(asm, question_cos_threshold=t, answer_cos_threshold=t)
    elif name == "faq-ratio":
        asm = replace(asm, faq_min_ratio=_parse_threshold(value))
    elif name == "max-question-chars":
        asm = replace(asm, max_question_chars=int(value))
    else:
        raise ValueError(f"unknown sweep parameter: {name}")
    return replace(config, views=views, assembly=asm)


def default_of(config: PipelineConfig, name: str) -> str:
    if name in _FILTER_FLAGS:
        return "on" if getattr(config.views, _FILTER_FLAGS[name]) else "off"
    if name == "all-filters":
        return "on" if all(config.views.flags()) else "off"
    if name == "assoc-threshold":
        return str(config.assoc_threshold)
    if name == "qa-cosine":
        return str(config.assembly.question_cos_threshold)
    if name == "faq-ratio":
        return str(config.assembly.faq_min_ratio)
    if name == "max-question-chars":
        return str(config.assembly.max_question_chars)
    raise ValueError(f"unknown sweep parameter: {name}")


def parameter_sweep(
    labeled: LabeledCorpus,
    deviations: list[tuple[str, object]],
    config: PipelineConfig | None = None,
) -> list[SweepRow]:
    """One faq-stage metrics row per single-parameter deviation.

    Every row reuses the base seed, so rows differing only in assembly
    parameters share the identical fitted model and are directly
    comparable. Fits are cached per text-filter configuration.
    """
    config = config or PipelineConfig()
    fit_cache: dict[tuple[bool, ...], tuple[list, LdaModel]] = {}

    def faq_metrics(row_config: PipelineConfig) -> tuple[float, float, float, int, int]:
        key = row_config.views.flags()
        if key not in fit_cache:
            fit_cache[key] = _mine(labeled, row_config.views, row_config)
        views, model = fit_cache[key]
        report = _faq_report(labeled, model, views, row_config)
        if not report.scores:
            return 0.0, 0.0, 0.0, 0, 0
        return (
            report.median_recall(),
            report.median_precision(),
            report.median_qas(),
            report.total_qas(),
            len(report.scores),
        )

    rows = []
    recall, precision, med_qas, total, n_faqs = faq_metrics(config)
    rows.append(
        SweepRow(
            parameter="optimized",
            default_value="-",
            new_value="-",
            median_recall=recall,
            median_precision=precision,
            median_qas=med_qas,
            total_qas=total,
            n_faqs=n_faqs,
            iterations=config.iterations,
        )
    )
    for name, value in deviations:
        row_config = apply_parameter(config, name, value)
        recall, precision, med_qas, total, n_faqs = faq_metrics(row_config)
        rows.append(
            SweepRow(
                parameter=name,
                default_value=default_of(config, name),
                new_value=str(value),
                median_recall=recall,
                median_precision=precision,
                median_qas=med_qas,
                total_qas=total,
                n_faqs=n_faqs,
                iterations=row_config.iterations,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# synthetic labeled corpus
# ---------------------------------------------------------------------------

_FILLERS = (
    "the to is of and in it that for on with this you not are can but what "
    "when there some how from will would could should about after been"
).split()

_BOILERPLATE = (
    "my problem is as follows",
    "any help would be greatly appreciated",
    "i have searched the archives without luck",
    "please let me know if you need more details",
    "i am not sure if this is the right place to ask",
    "has anyone else seen this behavior",
    "i can provide more information if needed",
    "sorry if this has been asked before",
    "i am using the latest version from trunk",
    "this used to work in the previous release",
    "let me know if i should file a ticket",
    "i will try to put together a small example",
    "hope someone can point me in the right direction",
    "i can reproduce this on a fresh checkout",
)

_GREETINGS = ("Hi all,", "Hello everyone,", "Hi folks,", "Hey,")
_SIGNOFFS = ("Thanks", "Cheers", "Regards", "Best regards", "Thanks in advance")


@dataclass
class SyntheticSpec:
    """Shape and noise knobs of a generated labeled corpus."""

    n_lists: int = 5
    convs_per_list: int = 120
    exclusive_words: int = 40
    shared_words: int = 60
    chatter_words: int = 80  # flat vocabulary tying themeless conversations together
    seed: int = 0
    mixed_fraction: float = 0.15  # conversations blending another list's vocabulary
    offtopic_fraction: float = 0.15  # generic chatter with no common theme
    long_noise_prob: float = 0.18  # entries carrying a long generated dump
    error_line_prob: float = 0.08  # short punctuation-heavy error lines (kept by design)
    boilerplate_prob: float = 0.5  # entries carrying a stock sentence
    weak_list: int | None = 4  # list whose openers tend to ramble past the length gate


def _make_words(rng: random.Random, count: int, taken: set[str]) -> list[str]:
    words = []
    letters = "abcdefghijklmnopqrstuvwxyz"
    while len(words) < count:
        word = "".join(rng.choice(letters) for _ in range(rng.randint(5, 8)))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _sentence(rng: random.Random, pool: list[str], n_content: int, question: bool = False) -> str:
    words: list[str] = []
    for _ in range(n_content):
        if rng.random() < 0.55:
            words.append(rng.choice(_FILLERS))
        words.append(rng.choice(pool))
    if rng.random() < 0.4:
        words.append(rng.choice(_FILLERS))
    text = " ".join(words)
    return text[0].upper() + text[1:] + ("?" if question else ".")


def _noise_dump(rng: random.Random, noise_vocab: list[str]) -> str:
    lines = []
    length = 0
    target = rng.randint(850, 1400)
    while length < target:
        w1, w2 = rng.choice(noise_vocab), rng.choice(noise_vocab)
        line = f"   at {w1}.{w2}({w1}.java:{rng.randint(10, 999)})"
        lines.append(line)
        length += len(line) + 1
    return "\n".join(lines)


def _error_line(rng: random.Random, noise_vocab: list[str]) -> str:
    w = rng.choice(noise_vocab)
    return f"error: {w} failed with code {rng.randint(1, 64)} ({w}:{rng.randint(2, 99)})"


def _pick_pool(rng: random.Random, primary: list[str], secondary: list[str], shared: list[str],
               p_primary: float, p_secondary: float) -> list[str]:
    r = rng.random()
    if r < p_primary:
        return primary
    if r < p_primary + p_secondary:
        return secondary
    return shared


def synthesize_labeled_corpus(spec: SyntheticSpec) -> LabeledCorpus:
    """Generate a labeled corpus with per-list core vocabularies plus shared noise.

    Each list owns an exclusive vocabulary; all lists share a generic
    vocabulary, stock sentences, greetings/sign-offs, reply quotations and
    (optionally) long machine-generated dumps, so every text filter has
    something to remove. A slice of conversations blends vocabularies across
    lists and another slice is themeless chatter over conversation-private
    words, which later stages are expected to exclude. Deterministic in the
    seed.
    """
    if spec.n_lists < 2:
        raise ValueError("need at least two lists")
    rng = random.Random(spec.seed)
    taken: set[str] = set(_FILLERS)
    shared = _make_words(rng, spec.shared_words, taken)
    chatter = _make_words(rng, spec.chatter_words, taken)
    noise_vocab = _make_words(rng, 30, taken)
    lists = [f"list{chr(ord('a') + i)}" for i in range(spec.n_lists)]
    exclusive = {label: _make_words(rng, spec.exclusive_words, taken) for label in lists}

    base_time = datetime(2010, 1, 1, 9, 0, tzinfo=timezone.utc)
    conversations: list[Conversation] = []

    for li, label in enumerate(lists):
        own = exclusive[label]
        weak = spec.weak_list is not None and li == spec.weak_list % spec.n_lists
        n_mixed = int(spec.convs_per_list * spec.mixed_fraction)
        n_offtopic = int(spec.convs_per_list * spec.offtopic_fraction)
        for ci in range(spec.convs_per_list):
            conv_id = f"{label}-{ci:04d}"
            kind = "core"
            if ci < n_mixed:
                kind = "mixed"
            elif ci < n_mixed + n_offtopic:
                kind = "offtopic"
            other = exclusive[lists[(li + 1 + ci % (spec.n_lists - 1)) % spec.n_lists]]
            if kind == "offtopic":
                private = _make_words(rng, 40, taken)
                pools = (private, chatter, 0.72, 0.18)
            elif kind == "mixed":
                # Blend strength varies, yielding a continuum of topic affinities.
                blend = rng.uniform(0.18, 0.45)
                pools = (own, other, 0.85 - blend, blend)
            else:
                pools = (own, other, 0.85, 0.0)

            n_replies = rng.randint(1, 3)
            opened = base_time + timedelta(hours=len(conversations) * 3 + li)
            entries = []
            first_line_of_parent = ""
            for ei in range(n_replies + 1):
                is_opener = ei == 0
                primary, secondary, p_primary, p_secondary = pools
                lines: list[str] = []
                if rng.random() < 0.5:
                    lines.append(rng.choice(_GREETINGS))
                if not is_opener and rng.random() < 0.55 and first_line_of_parent:
                    lines.append("> " + first_line_of_parent)
                body_sentences = []
                n_sentences = rng.randint(1, 2) if is_opener else rng.randint(2, 3)
                if is_opener and weak and kind == "core" and rng.random() < 0.85:
                    n_sentences += rng.randint(4, 6)  # rambling opener, too long to publish
                if is_opener and kind == "offtopic" and rng.random() < 0.82:
                    n_sentences += rng.randint(4, 6)
                for si in range(n_sentences):
                    pool = _pick_pool(rng, primary, secondary, shared, p_primary, p_secondary)
                    body_sentences.append(
                        _sentence(
                            rng,
                            pool,
                            rng.randint(5, 9) if is_opener else rng.randint(6, 11),
                            question=is_opener and si == 0,
                        )
                    )
                if rng.random() < spec.boilerplate_prob:
                    phrase = rng.choice(_BOILERPLATE)
                    body_sentences.append(phrase[0].upper() + phrase[1:] + ".")
                lines.append(" ".join(body_sentences))
                dump_prob = spec.long_noise_prob * (0.5 if is_opener else 1.0)
                if rng.random() < dump_prob:
                    lines.append("")
                    lines.append(_noise_dump(rng, noise_vocab))
                if rng.random() < spec.error_line_prob:
                    lines.append("")
                    lines.append(_error_line(rng, noise_vocab))
                if rng.random() < 0.55:
                    lines.append("")
                    lines.append(f"{rng.choice(_SIGNOFFS)}, user{rng.randint(1, 40)}")
                text = "\n".join(lines)
                if is_opener:
                    first_line_of_parent = body_sentences[0]
                entries.append(
                    Entry(
                        entry_id=f"{conv_id}/e{ei}",
                        index=ei,
                        author=f"user{rng.randint(1, 200)}",
                        sent_at=opened + timedelta(minutes=ei * 37),
                        raw_text=text,
                    )
                )
            conversations.append(
                Conversation(conv_id=conv_id, source_list=label, entries=entries)
            )
    conversations.sort(key=lambda c: (c.opener.sent_at, c.conv_id))
    return LabeledCorpus.from_conversations(conversations)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def write_reconstruction_csv(reports: dict[str, StageReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["stage", "topic_id", "main_list", "precision", "recall", "n_docs", "qa_count", "filtered"]
        )
        for stage in STAGES:
            report = reports.get(stage)
            if report is None:
                continue
            for s in report.scores:
                writer.writerow(
                    [
                        stage,
                        s.topic_id,
                        s.main_list,
                        f"{s.precision:.6f}",
                        f"{s.recall:.6f}",
                        s.n_docs,
                        report.qa_counts.get(s.topic_id, 0),
                        "",
                    ]
                )
            for topic_id in report.filtered:
                writer.writerow([stage, topic_id, "", "", "", "", "", "x"])


def format_reconstruction_table(reports: dict[str, StageReport]) -> str:
    lines = []
    header = f"{'topic':>6} {'main list':<12}"
    for stage in STAGES:
        header += f" {stage + ' rec':>9} {stage + ' prec':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    topic_ids = sorted(
        {s.topic_id for r in reports.values() for s in r.scores}
        | {t for r in reports.values() for t in r.filtered}
    )
    by_stage = {
        stage: {s.topic_id: s for s in report.scores} for stage, report in reports.items()
    }
    for topic_id in topic_ids:
        main = ""
        for stage in reversed(STAGES):
            if topic_id in by_stage.get(stage, {}):
                main = by_stage[stage][topic_id].main_list
                break
        row = f"{topic_id:>6} {main:<12}"
        for stage in STAGES:
            score = by_stage.get(stage, {}).get(topic_id)
            if score is None:
                row += f" {'x':>9} {'x':>10}"
            else:
                row += f" {score.recall:>9.4f} {score.precision:>10.4f}"
        lines.append(row)
    lines.append("-" * len(header))
    summary = f"{'median':>6} {'':<12}"
    for stage in STAGES:
        report = reports.get(stage)
        if report is None or not report.scores:
            summary += f" {'-':>9} {'-':>10}"
        else:
            summary += f" {report.median_recall():>9.4f} {report.median_precision():>10.4f}"
    lines.append(summary)
    return "\n".join(lines)


def write_sweep_csv(rows: list[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "parameter",
                "default_value",
                "new_value",
                "median_recall",
                "median_precision",
                "median_qas",
                "total_qas",
                "n_faqs",
                "iterations",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    row.parameter,
                    row.default_value,
                    row.new_value,
                    f"{row.median_recall:.6f}",
                    f"{row.median_precision:.6f}",
                    f"{row.median_qas:.6f}",
                    row.total_qas,
                    row.n_faqs,
                    row.iterations,
                ]
            )


def format_sweep_table(rows: list[SweepRow]) -> str:
    lines = [
        f"{'parameter':<22} {'default':>8} {'new':>6} {'recall':>8} {'precision':>10} {'qas':>6} {'faqs':>5}"
    ]
    lines.append("-" * len(lines[0]))
    for row in rows:
        lines.append(
            f"{row.parameter:<22} {row.default_value:>8} {row.new_value:>6}"
            f" {row.median_recall:>8.4f} {row.median_precision:>10.4f}"
            f" {row.median_qas:>6.1f} {row.n_faqs:>5}"
        )
    return "\n".join(lines)
