"""Turn topic associations into ordered FAQ candidates.

Question selection: a conversation's opener qualifies when its term vector
is close enough (cosine) to the topic's bag of words and its display text is
short enough to read like a FAQ question. Answer selection: the reply with
the highest cosine, provided it clears the same kind of threshold; otherwise
the whole conversation yields no pair. Pairs are ordered by the harmonic
mean of the two cosines, and topics with too few selected pairs relative to
their associated conversations are filtered out as unfocused.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .preprocess import ConversationViews, EntryViews
from .topics import LdaModel, TopicAssociation, Vocabulary
from .topics import top_words as model_top_words

DEFAULT_COS_THRESHOLD = 0.15
DEFAULT_MAX_QUESTION_CHARS = 300
DEFAULT_FAQ_MIN_RATIO = 0.1
DEFAULT_TOPIC_TOP_WORDS = 500

TermVector = dict[int, float]


@dataclass
class AssemblyConfig:
    question_cos_threshold: float = DEFAULT_COS_THRESHOLD
    answer_cos_threshold: float = DEFAULT_COS_THRESHOLD
    max_question_chars: int = DEFAULT_MAX_QUESTION_CHARS
    faq_min_ratio: float = DEFAULT_FAQ_MIN_RATIO
    topic_top_words: int | None = DEFAULT_TOPIC_TOP_WORDS  # None = full distribution


@dataclass
class QaPair:
    conv_id: str
    q_entry_id: str
    a_entry_id: str
    question: str
    answer: str
    q_cos: float
    a_cos: float
    score: float


@dataclass
class FaqCandidate:
    topic_id: int
    top_words: list[tuple[str, float]]
    qas: list[QaPair]
    n_conversations: int

    @property
    def selection_ratio(self) -> float:
        if self.n_conversations == 0:
            return 0.0
        return len(self.qas) / self.n_conversations


def term_vector(tokens: Iterable[str], vocab: Vocabulary) -> TermVector:
    """Normalized term frequencies over the vocabulary; unknown tokens are ignored."""
    counts: dict[int, int] = {}
    total = 0
    for token in tokens:
        token_id = vocab.id_of.get(token)
        if token_id is None:
            continue
        counts[token_id] = counts.get(token_id, 0) + 1
        total += 1
    if total == 0:
        return {}
    return {token_id: count / total for token_id, count in counts.items()}


def topic_vector(model: LdaModel, topic_id: int, top_n: int | None) -> TermVector:
    """The topic's bag of words, optionally restricted to its heaviest entries."""
    probs = model.phi[topic_id]
    if top_n is None or top_n >= len(probs):
        return {w: float(p) for w, p in enumerate(probs)}
    order = sorted(
        range(len(probs)), key=lambda w: (-probs[w], model.vocabulary.token_of[w])
    )[:top_n]
    return {w: float(probs[w]) for w in order}


def cosine(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    """Cosine similarity of sparse vectors; 0.0 when either has no magnitude."""
    if not a or not b:
        return 0.0
    if len(b) < len(a):
        a, b = b, a
    dot = sum(value * b.get(key, 0.0) for key, value in a.items())
    norm_a = math.sqrt(sum(v * v for v in a.values()))
    norm_b = math.sqrt(sum(v * v for v in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def harmonic_mean(a: float, b: float) -> float:
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def select_question(
    conv: ConversationViews,
    topic_vec: TermVector,
    vocab: Vocabulary,
    cos_threshold: float = DEFAULT_COS_THRESHOLD,
    max_len: int = DEFAULT_MAX_QUESTION_CHARS,
) -> tuple[EntryViews, float] | None:
    """The opener qualifies as the question iff it is close to the topic and short."""
    opener = conv.opener
    cos = cosine(topic_vec, term_vector(opener.tokens, vocab))
    if cos >= cos_threshold and len(opener.display) <= max_len:
        return opener, cos
    return None


def select_answer(
    conv: ConversationViews,
    topic_vec: TermVector,
    vocab: Vocabulary,
    cos_threshold: float = DEFAULT_COS_THRESHOLD,
) -> tuple[EntryViews, float] | None:
    """The reply with the highest cosine to the topic; ties go to the earliest."""
    best: tuple[EntryViews, float] | None = None
    for entry in conv.entries[1:]:
        cos = cosine(topic_vec, term_vector(entry.tokens, vocab))
        if best is None or cos > best[1]:
            best = (entry, cos)
    if best is None or best[1] < cos_threshold:
        return None
    return best


def assemble(
    association: TopicAssociation,
    model: LdaModel,
    views: list[ConversationViews],
    config: AssemblyConfig | None = None,
) -> list[FaqCandidate]:
    """Select and order question-answer pairs for every associated topic.

    Returns one candidate per topic, including ones with no selected pairs;
    unfocused-topic filtering happens separately so it can be reported.
    """
    config = config or AssemblyConfig()
    views_by_id = {v.conv_id: v for v in views}
    vocab = model.vocabulary
    candidates = []
    for topic_id in sorted(association.by_topic):
        members = association.by_topic[topic_id]
        topic_vec = topic_vector(model, topic_id, config.topic_top_words)
        qas: list[QaPair] = []
        for conv_id, _theta in members:
            conv = views_by_id.get(conv_id)
            if conv is None or len(conv.entries) < 2:
                continue
            question = select_question(
                conv, topic_vec, vocab, config.question_cos_threshold, config.max_question_chars
            )
            if question is None:
                continue
            answer = select_answer(conv, topic_vec, vocab, config.answer_cos_threshold)
            if answer is None:
                continue  # no precise answer: the selected question is dropped too
            q_entry, q_cos = question
            a_entry, a_cos = answer
            qas.append(
                QaPair(
                    conv_id=conv.conv_id,
                    q_entry_id=q_entry.entry_id,
                    a_entry_id=a_entry.entry_id,
                    question=q_entry.display,
                    answer=a_entry.display,
                    q_cos=q_cos,
                    a_cos=a_cos,
                    score=harmonic_mean(q_cos, a_cos),
                )
            )
        qas.sort(key=lambda qa: (-qa.score, qa.conv_id))
        candidates.append(
            FaqCandidate(
                topic_id=topic_id,
                top_words=model_top_words(model, topic_id, 10),
                qas=qas,
                n_conversations=len(members),
            )
        )
    return candidates


def split_unfocused(
    candidates: list[FaqCandidate], min_ratio: float = DEFAULT_FAQ_MIN_RATIO
) -> tuple[list[FaqCandidate], list[FaqCandidate]]:
    """Partition candidates into (kept, filtered) by the selection-ratio gate.

    A candidate survives only if selected pairs per associated conversation
    strictly exceed ``min_ratio``.
    """
    kept, filtered = [], []
    for candidate in candidates:
        if candidate.n_conversations > 0 and candidate.selection_ratio > min_ratio:
            kept.append(candidate)
        else:
            filtered.append(candidate)
    return kept, filtered


def filter_unfocused(
    candidates: list[FaqCandidate], min_ratio: float = DEFAULT_FAQ_MIN_RATIO
) -> list[FaqCandidate]:
    return split_unfocused(candidates, min_ratio)[0]


# ---------------------------------------------------------------------------
# faq JSON
# ---------------------------------------------------------------------------

FAQ_FORMAT = "faqmine-faqs/1"


def faqs_to_dict(
    candidates: list[FaqCandidate],
    filtered_ids: Iterable[int] = (),
    provenance: dict | None = None,
) -> dict:
    filtered = set(filtered_ids)
    return {
        "format": FAQ_FORMAT,
        "provenance": provenance or {},
        "faqs": [
            {
                "topic_id": c.topic_id,
                "filtered": c.topic_id in filtered,
                "n_conversations": c.n_conversations,
                "top_words": [[t, float(p)] for t, p in c.top_words],
                "qas": [
                    {
                        "conv_id": qa.conv_id,
                        "q_entry_id": qa.q_entry_id,
                        "a_entry_id": qa.a_entry_id,
                        "question": qa.question,
                        "answer": qa.answer,
                        "q_cos": qa.q_cos,
                        "a_cos": qa.a_cos,
                        "score": qa.score,
                    }
                    for qa in c.qas
                ],
            }
            for c in candidates
        ],
    }


def write_faqs_json(
    candidates: list[FaqCandidate],
    path: str | Path,
    filtered_ids: Iterable[int] = (),
    provenance: dict | None = None,
) -> None:
    Path(path).write_text(
        json.dumps(faqs_to_dict(candidates, filtered_ids, provenance), ensure_ascii=False, indent=1),
        encoding="utf-8",
    )


def read_faqs_json(text: str) -> tuple[list[FaqCandidate], set[int], dict]:
    payload = json.loads(text)
    if payload.get("format") != FAQ_FORMAT:
        raise ValueError(f"unsupported faq format: {payload.get('format')!r}")
    candidates = []
    filtered: set[int] = set()
    for f in payload["faqs"]:
        if f.get("filtered"):
            filtered.add(int(f["topic_id"]))
        candidates.append(
            FaqCandidate(
                topic_id=int(f["topic_id"]),
                top_words=[(t, float(p)) for t, p in f["top_words"]],
                qas=[
                    QaPair(
                        conv_id=q["conv_id"],
                        q_entry_id=q["q_entry_id"],
                        a_entry_id=q["a_entry_id"],
                        question=q["question"],
                        answer=q["answer"],
                        q_cos=float(q["q_cos"]),
                        a_cos=float(q["a_cos"]),
                        score=float(q["score"]),
                    )
                    for q in f["qas"]
                ],
                n_conversations=int(f["n_conversations"]),
            )
        )
    return candidates, filtered, payload.get("provenance", {})


def load_faqs_file(path: str | Path) -> tuple[list[FaqCandidate], set[int], dict]:
    return read_faqs_json(Path(path).read_text(encoding="utf-8"))
