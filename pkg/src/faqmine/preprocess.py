"""Dual-view preprocessing of conversation entries.

Every entry gets two linked representations sharing its entry id:

* a display view: cleaned natural language meant for FAQ readers, produced
  by boilerplate-rule stripping and frequent-sentence pruning;
* a mining view: a token sequence for topic mining, produced by additionally
  dropping machine-generated paragraphs (very long, or punctuation-heavy)
  and filtering stop words.

Noise filters that would hurt FAQ readability (paragraph drops, stop words)
apply to the mining view only.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable

from .corpus import Conversation

TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
PARAGRAPH_SPLIT_RE = re.compile(r"\n[ \t]*\n+")
BLANK_RUN_RE = re.compile(r"(?:[ \t]*\n){3,}")


@dataclass(frozen=True)
class DisplayView:
    """Cleaned entry text as it would appear in a published FAQ."""

    entry_id: str
    text: str


@dataclass(frozen=True)
class MiningView:
    """Noise-filtered lowercase token sequence used for topic mining."""

    entry_id: str
    tokens: tuple[str, ...]


@dataclass
class FrequentSentenceIndex:
    """Corpus-wide occurrence counts of normalized sentences."""

    counts: dict[str, int] = field(default_factory=dict)

    def add_text(self, text: str) -> None:
        for sentence in iter_sentences(text):
            key = normalize_sentence(sentence)
            if key:
                self.counts[key] = self.counts.get(key, 0) + 1

    def count(self, sentence: str) -> int:
        return self.counts.get(normalize_sentence(sentence), 0)


def normalize_sentence(sentence: str) -> str:
    return re.sub(r"\s+", " ", sentence).strip().lower()


def iter_sentences(text: str) -> Iterable[str]:
    """Yield sentences delimited by dots or multiple line breaks."""
    for paragraph in PARAGRAPH_SPLIT_RE.split(text):
        for piece in paragraph.split("."):
            if piece.strip():
                yield piece


# ---------------------------------------------------------------------------
# rule / word-list files
# ---------------------------------------------------------------------------


def compile_rules(lines: Iterable[str]) -> list[re.Pattern]:
    rules = []
    for line in lines:
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        rules.append(re.compile(line, re.IGNORECASE | re.MULTILINE))
    return rules


def load_rules(path: str | Path) -> list[re.Pattern]:
    return compile_rules(Path(path).read_text(encoding="utf-8").splitlines())


def load_wordlist(path: str | Path) -> frozenset[str]:
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


def default_rules() -> list[re.Pattern]:
    text = resources.files("faqmine.data").joinpath("rules.txt").read_text("utf-8")
    return compile_rules(text.splitlines())


def default_stopwords() -> frozenset[str]:
    text = resources.files("faqmine.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(
        w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#")
    )


# ---------------------------------------------------------------------------
# display-view filters
# ---------------------------------------------------------------------------


def strip_boilerplate(raw_text: str, rules: list[re.Pattern]) -> str:
    """Remove headers, quotations, markup and salutations; collapse blank runs."""
    text = raw_text
    for rule in rules:
        text = rule.sub("", text)
    text = BLANK_RUN_RE.sub("\n\n", text)
    return text.strip("\n")


def build_sentence_index(display_texts: Iterable[str]) -> FrequentSentenceIndex:
    index = FrequentSentenceIndex()
    for text in display_texts:
        index.add_text(text)
    return index


def prune_frequent_sentences(
    text: str, index: FrequentSentenceIndex, min_count: int = 10
) -> str:
    """Drop sentences occurring at least ``min_count`` times corpus-wide.

    Survivors are re-joined with ". " inside each paragraph; paragraph breaks
    are preserved so later paragraph-level filters still see them.
    """
    paragraphs_out = []
    for paragraph in PARAGRAPH_SPLIT_RE.split(text):
        pieces = paragraph.split(".")
        had_final_dot = len(pieces) > 1 and not pieces[-1].strip()
        kept = [
            p.strip()
            for p in pieces
            if p.strip() and index.count(p) < min_count
        ]
        if not kept:
            continue
        joined = ". ".join(kept)
        if had_final_dot:
            joined += "."
        paragraphs_out.append(joined)
    return "\n\n".join(paragraphs_out)


# ---------------------------------------------------------------------------
# mining-view filters
# ---------------------------------------------------------------------------


def drop_long_paragraphs(text: str, max_chars: int = 800) -> str:
    """Remove paragraphs longer than ``max_chars`` (typically generated output)."""
    kept = [p for p in PARAGRAPH_SPLIT_RE.split(text) if len(p) <= max_chars]
    return "\n\n".join(kept)


def punctuation_ratio(paragraph: str) -> float:
    if not paragraph:
        return 0.0
    punct = sum(
        1 for c in paragraph if not c.isalnum() and not c.isspace() and c != "."
    )
    return punct / len(paragraph)


def drop_punctuation_heavy_paragraphs(
    text: str, min_chars: int = 200, min_ratio: float = 0.04
) -> str:
    """Remove long punctuation-dense paragraphs (code, stack traces, dumps).

    The size gate keeps short output such as one-line error messages, which
    helps rather than hurts topic mining.
    """
    kept = [
        p
        for p in PARAGRAPH_SPLIT_RE.split(text)
        if not (len(p) > min_chars and punctuation_ratio(p) >= min_ratio)
    ]
    return "\n\n".join(kept)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-letter/digit runs; drop tiny and numeric tokens."""
    return [
        t for t in TOKEN_RE.findall(text.lower()) if len(t) >= 2 and not t.isdigit()
    ]


def tokenize_and_filter(
    text: str,
    stopwords: frozenset[str] | set[str],
    domain_stopwords: frozenset[str] | set[str] = frozenset(),
) -> list[str]:
    return [
        t for t in tokenize(text) if t not in stopwords and t not in domain_stopwords
    ]


# ---------------------------------------------------------------------------
# view construction
# ---------------------------------------------------------------------------


@dataclass
class ViewConfig:
    """Filter settings for building display and mining views."""

    rules: list[re.Pattern] = field(default_factory=default_rules)
    stopwords: frozenset[str] = field(default_factory=default_stopwords)
    domain_stopwords: frozenset[str] = frozenset()
    min_sentence_count: int = 10
    max_paragraph_chars: int = 800
    punct_min_chars: int = 200
    punct_min_ratio: float = 0.04
    strip_rules: bool = True
    prune_sentences: bool = True
    filter_stopwords: bool = True
    drop_long: bool = True
    drop_punctuation_heavy: bool = True

    def with_all_filters(self, enabled: bool) -> "ViewConfig":
        return replace(
            self,
            strip_rules=enabled,
            prune_sentences=enabled,
            filter_stopwords=enabled,
            drop_long=enabled,
            drop_punctuation_heavy=enabled,
        )

    def flags(self) -> tuple[bool, ...]:
        return (
            self.strip_rules,
            self.prune_sentences,
            self.filter_stopwords,
            self.drop_long,
            self.drop_punctuation_heavy,
        )


def display_text(raw_text: str, index: FrequentSentenceIndex, config: ViewConfig) -> str:
    text = strip_boilerplate(raw_text, config.rules) if config.strip_rules else raw_text
    if config.prune_sentences:
        text = prune_frequent_sentences(text, index, config.min_sentence_count)
    return text


def mining_tokens(display: str, config: ViewConfig) -> list[str]:
    text = display
    if config.drop_long:
        text = drop_long_paragraphs(text, config.max_paragraph_chars)
    if config.drop_punctuation_heavy:
        text = drop_punctuation_heavy_paragraphs(
            text, config.punct_min_chars, config.punct_min_ratio
        )
    if config.filter_stopwords:
        return tokenize_and_filter(text, config.stopwords, config.domain_stopwords)
    return tokenize(text)


def build_views(
    conversation: Conversation, index: FrequentSentenceIndex, config: ViewConfig
) -> list[tuple[DisplayView, MiningView]]:
    """Build the linked display and mining views for every entry.

    Entries whose mining view comes out empty are retained; they simply
    cannot be selected later.
    """
    pairs = []
    for entry in conversation.entries:
        display = display_text(entry.raw_text, index, config)
        tokens = mining_tokens(display, config)
        pairs.append(
            (DisplayView(entry.entry_id, display), MiningView(entry.entry_id, tuple(tokens)))
        )
    return pairs


@dataclass
class EntryViews:
    entry_id: str
    index: int
    display: str
    tokens: tuple[str, ...]


@dataclass
class ConversationViews:
    conv_id: str
    source_list: str
    entries: list[EntryViews]

    @property
    def opener(self) -> EntryViews:
        return self.entries[0]


def preprocess_corpus(
    conversations: list[Conversation], config: ViewConfig
) -> list[ConversationViews]:
    """Two-pass corpus preprocessing: corpus-wide sentence index, then per-entry views."""
    index = FrequentSentenceIndex()
    if config.prune_sentences:
        for conv in conversations:
            for entry in conv.entries:
                text = (
                    strip_boilerplate(entry.raw_text, config.rules)
                    if config.strip_rules
                    else entry.raw_text
                )
                index.add_text(text)
    result = []
    for conv in conversations:
        pairs = build_views(conv, index, config)
        result.append(
            ConversationViews(
                conv_id=conv.conv_id,
                source_list=conv.source_list,
                entries=[
                    EntryViews(d.entry_id, i, d.text, m.tokens)
                    for i, (d, m) in enumerate(pairs)
                ],
            )
        )
    return result


# ---------------------------------------------------------------------------
# views JSON
# ---------------------------------------------------------------------------


def views_to_dict(views: list[ConversationViews]) -> dict:
    return {
        "conversations": [
            {
                "id": v.conv_id,
                "source_list": v.source_list,
                "entries": [
                    {
                        "id": e.entry_id,
                        "index": e.index,
                        "display": e.display,
                        "tokens": list(e.tokens),
                    }
                    for e in v.entries
                ],
            }
            for v in views
        ]
    }


def write_views_json(views: list[ConversationViews], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(views_to_dict(views), ensure_ascii=False, indent=1), encoding="utf-8"
    )


def read_views_json(text: str) -> list[ConversationViews]:
    payload = json.loads(text)
    views = []
    for v in payload["conversations"]:
        views.append(
            ConversationViews(
                conv_id=v["id"],
                source_list=v.get("source_list", ""),
                entries=[
                    EntryViews(e["id"], int(e["index"]), e["display"], tuple(e["tokens"]))
                    for e in v["entries"]
                ],
            )
        )
    return views


def load_views_file(path: str | Path) -> list[ConversationViews]:
    return read_views_json(Path(path).read_text(encoding="utf-8"))
