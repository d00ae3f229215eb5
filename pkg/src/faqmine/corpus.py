"""Threaded-conversation corpus: mbox parsing, reply threading, labeled merges.

A conversation is an ordered list of entries; entry 0 is the opener that
poses the question candidate, later entries are answer candidates.
"""

from __future__ import annotations

import email.message
import email.parser
import email.policy
import email.utils
import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

MSGID_RE = re.compile(r"<([^<>]+)>")
REPLY_PREFIX_RE = re.compile(r"^\s*(?:(?:re|fwd?|fw)(?:\[\d+\])?\s*:\s*)+", re.IGNORECASE)


@dataclass(frozen=True)
class Message:
    """One parsed archive message."""

    message_id: str
    in_reply_to: str | None
    references: tuple[str, ...]
    subject: str
    author: str
    sent_at: datetime
    body: str


@dataclass(frozen=True)
class Entry:
    """One conversation entry; ``index`` is its position in the conversation."""

    entry_id: str
    index: int
    author: str
    sent_at: datetime
    raw_text: str


@dataclass
class Conversation:
    conv_id: str
    source_list: str
    entries: list[Entry]

    @property
    def opener(self) -> Entry:
        return self.entries[0]


@dataclass
class LabeledCorpus:
    """Merged conversations that remember which source list each came from."""

    conversations: list[Conversation]
    label_of: dict[str, str]
    per_list_counts: dict[str, int]

    @classmethod
    def from_conversations(cls, conversations: list[Conversation]) -> "LabeledCorpus":
        label_of = {c.conv_id: c.source_list for c in conversations}
        counts: dict[str, int] = {}
        for c in conversations:
            counts[c.source_list] = counts.get(c.source_list, 0) + 1
        return cls(conversations, label_of, counts)


@dataclass
class LoadError:
    path: str
    message: str


@dataclass
class LoadResult:
    conversations: list[Conversation]
    errors: list[LoadError] = field(default_factory=list)


# ---------------------------------------------------------------------------
# mbox parsing
# ---------------------------------------------------------------------------


def _decode_body(msg: email.message.Message) -> str:
    """Extract a text body, preferring text/plain; undecodable bytes are replaced."""
    if msg.is_multipart():
        parts = []
        for part in msg.walk():
            if part.is_multipart():
                continue
            ctype = part.get_content_type()
            if ctype == "text/plain" or (not parts and ctype.startswith("text/")):
                parts.append(_decode_body(part))
        return "\n".join(p for p in parts if p)
    payload = msg.get_payload(decode=True)
    if payload is None:
        payload = msg.get_payload()
        if isinstance(payload, str):
            return payload.replace("\r\n", "\n").replace("\r", "\n")
        return ""
    charset = msg.get_content_charset() or "utf-8"
    try:
        text = payload.decode(charset, errors="replace")
    except (LookupError, ValueError):
        text = payload.decode("utf-8", errors="replace")
    return text.replace("\r\n", "\n").replace("\r", "\n")


def _first_msgid(value: str | None) -> str | None:
    if not value:
        return None
    m = MSGID_RE.search(value)
    if m:
        return m.group(1).strip()
    value = value.strip()
    return value or None


def _parse_date(value: str | None) -> datetime:
    if not value:
        return EPOCH
    try:
        dt = email.utils.parsedate_to_datetime(value)
    except (TypeError, ValueError):
        return EPOCH
    if dt is None:
        return EPOCH
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _synthesize_id(author: str, sent_at: datetime, body: str) -> str:
    digest = hashlib.sha1(
        f"{author}|{sent_at.isoformat()}|{body[:64]}".encode("utf-8", "replace")
    ).hexdigest()
    return f"synthetic-{digest[:16]}"


def _split_mbox(data: bytes) -> list[bytes]:
    """Split raw mbox bytes into per-message chunks on ``From `` separator lines.

    Quoted ``>From `` lines stay inside the current record.
    """
    records: list[bytes] = []
    current: list[bytes] = []
    for line in data.splitlines(keepends=True):
        if line.startswith(b"From "):
            if current:
                records.append(b"".join(current))
            current = [line]
        else:
            if not current:
                # Content before the first separator: treat as a headerless record.
                current = [b"From unknown\n"]
            current.append(line)
    if current:
        records.append(b"".join(current))
    return records


def parse_mbox(data: bytes) -> list[Message]:
    """Parse RFC-4155-style mbox bytes into messages.

    Tolerates malformed headers and truncated final records; a missing
    Message-ID is synthesized deterministically from author, date and the
    first 64 body characters.
    """
    if not data.strip():
        return []
    messages: list[Message] = []
    seen_ids: dict[str, int] = {}
    parser = email.parser.BytesParser(policy=email.policy.default)
    for record in _split_mbox(data):
        # Drop the "From sender date" envelope line.
        _, _, rest = record.partition(b"\n")
        try:
            msg = parser.parsebytes(rest)
        except Exception:
            msg = email.parser.BytesParser(policy=email.policy.compat32).parsebytes(rest)
        try:
            subject = str(msg.get("Subject", "") or "")
        except Exception:
            subject = ""
        try:
            author = str(msg.get("From", "") or "")
        except Exception:
            author = ""
        sent_at = _parse_date(msg.get("Date"))
        body = _decode_body(msg).rstrip("\n")
        message_id = _first_msgid(msg.get("Message-ID")) or _synthesize_id(author, sent_at, body)
        if message_id in seen_ids:
            seen_ids[message_id] += 1
            message_id = f"{message_id}~{seen_ids[message_id]}"
        else:
            seen_ids[message_id] = 1
        in_reply_to = _first_msgid(msg.get("In-Reply-To"))
        references = tuple(MSGID_RE.findall(str(msg.get("References", "") or "")))
        messages.append(
            Message(
                message_id=message_id,
                in_reply_to=in_reply_to,
                references=references,
                subject=subject,
                author=author,
                sent_at=sent_at,
                body=body,
            )
        )
    return messages


# ---------------------------------------------------------------------------
# threading
# ---------------------------------------------------------------------------


def normalize_subject(subject: str) -> str:
    """Strip reply/forward prefixes, collapse whitespace, lowercase."""
    stripped = REPLY_PREFIX_RE.sub("", subject)
    return re.sub(r"\s+", " ", stripped).strip().lower()


def _looks_like_reply(msg: Message) -> bool:
    return bool(msg.in_reply_to or msg.references or REPLY_PREFIX_RE.match(msg.subject))


def thread_messages(messages: list[Message], source_list: str = "") -> list[Conversation]:
    """Group messages into conversations.

    Messages link to the parent named by In-Reply-To (or the nearest resolvable
    References entry). Replies whose parent is absent from the archive fall
    back to grouping by normalized subject. Reference cycles are broken by
    making the earliest message the root.
    """
    if not messages:
        return []
    by_id = {m.message_id: m for m in messages}
    parent: dict[str, str | None] = {}
    for m in messages:
        candidates = []
        if m.in_reply_to:
            candidates.append(m.in_reply_to)
        candidates.extend(reversed(m.references))
        parent[m.message_id] = next(
            (c for c in candidates if c in by_id and c != m.message_id), None
        )

    def break_cycle(start: str) -> None:
        trail: list[str] = []
        pos: dict[str, int] = {}
        node: str | None = start
        while node is not None:
            if node in pos:
                cycle = trail[pos[node]:]
                root = min(cycle, key=lambda mid: (by_id[mid].sent_at, mid))
                parent[root] = None
                return
            pos[node] = len(trail)
            trail.append(node)
            node = parent[node]

    for mid in parent:
        break_cycle(mid)

    def root_of(mid: str) -> str:
        while parent[mid] is not None:
            mid = parent[mid]  # type: ignore[assignment]
        return mid

    clusters: dict[str, list[Message]] = {}
    for m in messages:
        clusters.setdefault(root_of(m.message_id), []).append(m)

    # Subject fallback: clusters rooted at an orphaned reply join the earliest
    # non-reply cluster with the same normalized subject, or band together.
    by_subject_plain: dict[str, list[str]] = {}
    by_subject_orphan: dict[str, list[str]] = {}
    for root in clusters:
        key = normalize_subject(by_id[root].subject)
        bucket = by_subject_orphan if _looks_like_reply(by_id[root]) else by_subject_plain
        bucket.setdefault(key, []).append(root)

    merged_into: dict[str, str] = {}
    for key, orphans in by_subject_orphan.items():
        targets = by_subject_plain.get(key)
        if targets:
            target = min(targets, key=lambda r: (by_id[r].sent_at, r))
        elif len(orphans) > 1:
            target = min(orphans, key=lambda r: (by_id[r].sent_at, r))
        else:
            continue
        for root in orphans:
            if root != target:
                merged_into[root] = target

    final: dict[str, list[Message]] = {}
    for root, msgs in clusters.items():
        final.setdefault(merged_into.get(root, root), []).extend(msgs)

    conversations = []
    for root, msgs in final.items():
        # Root stays at index 0 even under clock skew; the rest sort by time.
        msgs.sort(key=lambda m: (m.message_id != root, m.sent_at, m.message_id))
        entries = [
            Entry(
                entry_id=m.message_id,
                index=i,
                author=m.author,
                sent_at=m.sent_at,
                raw_text=m.body,
            )
            for i, m in enumerate(msgs)
        ]
        conversations.append(Conversation(conv_id=root, source_list=source_list, entries=entries))
    conversations.sort(key=lambda c: (c.opener.sent_at, c.conv_id))
    return conversations


# ---------------------------------------------------------------------------
# loading and merging
# ---------------------------------------------------------------------------


def _coerce_after(after: date | datetime | None) -> datetime | None:
    if after is None:
        return None
    if isinstance(after, datetime):
        return after if after.tzinfo else after.replace(tzinfo=timezone.utc)
    return datetime(after.year, after.month, after.day, tzinfo=timezone.utc)


def load_corpus(
    paths: Iterable[str | Path],
    label: str,
    after: date | datetime | None = None,
) -> LoadResult:
    """Load mbox and/or interchange-JSON files into one labeled conversation list.

    Conversations whose opener predates ``after`` are dropped. Unreadable
    files are reported in the result's error list; processing continues.
    """
    cutoff = _coerce_after(after)
    conversations: list[Conversation] = []
    errors: list[LoadError] = []
    for path in paths:
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            errors.append(LoadError(str(path), str(exc)))
            continue
        try:
            if path.suffix.lower() == ".json" or raw.lstrip()[:1] == b"{":
                convs = read_corpus_json(raw.decode("utf-8"))
                for c in convs:
                    c.source_list = label
            else:
                convs = thread_messages(parse_mbox(raw), source_list=label)
        except Exception as exc:
            errors.append(LoadError(str(path), f"unparseable: {exc}"))
            continue
        conversations.extend(convs)

    if cutoff is not None:
        conversations = [c for c in conversations if c.opener.sent_at >= cutoff]

    seen: dict[str, int] = {}
    for c in conversations:
        if c.conv_id in seen:
            seen[c.conv_id] += 1
            c.conv_id = f"{c.conv_id}~{seen[c.conv_id]}"
        else:
            seen[c.conv_id] = 1
    conversations.sort(key=lambda c: (c.opener.sent_at, c.conv_id))
    return LoadResult(conversations, errors)


def merge_labeled(
    corpora: dict[str, list[Conversation]], per_list_cap: int
) -> LabeledCorpus:
    """Merge per-list corpora into one labeled corpus, capping each list.

    Each list contributes its ``per_list_cap`` most recent conversations.
    Duplicate conversation ids across lists get a label suffix.
    """
    if per_list_cap < 1:
        raise ValueError("per_list_cap must be >= 1")
    selected: list[Conversation] = []
    counts: dict[str, int] = {}
    taken_ids: set[str] = set()
    for label in sorted(corpora):
        convs = sorted(
            corpora[label], key=lambda c: (c.opener.sent_at, c.conv_id), reverse=True
        )[:per_list_cap]
        counts[label] = len(convs)
        for c in convs:
            conv_id = c.conv_id if c.conv_id not in taken_ids else f"{c.conv_id}#{label}"
            taken_ids.add(conv_id)
            selected.append(Conversation(conv_id=conv_id, source_list=label, entries=c.entries))
    selected.sort(key=lambda c: (c.opener.sent_at, c.conv_id))
    label_of = {c.conv_id: c.source_list for c in selected}
    return LabeledCorpus(selected, label_of, counts)


# ---------------------------------------------------------------------------
# interchange JSON
# ---------------------------------------------------------------------------


def conversations_to_dict(conversations: list[Conversation]) -> dict:
    return {
        "conversations": [
            {
                "id": c.conv_id,
                "source_list": c.source_list,
                "entries": [
                    {
                        "id": e.entry_id,
                        "index": e.index,
                        "author": e.author,
                        "sent_at": e.sent_at.isoformat(),
                        "text": e.raw_text,
                    }
                    for e in c.entries
                ],
            }
            for c in conversations
        ]
    }


def read_corpus_json(text: str) -> list[Conversation]:
    payload = json.loads(text)
    conversations = []
    for c in payload["conversations"]:
        entries = [
            Entry(
                entry_id=e["id"],
                index=int(e["index"]),
                author=e.get("author", ""),
                sent_at=datetime.fromisoformat(e["sent_at"]),
                raw_text=e["text"],
            )
            for e in c["entries"]
        ]
        conversations.append(
            Conversation(conv_id=c["id"], source_list=c.get("source_list", ""), entries=entries)
        )
    return conversations


def write_corpus_json(conversations: list[Conversation], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(conversations_to_dict(conversations), ensure_ascii=False, indent=1),
        encoding="utf-8",
    )


def load_corpus_file(path: str | Path) -> list[Conversation]:
    return read_corpus_json(Path(path).read_text(encoding="utf-8"))
