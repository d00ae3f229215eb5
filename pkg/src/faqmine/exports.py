"""Persistence and publishing: XML/HTML export of finalized FAQs, project store.

Exports are deterministic functions of the finalized FAQ and always embed
the pipeline run id and parameter snapshot, so a published document can be
traced back to the run that produced it. The XML schema round-trips all
text fields losslessly, letting reviewers' edits survive re-import.
"""

from __future__ import annotations

import html
import json
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .assembly import FaqCandidate

PROJECT_FORMAT = "faqmine-project/1"


class ExportError(Exception):
    pass


class ProjectError(Exception):
    pass


class MigrationError(ProjectError):
    """Project manifest written by an incompatible format version."""


class ProjectLocked(ProjectError):
    pass


@dataclass
class FinalizedPair:
    rank: int
    question: str
    answer: str
    src_conv: str
    src_q_entry: str
    src_a_entry: str


@dataclass
class FinalizedFaq:
    topic_id: int
    top_words: list[tuple[str, float]]
    pairs: list[FinalizedPair]
    run_id: str = ""
    params: dict = field(default_factory=dict)
    finalized: bool = False
    comment: str | None = None


def finalize_candidate(
    candidate: FaqCandidate,
    run_id: str = "",
    params: dict | None = None,
    finalized: bool = False,
) -> FinalizedFaq:
    """Wrap an assembled candidate for export, preserving its published order."""
    pairs = [
        FinalizedPair(
            rank=i + 1,
            question=qa.question,
            answer=qa.answer,
            src_conv=qa.conv_id,
            src_q_entry=qa.q_entry_id,
            src_a_entry=qa.a_entry_id,
        )
        for i, qa in enumerate(candidate.qas)
    ]
    return FinalizedFaq(
        topic_id=candidate.topic_id,
        top_words=list(candidate.top_words),
        pairs=pairs,
        run_id=run_id,
        params=params or {},
        finalized=finalized,
    )


def _check_finalized(faq: FinalizedFaq, allow_unreviewed: bool) -> None:
    if not faq.finalized and not allow_unreviewed:
        raise ExportError(
            "FAQ has not been finalized by review; pass allow_unreviewed to export anyway"
        )


def _clean(text: str) -> str:
    # XML parsers normalize raw carriage returns; normalize up front so the
    # round-trip stays byte-exact.
    return text.replace("\r\n", "\n").replace("\r", "\n")


def export_xml(faq: FinalizedFaq, allow_unreviewed: bool = False) -> str:
    _check_finalized(faq, allow_unreviewed)
    root = ET.Element("faq", {"topic-id": str(faq.topic_id), "run-id": faq.run_id})
    params = ET.SubElement(root, "params")
    params.text = json.dumps(faq.params, sort_keys=True)
    if faq.comment is not None:
        comment = ET.SubElement(root, "comment")
        comment.text = _clean(faq.comment)
    topwords = ET.SubElement(root, "topwords")
    for token, weight in faq.top_words:
        word = ET.SubElement(topwords, "word", {"w": repr(float(weight))})
        word.text = token
    for pair in faq.pairs:
        qa = ET.SubElement(root, "qa", {"rank": str(pair.rank)})
        question = ET.SubElement(
            qa, "question", {"src-conv": pair.src_conv, "src-entry": pair.src_q_entry}
        )
        question.text = _clean(pair.question)
        answer = ET.SubElement(
            qa, "answer", {"src-conv": pair.src_conv, "src-entry": pair.src_a_entry}
        )
        answer.text = _clean(pair.answer)
    return ET.tostring(root, encoding="unicode", xml_declaration=True)


def parse_faq_xml(text: str) -> FinalizedFaq:
    root = ET.fromstring(text)
    if root.tag != "faq":
        raise ExportError(f"not a faq document (root element {root.tag!r})")
    params_el = root.find("params")
    comment_el = root.find("comment")
    pairs = []
    for qa in root.findall("qa"):
        question = qa.find("question")
        answer = qa.find("answer")
        pairs.append(
            FinalizedPair(
                rank=int(qa.get("rank", "0")),
                question=question.text or "",
                answer=answer.text or "",
                src_conv=question.get("src-conv", ""),
                src_q_entry=question.get("src-entry", ""),
                src_a_entry=answer.get("src-entry", ""),
            )
        )
    return FinalizedFaq(
        topic_id=int(root.get("topic-id", "0")),
        top_words=[
            (w.text or "", float(w.get("w", "0")))
            for w in root.findall("topwords/word")
        ],
        pairs=pairs,
        run_id=root.get("run-id", ""),
        params=json.loads(params_el.text) if params_el is not None and params_el.text else {},
        finalized=True,
        comment=comment_el.text if comment_el is not None else None,
    )


_HTML_STYLE = """
body { font-family: sans-serif; max-width: 48rem; margin: 2rem auto; padding: 0 1rem; color: #222; }
h1 { border-bottom: 2px solid #336; padding-bottom: .3rem; }
.topwords { color: #555; font-size: .9rem; }
ol.toc a { text-decoration: none; }
section { margin: 1.5rem 0; padding: 1rem; background: #f7f7fa; border-radius: 6px; }
section h2 { font-size: 1.05rem; margin-top: 0; }
.answer { white-space: pre-wrap; }
.provenance { color: #999; font-size: .75rem; margin-top: 3rem; }
"""


def export_html(faq: FinalizedFaq, allow_unreviewed: bool = False) -> str:
    """Self-contained page: title, top words, linked question list, Q&A blocks."""
    _check_finalized(faq, allow_unreviewed)
    esc = html.escape
    parts = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8"/>',
        f"<title>FAQ: topic {faq.topic_id}</title>",
        f"<style>{_HTML_STYLE}</style>",
        "</head><body>",
        f"<h1>FAQ: topic {faq.topic_id}</h1>",
    ]
    words = ", ".join(f"{esc(t)} ({w:.3f})" for t, w in faq.top_words)
    parts.append(f'<p class="topwords">{words}</p>')
    parts.append('<ol class="toc">')
    for pair in faq.pairs:
        parts.append(f'<li><a href="#qa-{pair.rank}">{esc(pair.question)}</a></li>')
    parts.append("</ol>")
    for pair in faq.pairs:
        parts.append(f'<section id="qa-{pair.rank}">')
        parts.append(f"<h2>Q{pair.rank}. {esc(pair.question)}</h2>")
        parts.append(f'<div class="answer">{esc(pair.answer)}</div>')
        parts.append("</section>")
    if faq.comment:
        parts.append(f'<p class="comment">Reviewer comment: {esc(faq.comment)}</p>')
    parts.append(
        f'<p class="provenance">run {esc(faq.run_id)} &#183; params {esc(json.dumps(faq.params, sort_keys=True))}</p>'
    )
    parts.append("</body></html>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# project store
# ---------------------------------------------------------------------------


@dataclass
class Project:
    name: str
    run_id: str
    config: dict
    artifacts: dict[str, str]  # artifact kind -> path relative to the project dir
    created_at: str
    version: str = PROJECT_FORMAT


def save_project(project: Project, directory: str | Path) -> None:
    """Write the manifest; every referenced artifact must already exist."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for kind, rel in project.artifacts.items():
        if not (directory / rel).exists():
            raise ProjectError(f"artifact {kind!r} missing: {directory / rel}")
    manifest = {
        "format": project.version,
        "name": project.name,
        "run_id": project.run_id,
        "config": project.config,
        "artifacts": project.artifacts,
        "created_at": project.created_at,
    }
    (directory / "project.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=1), encoding="utf-8"
    )


def load_project(directory: str | Path) -> Project:
    directory = Path(directory)
    manifest_path = directory / "project.json"
    if not manifest_path.exists():
        raise ProjectError(f"no project manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest.get("format")
    if version != PROJECT_FORMAT:
        raise MigrationError(
            f"project format {version!r} is not supported (expected {PROJECT_FORMAT})"
        )
    artifacts = dict(manifest.get("artifacts", {}))
    for kind, rel in artifacts.items():
        if not (directory / rel).exists():
            raise ProjectError(f"artifact {kind!r} missing: {directory / rel}")
    return Project(
        name=manifest.get("name", directory.name),
        run_id=manifest.get("run_id", ""),
        config=manifest.get("config", {}),
        artifacts=artifacts,
        created_at=manifest.get("created_at", ""),
        version=version,
    )


def new_project(name: str, run_id: str, config: dict, artifacts: dict[str, str]) -> Project:
    return Project(
        name=name,
        run_id=run_id,
        config=config,
        artifacts=artifacts,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


class ProjectLock:
    """Single-writer lock on a project directory; readers need no lock."""

    def __init__(self, directory: str | Path):
        self.path = Path(directory) / ".lock"
        self._fd: int | None = None

    def acquire(self) -> "ProjectLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ProjectLocked(
                f"project is locked by another writer ({self.path}); "
                "remove the lock file if that writer is gone"
            ) from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def release(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
            try:
                self.path.unlink()
            except FileNotFoundError:
                pass

    def __enter__(self) -> "ProjectLock":
        return self.acquire()

    def __exit__(self, *exc) -> None:
        self.release()
