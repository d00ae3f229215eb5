"""Expert review workflow for one assembled FAQ.

A session offers at most the 40 best-scoring questions (by question
cosine), shown in order of increasing length over pages of 8, with the
proposed answers withheld. After the reviewer selects the questions worth
publishing (more than 15 draws a warning, not a rejection), each selected
item is reviewed in turn: validate the answer, modify it (and the question
if needed), or discard it with a reason. Decisions are immutable once made.
Finalizing yields the publishable pairs plus edit statistics.
"""

from __future__ import annotations

import math
import uuid
from dataclasses import dataclass, field

from .assembly import FaqCandidate, QaPair

MAX_OFFERED = 40
PAGE_SIZE = 8
ADVISORY_SELECTION_CAP = 15
COMPLETE_MIN_SELECTIONS = 5

ACTIONS = ("validate", "modify", "discard")
DISCARD_REASONS = ("wrong", "imprecise", "other")

STATE_SELECTING = "selecting"
STATE_REVIEWING = "reviewing"
STATE_DONE = "done"


class ReviewError(Exception):
    def __init__(self, message: str, code: str = "validation"):
        super().__init__(message)
        self.code = code  # validation | not_found | state | conflict


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance on Unicode scalar values."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # deletion
                    current[j - 1] + 1,  # insertion
                    previous[j - 1] + (ca != cb),  # substitution
                )
            )
        previous = current
    return previous[-1]


@dataclass
class Decision:
    action: str
    edited_question: str | None = None
    edited_answer: str | None = None
    discard_reason: str | None = None

    def validate(self) -> None:
        if self.action not in ACTIONS:
            raise ReviewError(f"unknown action {self.action!r}")
        if self.action == "modify":
            if self.edited_question is None and self.edited_answer is None:
                raise ReviewError("modify requires an edited question or answer")
        elif self.action == "discard":
            if self.discard_reason not in DISCARD_REASONS:
                raise ReviewError(
                    f"discard requires a reason, one of {', '.join(DISCARD_REASONS)}"
                )
            if self.edited_question is not None or self.edited_answer is not None:
                raise ReviewError("discard carries no edits")
        else:  # validate
            if (
                self.edited_question is not None
                or self.edited_answer is not None
                or self.discard_reason is not None
            ):
                raise ReviewError("validate accepts the answer as is, without edits")

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "edited_question": self.edited_question,
            "edited_answer": self.edited_answer,
            "discard_reason": self.discard_reason,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Decision":
        return cls(
            action=payload["action"],
            edited_question=payload.get("edited_question"),
            edited_answer=payload.get("edited_answer"),
            discard_reason=payload.get("discard_reason"),
        )


@dataclass
class OfferedQa:
    qa_id: str
    rank: int  # publication rank in the source FAQ (score order)
    pair: QaPair

    @property
    def question(self) -> str:
        return self.pair.question

    @property
    def answer(self) -> str:
        return self.pair.answer


@dataclass
class SessionStats:
    n_validated: int
    n_modified: int
    n_discarded: int
    discard_reasons: dict[str, int]
    mean_question_length: float
    mean_answer_length: float
    mean_levenshtein_question: float | None
    mean_levenshtein_answer: float | None
    pages_viewed: int
    selected: int
    complete: bool
    comment: str | None

    def to_dict(self) -> dict:
        return {
            "n_validated": self.n_validated,
            "n_modified": self.n_modified,
            "n_discarded": self.n_discarded,
            "discard_reasons": dict(self.discard_reasons),
            "mean_question_length": self.mean_question_length,
            "mean_answer_length": self.mean_answer_length,
            "mean_levenshtein_question": self.mean_levenshtein_question,
            "mean_levenshtein_answer": self.mean_levenshtein_answer,
            "pages_viewed": self.pages_viewed,
            "selected": self.selected,
            "complete": self.complete,
            "comment": self.comment,
        }


@dataclass
class ReviewSession:
    session_id: str
    faq_id: str
    offered: list[OfferedQa]  # ordered by question length ascending
    page_size: int = PAGE_SIZE
    state: str = STATE_SELECTING
    viewed_pages: set[int] = field(default_factory=set)
    selection_order: list[str] = field(default_factory=list)
    decisions: dict[str, Decision] = field(default_factory=dict)
    comment: str | None = None
    events: list[dict] = field(default_factory=list)

    # -- helpers ---------------------------------------------------------

    @property
    def n_pages(self) -> int:
        return max(1, math.ceil(len(self.offered) / self.page_size))

    def _offered_by_id(self, qa_id: str) -> OfferedQa:
        for item in self.offered:
            if item.qa_id == qa_id:
                return item
        raise ReviewError(f"unknown question {qa_id!r}", code="not_found")

    def _require_state(self, state: str) -> None:
        if self.state != state:
            raise ReviewError(
                f"operation requires state {state!r}, session is {self.state!r}",
                code="state",
            )

    def _log(self, kind: str, **payload) -> None:
        self.events.append({"event": kind, **payload})

    # -- selection phase --------------------------------------------------

    def page(self, page_index: int) -> list[OfferedQa]:
        """Questions of one page (answers withheld); marks the page viewed."""
        self._require_state(STATE_SELECTING)
        if not 0 <= page_index < self.n_pages:
            raise ReviewError(
                f"page {page_index} out of range (0..{self.n_pages - 1})", code="not_found"
            )
        if page_index not in self.viewed_pages:
            self.viewed_pages.add(page_index)
            self._log("page_viewed", page=page_index)
        start = page_index * self.page_size
        return self.offered[start : start + self.page_size]

    def set_selection(self, qa_id: str, selected: bool) -> tuple[int, bool]:
        """Toggle a question; returns (selection count, over-advisory-cap warning)."""
        self._require_state(STATE_SELECTING)
        self._offered_by_id(qa_id)
        if selected and qa_id not in self.selection_order:
            self.selection_order.append(qa_id)
            self._log("selection", qa_id=qa_id, selected=True)
        elif not selected and qa_id in self.selection_order:
            self.selection_order.remove(qa_id)
            self._log("selection", qa_id=qa_id, selected=False)
        count = len(self.selection_order)
        return count, count > ADVISORY_SELECTION_CAP

    @property
    def warning_over_cap(self) -> bool:
        return len(self.selection_order) > ADVISORY_SELECTION_CAP

    # -- review phase -----------------------------------------------------

    def begin_review(self) -> None:
        self._require_state(STATE_SELECTING)
        if not self.selection_order:
            raise ReviewError("select at least one question before reviewing")
        self.state = STATE_REVIEWING
        self._log("begin_review")

    def next_item(self) -> OfferedQa | None:
        """Next selected-but-undecided item in selection order; None when done."""
        self._require_state(STATE_REVIEWING)
        for qa_id in self.selection_order:
            if qa_id not in self.decisions:
                return self._offered_by_id(qa_id)
        return None

    def decide(self, qa_id: str, decision: Decision) -> None:
        self._require_state(STATE_REVIEWING)
        if qa_id not in self.selection_order:
            raise ReviewError(f"question {qa_id!r} was not selected", code="not_found")
        if qa_id in self.decisions:
            raise ReviewError(f"question {qa_id!r} is already decided", code="conflict")
        decision.validate()
        self.decisions[qa_id] = decision
        self._log("decision", qa_id=qa_id, decision=decision.to_dict())

    # -- finalization -----------------------------------------------------

    def finalize(self, comment: str | None = None) -> SessionStats:
        self._require_state(STATE_REVIEWING)
        undecided = [q for q in self.selection_order if q not in self.decisions]
        if undecided:
            raise ReviewError(f"undecided questions remain: {', '.join(undecided)}")
        self.comment = comment
        self.state = STATE_DONE
        self._log("finalized", comment=comment)
        return self.stats()

    def published_pairs(self) -> list[QaPair]:
        """Validated and modified pairs with edits applied, in publication order."""
        published = []
        for item in sorted(self.offered, key=lambda o: o.rank):
            decision = self.decisions.get(item.qa_id)
            if decision is None or decision.action == "discard":
                continue
            pair = item.pair
            if decision.action == "modify":
                pair = QaPair(
                    conv_id=pair.conv_id,
                    q_entry_id=pair.q_entry_id,
                    a_entry_id=pair.a_entry_id,
                    question=decision.edited_question or pair.question,
                    answer=decision.edited_answer or pair.answer,
                    q_cos=pair.q_cos,
                    a_cos=pair.a_cos,
                    score=pair.score,
                )
            published.append(pair)
        return published

    def stats(self) -> SessionStats:
        decided = [(self._offered_by_id(q), d) for q, d in self.decisions.items()]
        counts = {"validate": 0, "modify": 0, "discard": 0}
        reasons = {r: 0 for r in DISCARD_REASONS}
        q_dists: list[int] = []
        a_dists: list[int] = []
        for item, decision in decided:
            counts[decision.action] += 1
            if decision.action == "discard" and decision.discard_reason:
                reasons[decision.discard_reason] += 1
            if decision.action == "modify":
                if decision.edited_question is not None:
                    q_dists.append(levenshtein(item.question, decision.edited_question))
                if decision.edited_answer is not None:
                    a_dists.append(levenshtein(item.answer, decision.edited_answer))
        q_lens = [len(item.question) for item, _ in decided]
        a_lens = [len(item.answer) for item, _ in decided]
        return SessionStats(
            n_validated=counts["validate"],
            n_modified=counts["modify"],
            n_discarded=counts["discard"],
            discard_reasons=reasons,
            mean_question_length=sum(q_lens) / len(q_lens) if q_lens else 0.0,
            mean_answer_length=sum(a_lens) / len(a_lens) if a_lens else 0.0,
            mean_levenshtein_question=sum(q_dists) / len(q_dists) if q_dists else None,
            mean_levenshtein_answer=sum(a_dists) / len(a_dists) if a_dists else None,
            pages_viewed=len(self.viewed_pages),
            selected=len(self.selection_order),
            complete=len(self.selection_order) >= COMPLETE_MIN_SELECTIONS,
            comment=self.comment,
        )


def create_session(
    faq_id: str, candidate: FaqCandidate, session_id: str | None = None
) -> ReviewSession:
    """Open a session offering the FAQ's best questions.

    The cut keeps the 40 highest question cosines; the offer order is by
    question display length ascending (shorter questions first), not by
    score, so reviewing starts light and is not biased by the score itself.
    """
    if not candidate.qas:
        raise ReviewError("FAQ has no question-answer pairs", code="not_found")
    rank_of = {qa.conv_id: i + 1 for i, qa in enumerate(candidate.qas)}
    cut = sorted(candidate.qas, key=lambda qa: (-qa.q_cos, qa.conv_id))[:MAX_OFFERED]
    cut.sort(key=lambda qa: (len(qa.question), qa.conv_id))
    offered = [OfferedQa(qa_id=qa.conv_id, rank=rank_of[qa.conv_id], pair=qa) for qa in cut]
    session = ReviewSession(
        session_id=session_id or uuid.uuid4().hex,
        faq_id=faq_id,
        offered=offered,
    )
    session._log("created", faq_id=faq_id, session_id=session.session_id)
    return session


def apply_event(session: ReviewSession, event: dict) -> None:
    """Re-apply one persisted event during session replay."""
    kind = event.get("event")
    if kind == "created":
        return
    if kind == "page_viewed":
        session.viewed_pages.add(int(event["page"]))
    elif kind == "selection":
        if event["selected"]:
            if event["qa_id"] not in session.selection_order:
                session.selection_order.append(event["qa_id"])
        elif event["qa_id"] in session.selection_order:
            session.selection_order.remove(event["qa_id"])
    elif kind == "begin_review":
        session.state = STATE_REVIEWING
    elif kind == "decision":
        session.decisions[event["qa_id"]] = Decision.from_dict(event["decision"])
    elif kind == "finalized":
        session.comment = event.get("comment")
        session.state = STATE_DONE
    else:
        raise ReviewError(f"unknown event kind {kind!r}")
