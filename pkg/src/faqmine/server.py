"""JSON HTTP API serving the review workflow, plus static hosting of the UI.

Sessions are persisted as append-only event logs under the project
directory, so a crashed or restarted server resumes every session. Each
session's mutations are serialized through a per-session lock; reads take
plain snapshots.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .assembly import FaqCandidate, load_faqs_file
from .exports import export_html, export_xml, finalize_candidate, load_project
from .review import Decision, ReviewError, ReviewSession, apply_event, create_session

_ERROR_STATUS = {"not_found": 404, "conflict": 409, "state": 400, "validation": 400}


class ReviewStore:
    """FAQ candidates plus live review sessions with event-log persistence."""

    def __init__(
        self,
        faqs: list[FaqCandidate],
        provenance: dict | None = None,
        sessions_dir: str | Path | None = None,
        project_name: str = "",
    ):
        self.faqs = {str(c.topic_id): c for c in faqs}
        self.provenance = provenance or {}
        self.project_name = project_name
        self.sessions: dict[str, ReviewSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._flushed: dict[str, int] = {}
        self._registry_lock = threading.Lock()
        self.sessions_dir = Path(sessions_dir) if sessions_dir else None
        if self.sessions_dir is not None:
            self.sessions_dir.mkdir(parents=True, exist_ok=True)
            self._replay_all()

    @classmethod
    def from_project_dir(cls, directory: str | Path) -> "ReviewStore":
        directory = Path(directory)
        name = directory.name
        faqs_path = directory / "faqs.json"
        if (directory / "project.json").exists():
            project = load_project(directory)
            name = project.name
            if "faqs" in project.artifacts:
                faqs_path = directory / project.artifacts["faqs"]
        if not faqs_path.exists():
            raise FileNotFoundError(f"no faqs.json under {directory}")
        candidates, filtered, provenance = load_faqs_file(faqs_path)
        kept = [c for c in candidates if c.topic_id not in filtered]
        return cls(
            kept,
            provenance=provenance,
            sessions_dir=directory / "sessions",
            project_name=name,
        )

    # -- persistence -------------------------------------------------------

    def _session_path(self, session_id: str) -> Path | None:
        if self.sessions_dir is None:
            return None
        return self.sessions_dir / f"{session_id}.jsonl"

    def _flush(self, session: ReviewSession) -> None:
        path = self._session_path(session.session_id)
        if path is None:
            return
        done = self._flushed.get(session.session_id, 0)
        fresh = session.events[done:]
        if not fresh:
            return
        with open(path, "a", encoding="utf-8") as fh:
            for event in fresh:
                fh.write(json.dumps(event, ensure_ascii=False) + "\n")
        self._flushed[session.session_id] = len(session.events)

    def _replay_all(self) -> None:
        for path in sorted(self.sessions_dir.glob("*.jsonl")):
            events = [
                json.loads(line)
                for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            if not events or events[0].get("event") != "created":
                continue
            faq_id = events[0]["faq_id"]
            candidate = self.faqs.get(faq_id)
            if candidate is None:
                continue
            session = create_session(faq_id, candidate, session_id=events[0]["session_id"])
            session.events = [events[0]]
            for event in events[1:]:
                apply_event(session, event)
                session.events.append(event)
            self.sessions[session.session_id] = session
            self._flushed[session.session_id] = len(session.events)
            self._locks[session.session_id] = threading.Lock()

    # -- session access ----------------------------------------------------

    def create(self, faq_id: str) -> ReviewSession:
        candidate = self.faqs.get(faq_id)
        if candidate is None:
            raise ReviewError(f"unknown FAQ {faq_id!r}", code="not_found")
        session = create_session(faq_id, candidate)
        with self._registry_lock:
            self.sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        self._flush(session)
        return session

    def get(self, session_id: str) -> ReviewSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise ReviewError(f"unknown session {session_id!r}", code="not_found")
        return session

    def mutate(self, session_id: str, fn):
        """Run a mutation under the session's writer lock and persist its events."""
        session = self.get(session_id)
        with self._locks[session_id]:
            result = fn(session)
            self._flush(session)
        return result

    def finalized_faq(self, session: ReviewSession):
        candidate = self.faqs[session.faq_id]
        published = FaqCandidate(
            topic_id=candidate.topic_id,
            top_words=candidate.top_words,
            qas=session.published_pairs(),
            n_conversations=candidate.n_conversations,
        )
        faq = finalize_candidate(
            published,
            run_id=str(self.provenance.get("run_id", "")),
            params=self.provenance.get("params", {}),
            finalized=session.state == "done",
        )
        faq.comment = session.comment
        return faq


# ---------------------------------------------------------------------------
# API
# ---------------------------------------------------------------------------


class CreateSessionBody(BaseModel):
    faq_id: str


class SelectionBody(BaseModel):
    qa_id: str
    selected: bool


class DecisionBody(BaseModel):
    qa_id: str
    action: str
    edited_question: str | None = None
    edited_answer: str | None = None
    discard_reason: str | None = None


class FinalizeBody(BaseModel):
    comment: str | None = None


def create_app(store: ReviewStore, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="faqmine review service")

    @app.exception_handler(ReviewError)
    async def _review_error(_request, exc: ReviewError):
        return JSONResponse(
            status_code=_ERROR_STATUS.get(exc.code, 400),
            content={"error": str(exc), "code": exc.code},
        )

    @app.get("/api/faqs")
    def list_faqs():
        return {
            "project": store.project_name,
            "faqs": [
                {
                    "faq_id": faq_id,
                    "topic_id": c.topic_id,
                    "top_words": [[t, w] for t, w in c.top_words[:10]],
                    "n_qas": len(c.qas),
                }
                for faq_id, c in sorted(store.faqs.items(), key=lambda kv: kv[1].topic_id)
            ],
        }

    @app.post("/api/sessions")
    def create_session_endpoint(body: CreateSessionBody):
        session = store.create(body.faq_id)
        return {
            "session_id": session.session_id,
            "faq_id": session.faq_id,
            "n_questions": len(session.offered),
            "n_pages": session.n_pages,
            "page_size": session.page_size,
        }

    def _session_summary(session: ReviewSession) -> dict:
        return {
            "state": session.state,
            "selected": list(session.selection_order),
            "selection_count": len(session.selection_order),
            "warning_over_15": session.warning_over_cap,
            "n_pages": session.n_pages,
        }

    @app.get("/api/sessions/{session_id}")
    def session_state(session_id: str):
        session = store.get(session_id)
        return {"session_id": session.session_id, "faq_id": session.faq_id, **_session_summary(session)}

    @app.get("/api/sessions/{session_id}/pages/{page_index}")
    def get_page(session_id: str, page_index: int):
        def run(session: ReviewSession):
            items = session.page(page_index)
            return {
                "page": page_index,
                "questions": [
                    {"qa_id": item.qa_id, "text": item.question, "length": len(item.question)}
                    for item in items
                ],
                **_session_summary(session),
            }

        return store.mutate(session_id, run)

    @app.post("/api/sessions/{session_id}/selections")
    def set_selection(session_id: str, body: SelectionBody):
        def run(session: ReviewSession):
            count, warning = session.set_selection(body.qa_id, body.selected)
            return {
                "qa_id": body.qa_id,
                "selected": body.qa_id in session.selection_order,
                "selection_count": count,
                "warning_over_15": warning,
            }

        return store.mutate(session_id, run)

    @app.post("/api/sessions/{session_id}/begin-review")
    def begin_review(session_id: str):
        def run(session: ReviewSession):
            session.begin_review()
            return {"state": session.state, "n_selected": len(session.selection_order)}

        return store.mutate(session_id, run)

    @app.get("/api/sessions/{session_id}/review/next")
    def review_next(session_id: str):
        session = store.get(session_id)
        item = session.next_item()
        if item is None:
            return {"done": True, "decided": len(session.decisions)}
        return {
            "qa_id": item.qa_id,
            "question": item.question,
            "proposed_answer": item.answer,
            "position": len(session.decisions) + 1,
            "total": len(session.selection_order),
        }

    @app.post("/api/sessions/{session_id}/decisions")
    def decide(session_id: str, body: DecisionBody):
        def run(session: ReviewSession):
            session.decide(
                body.qa_id,
                Decision(
                    action=body.action,
                    edited_question=body.edited_question,
                    edited_answer=body.edited_answer,
                    discard_reason=body.discard_reason,
                ),
            )
            return {
                "ok": True,
                "decided": len(session.decisions),
                "remaining": len(session.selection_order) - len(session.decisions),
            }

        return store.mutate(session_id, run)

    @app.post("/api/sessions/{session_id}/finalize")
    def finalize(session_id: str, body: FinalizeBody):
        def run(session: ReviewSession):
            stats = session.finalize(body.comment)
            return {
                "stats": stats.to_dict(),
                "complete": stats.complete,
                "exports": {
                    "xml": f"/api/sessions/{session_id}/export.xml",
                    "html": f"/api/sessions/{session_id}/export.html",
                },
            }

        return store.mutate(session_id, run)

    @app.get("/api/sessions/{session_id}/export.xml")
    def export_session_xml(session_id: str):
        session = store.get(session_id)
        if session.state != "done":
            raise ReviewError("session is not finalized", code="state")
        document = export_xml(store.finalized_faq(session))
        return Response(
            content=document,
            media_type="application/xml",
            headers={
                "Content-Disposition": f'attachment; filename="faq-{session.faq_id}.xml"'
            },
        )

    @app.get("/api/sessions/{session_id}/export.html")
    def export_session_html(session_id: str):
        session = store.get(session_id)
        if session.state != "done":
            raise ReviewError("session is not finalized", code="state")
        return HTMLResponse(export_html(store.finalized_faq(session)))

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(
    project_dir: str | Path, port: int = 8080, static_dir: str | Path | None = None, host: str = "127.0.0.1"
) -> None:
    import uvicorn

    from .exports import ProjectLock

    store = ReviewStore.from_project_dir(project_dir)
    with ProjectLock(project_dir):
        app = create_app(store, static_dir=static_dir)
        uvicorn.run(app, host=host, port=port, log_level="info")
