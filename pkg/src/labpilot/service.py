"""HTTP boundary exposing sessions, stage actions, tables, artifacts, and events.

Mutating endpoints enqueue engine actions onto a per-session worker and return
202 with a session snapshot; reads return canonical JSON; the event stream
delivers session events in seq order from a client-supplied cursor with no
gaps or duplicates. API keys are held in memory only and never persisted.
"""

from __future__ import annotations

import io
import json
import queue
import threading
import time
import zipfile
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from . import canonical, prompts
from .coder import StubCodingAgent
from .engine import Engine, PipelineSession, RunConfig
from .errors import AddressError, IllegalTransition, PipelineError, SchemaError
from .gateway import Gateway, ScriptedBackend
from .toolhub import FixtureCorpus
from .types import ResearchIntent, StageConfig

SSE_IDLE_TIMEOUT = 30.0


class CreateSessionBody(BaseModel):
    model: str = "scripted"
    budget: str = "10.0"
    api_key: str | None = None  # held in memory only, never written to disk
    script: list[str] | str | None = None
    agent_script: list[dict] | str | None = None
    corpus: list[dict] | str | None = None
    price_table_path: str | None = None
    num_ideas: int = 3
    reflections: int = 2
    novelty_rounds: int = 2
    max_runs: int = 3
    session_id: str | None = None


class IntentBody(BaseModel):
    text: str
    system_prompt_override: str | None = None


class FeedbackBody(BaseModel):
    text: str


class ConfirmBody(BaseModel):
    index: int | None = None


class CodeBody(BaseModel):
    instruction: str = ""


class PatchTableBody(BaseModel):
    version: int
    edit: dict[str, Any]


class SessionRuntime:
    """One live session: its engine, state, and serializing worker thread."""

    def __init__(self, engine: Engine, session: PipelineSession):
        self.engine = engine
        self.session = session
        self.queue: queue.Queue = queue.Queue()
        self.worker = threading.Thread(target=self._loop, daemon=True)
        self.worker.start()

    def _loop(self) -> None:
        while True:
            action = self.queue.get()
            if action is None:
                return
            try:
                action()
            except PipelineError as exc:
                self.session.emit("error", {"error": type(exc).__name__, "detail": str(exc)})

    def enqueue(self, action) -> None:
        self.queue.put(action)

    def snapshot(self) -> dict:
        data = self.session.to_json()
        data["ledger"] = self.engine.ledger.snapshot()
        # The UI reveals (and may override) the stage system prompt.
        data["system_prompt"] = prompts.load("thinker_idea_system")
        return data


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(base_dir: str | Path = "service_sessions") -> FastAPI:
    app = FastAPI(title="labpilot service")
    base = Path(base_dir)
    runtimes: dict[str, SessionRuntime] = {}
    counter = {"n": 0}
    lock = threading.Lock()

    def _get(session_id: str) -> SessionRuntime | None:
        return runtimes.get(session_id)

    def _guard_budget(runtime: SessionRuntime) -> JSONResponse | None:
        if (
            runtime.engine.ledger.state == "terminated"
            or runtime.session.phase == "terminated"
        ):
            return _error(402, "budget terminated")
        return None

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        with lock:
            counter["n"] += 1
            session_id = body.session_id or f"s{counter['n']:04d}"
        if session_id in runtimes:
            return _error(409, f"session {session_id} already exists")
        config = RunConfig(
            model_id=body.model,
            budget=body.budget,
            out_dir=str(base / session_id),
            stage=StageConfig(
                num_ideas=body.num_ideas,
                num_reflections={
                    s: body.reflections for s in ("thinker", "coder", "writer", "reviewer")
                },
                max_reflections=max(body.reflections, 5),
                novelty_rounds=body.novelty_rounds,
            ),
            price_table_path=body.price_table_path,
            session_id=session_id,
            max_runs=body.max_runs,
        )
        gateway = None
        if body.script is not None:
            gateway = Gateway(default_backend=ScriptedBackend(body.script))
        agent = StubCodingAgent(body.agent_script) if body.agent_script is not None else None
        search = FixtureCorpus(body.corpus) if body.corpus is not None else None
        try:
            engine = Engine(
                config,
                gateway=gateway,
                agent=agent,
                search_backend=search,
                api_key=body.api_key,
            )
        except PipelineError as exc:
            return _error(422, str(exc))
        session = engine.new_session(session_id)
        runtimes[session_id] = SessionRuntime(engine, session)
        return {"id": session_id, "phase": session.phase}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        return Response(
            content=canonical.dumps(runtime.snapshot()), media_type="application/json"
        )

    @app.post("/sessions/{session_id}/intent", status_code=202)
    def post_intent(session_id: str, body: IntentBody):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        if (blocked := _guard_budget(runtime)) is not None:
            return blocked
        if runtime.session.phase != "configured":
            return _error(409, f"intent already submitted (phase {runtime.session.phase})")
        try:
            intent = ResearchIntent(
                text=body.text, system_prompt_override=body.system_prompt_override
            )
        except SchemaError as exc:
            return _error(422, str(exc))
        runtime.enqueue(lambda: runtime.engine.think_stage(runtime.session, intent))
        return runtime.snapshot()

    @app.get("/sessions/{session_id}/ideas")
    def get_ideas(session_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        table = runtime.session.tables.get("ideas")
        if table is None:
            return _error(409, "ideas are not ready")
        return Response(content=canonical.dumps(table.to_json()), media_type="application/json")

    @app.post("/sessions/{session_id}/feedback", status_code=202)
    def post_feedback(session_id: str, body: FeedbackBody):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        if (blocked := _guard_budget(runtime)) is not None:
            return blocked
        if runtime.session.phase != "idea_ready":
            return _error(409, f"feedback is illegal in phase {runtime.session.phase}")
        if not body.text.strip():
            return _error(422, "feedback text must be non-empty")
        runtime.enqueue(
            lambda: runtime.engine.step(runtime.session, "submit_feedback", body.text)
        )
        return runtime.snapshot()

    @app.post("/sessions/{session_id}/confirm", status_code=202)
    def post_confirm(session_id: str, body: ConfirmBody = ConfirmBody()):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        if (blocked := _guard_budget(runtime)) is not None:
            return blocked
        if runtime.session.phase != "idea_ready":
            return _error(409, f"confirm is illegal in phase {runtime.session.phase}")
        index = body.index if body.index is not None else runtime.session.selected_index
        if index is None or not 0 <= index < len(runtime.session.ideas):
            return _error(422, f"no idea at index {body.index}")
        runtime.enqueue(lambda: runtime.engine.step(runtime.session, "confirm_idea", index))
        return runtime.snapshot()

    @app.post("/sessions/{session_id}/code", status_code=202)
    def post_code(session_id: str, body: CodeBody = CodeBody()):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        if (blocked := _guard_budget(runtime)) is not None:
            return blocked
        phase = runtime.session.phase
        if phase == "awaiting_human":
            runtime.enqueue(
                lambda: runtime.engine.step(runtime.session, "resume_coding", body.instruction)
            )
        elif phase == "idea_ready":
            runtime.enqueue(lambda: runtime.engine.code_stage(runtime.session))
        else:
            return _error(409, f"code stage is illegal in phase {phase}")
        return runtime.snapshot()

    @app.get("/sessions/{session_id}/artifacts")
    def get_artifacts(session_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        exp_dir = Path(runtime.engine.config.out_dir) / "experiments"
        if not exp_dir.exists():
            return _error(409, "no experiment artifacts yet")
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as archive:
            for path in sorted(exp_dir.rglob("*")):
                if path.is_file():
                    archive.write(path, path.relative_to(exp_dir))
        return Response(
            content=buffer.getvalue(),
            media_type="application/zip",
            headers={"Content-Disposition": "attachment; filename=experiments.zip"},
        )

    @app.post("/sessions/{session_id}/write", status_code=202)
    def post_write(session_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        if (blocked := _guard_budget(runtime)) is not None:
            return blocked
        if runtime.session.phase != "code_ready":
            return _error(409, f"write stage is illegal in phase {runtime.session.phase}")
        runtime.enqueue(lambda: runtime.engine.write_stage(runtime.session))
        return runtime.snapshot()

    @app.get("/sessions/{session_id}/paper")
    def get_paper(session_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        paper_dir = Path(runtime.engine.config.out_dir) / "paper"
        pdf = paper_dir / "main.pdf"
        if pdf.exists():
            return Response(content=pdf.read_bytes(), media_type="application/pdf")
        main_tex = paper_dir / "main.tex"
        if main_tex.exists():
            return Response(
                content=main_tex.read_text(encoding="utf-8"), media_type="text/plain"
            )
        return _error(409, "no paper yet")

    @app.post("/sessions/{session_id}/review", status_code=202)
    def post_review(session_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        if (blocked := _guard_budget(runtime)) is not None:
            return blocked
        if runtime.session.phase != "paper_ready":
            return _error(409, f"review stage is illegal in phase {runtime.session.phase}")
        runtime.enqueue(lambda: runtime.engine.step(runtime.session, "approve_paper"))
        return runtime.snapshot()

    @app.get("/sessions/{session_id}/review")
    def get_review(session_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        meta = Path(runtime.engine.config.out_dir) / "review" / "meta.json"
        if not meta.exists():
            return _error(409, "no review yet")
        return Response(content=meta.read_text(encoding="utf-8"), media_type="application/json")

    @app.patch("/sessions/{session_id}/tables/{name}")
    def patch_table(session_id: str, name: str, body: PatchTableBody):
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        try:
            table = runtime.engine.apply_table_edit(
                runtime.session, name, body.edit, body.version
            )
        except IllegalTransition as exc:
            return _error(409, str(exc))
        except AddressError as exc:
            return _error(422, str(exc))
        except SchemaError as exc:
            return _error(422, str(exc))
        return Response(content=canonical.dumps(table.to_json()), media_type="application/json")

    @app.get("/sessions/{session_id}/events")
    def get_events(
        session_id: str, request: Request, cursor: int = 0, idle: float | None = None
    ):
        """Server-sent event stream from seq > cursor.

        ``idle`` (seconds) optionally closes the stream after a quiet period;
        without it the stream stays open until the session reaches an
        absorbing phase.
        """
        runtime = _get(session_id)
        if runtime is None:
            return _error(404, "unknown session")
        session = runtime.session

        def stream():
            live: queue.Queue = queue.Queue()
            session.subscribe(live.put)
            last = cursor
            # Replay history after subscribing so nothing can fall in a gap;
            # the monotonic `last` filter drops any duplicates.
            for event in list(session.event_log):
                if event["seq"] > last:
                    last = event["seq"]
                    yield _sse(event)
            quiet_since = time.monotonic()
            while True:
                try:
                    event = live.get(timeout=0.1)
                except queue.Empty:
                    if session.phase in ("done", "terminated", "blocked") and live.empty():
                        return
                    if idle is not None and time.monotonic() - quiet_since > idle:
                        return
                    continue
                if event["seq"] > last:
                    last = event["seq"]
                    quiet_since = time.monotonic()
                    yield _sse(event)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def _sse(event: dict) -> str:
    return f"id: {event['seq']}\ndata: {json.dumps(event, sort_keys=True)}\n\n"


app = create_app()
