"""Pipeline orchestration: the four-stage state machine with human pause points.

The ResearchPilot facade mirrors the seven-line usage contract
(think / code / write / review); the Engine drives the same stages for a
persistent PipelineSession with events, budget planning, safety gates, and
resumable pauses.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from . import canonical, formatter
from .checker import (
    BudgetLedger,
    CallEstimate,
    DEFAULT_ESTIMATES,
    SafetyChecker,
    load_price_table,
    plan_budget,
)
from .coder import Coder, CodingSession, StubCodingAgent, default_stub_agent
from .errors import (
    AwaitingHuman,
    BudgetExceeded,
    BudgetTooSmall,
    ChargeAfterTermination,
    IllegalTransition,
    SafetyBlocked,
    SchemaError,
    TerminationSignal,
)
from .gateway import Gateway, HTTPBackend, ScriptedBackend, Usage
from .reviewer import Reviewer, review_with_reflection
from .thinker import Thinker, rank_and_select
from .toolhub import FixtureCorpus, related_works_string, search_papers
from .types import ExperimentSpec, Idea, ResearchIntent, StageConfig, validate_idea
from .writer import SECTION_ORDER, Writer

logger = logging.getLogger(__name__)

PHASES = (
    "configured",
    "thinking",
    "idea_ready",
    "coding",
    "awaiting_human",
    "code_ready",
    "writing",
    "paper_ready",
    "reviewing",
    "done",
    "terminated",
    "blocked",
)

EDGES: dict[str, set[str]] = {
    "configured": {"thinking", "terminated", "blocked"},
    "thinking": {"idea_ready", "blocked", "terminated"},
    "idea_ready": {"thinking", "coding", "terminated"},
    "coding": {"awaiting_human", "code_ready", "done", "blocked", "terminated"},
    "awaiting_human": {"coding", "terminated"},
    "code_ready": {"writing", "terminated"},
    "writing": {"paper_ready", "blocked", "terminated"},
    "paper_ready": {"reviewing", "terminated"},
    "reviewing": {"done", "blocked", "terminated"},
    "done": set(),
    "terminated": set(),
    "blocked": set(),
}

EVENT_KINDS = ("phase_change", "table_update", "cost_update", "warning", "error", "log")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunConfig:
    """Everything needed to run one session. API keys are never stored here."""

    model_id: str = "scripted"
    budget: str = "10.0"
    out_dir: str = "out"
    stage: StageConfig = field(default_factory=StageConfig)
    interactive: bool = False
    script_path: str | None = None
    corpus_path: str | None = None
    price_table_path: str | None = None
    session_id: str | None = None
    max_runs: int = 3
    run_timeout: float = 600.0
    max_attempts: int = 3

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "budget": self.budget,
            "out_dir": self.out_dir,
            "stage": self.stage.to_json(),
            "interactive": self.interactive,
            "script_path": self.script_path,
            "corpus_path": self.corpus_path,
            "price_table_path": self.price_table_path,
            "session_id": self.session_id,
            "max_runs": self.max_runs,
            "run_timeout": self.run_timeout,
            "max_attempts": self.max_attempts,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        raw["stage"] = StageConfig.from_json(raw.get("stage", {}))
        return cls(**raw)


class PipelineSession:
    """State of one pipeline run: phase, artifacts, events, tables, ledger."""

    def __init__(self, session_id: str, config: RunConfig, ledger: BudgetLedger):
        self.id = session_id
        self.config = config
        self.ledger = ledger
        self.phase = "configured"
        self.intent: ResearchIntent | None = None
        self.ideas: list[Idea] = []
        self.selected_index: int | None = None
        self.coding_session: CodingSession | None = None
        self.artifacts: dict[str, Any] = {}
        self.warnings: list[str] = []
        self.event_log: list[dict] = []
        self.tables: dict[str, formatter.StageTable] = {}
        self._seq = 0
        self._listeners: list[Callable[[dict], None]] = []
        self._lock = threading.Lock()

    # -- events ------------------------------------------------------------

    def subscribe(self, listener: Callable[[dict], None]) -> None:
        with self._lock:
            self._listeners.append(listener)

    def emit(self, kind: str, payload: Any) -> dict:
        if kind not in EVENT_KINDS:
            raise SchemaError("kind", f"unknown event kind {kind!r}")
        with self._lock:
            self._seq += 1
            event = {"seq": self._seq, "kind": kind, "payload": payload, "timestamp": _now()}
            self.event_log.append(event)
            listeners = list(self._listeners)
        for listener in listeners:
            listener(event)
        return event

    def transition(self, to_phase: str) -> None:
        if to_phase not in EDGES.get(self.phase, set()):
            raise IllegalTransition(f"cannot move from {self.phase} to {to_phase}")
        self.phase = to_phase
        self.emit("phase_change", {"phase": to_phase})

    @property
    def selected_idea(self) -> Idea:
        if self.selected_index is None or not self.ideas:
            raise SchemaError("selected_index", "no idea selected")
        return self.ideas[self.selected_index]

    # -- persistence ----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "phase": self.phase,
            "config": self.config.to_json(),
            "intent": self.intent.to_json() if self.intent else None,
            "ideas": [i.to_json() for i in self.ideas],
            "selected_index": self.selected_index,
            "coding_session": (
                self.coding_session.to_json() if self.coding_session else None
            ),
            "artifacts": dict(self.artifacts),
            "warnings": list(self.warnings),
            "tables": {name: t.to_json() for name, t in self.tables.items()},
            "event_seq": self._seq,
            "ledger": {
                "state": self.ledger.state,
                "total_spent": str(self.ledger.total()),
            },
        }


@dataclass
class PipelineResult:
    session_id: str
    phase: str
    out_dir: str
    idea_path: str | None = None
    exp_dir: str | None = None
    paper_path: str | None = None
    review_path: str | None = None
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "phase": self.phase,
            "out_dir": self.out_dir,
            "idea_path": self.idea_path,
            "exp_dir": self.exp_dir,
            "paper_path": self.paper_path,
            "review_path": self.review_path,
            "warnings": list(self.warnings),
        }


class Engine:
    """Builds the stage components for a config and drives sessions through them."""

    def __init__(
        self,
        config: RunConfig,
        gateway: Gateway | None = None,
        agent: Any = None,
        search_backend: Any = None,
        estimates: dict[str, CallEstimate] | None = None,
        stage_allowance: dict[str, Any] | None = None,
        api_key: str | None = None,
    ):
        self.config = config
        self.estimates = estimates or DEFAULT_ESTIMATES
        price_table = (
            load_price_table(config.price_table_path)
            if config.price_table_path
            else None
        )
        if price_table is not None and config.model_id not in price_table:
            raise SchemaError("price_table", f"model {config.model_id!r} not priced")
        self.ledger = BudgetLedger(
            config.budget, price_table=price_table, stage_allowance=stage_allowance
        )
        self.stage_allowance = stage_allowance

        if gateway is None:
            if config.script_path:
                backend = ScriptedBackend(config.script_path)
            else:
                backend = HTTPBackend(api_key=api_key)
            gateway = Gateway(default_backend=backend)
        gateway.precheck = self.ledger.precheck
        gateway.on_usage = self.ledger.charge
        self.gateway = gateway

        if search_backend is None and config.corpus_path:
            search_backend = FixtureCorpus(config.corpus_path)
        self.search_backend = search_backend

        scripted_mode = config.script_path or isinstance(
            gateway.default_backend, ScriptedBackend
        )
        if agent is None and scripted_mode:
            agent = default_stub_agent()
        self.agent = agent

        self.safety = SafetyChecker(gateway, config.model_id, max_attempts=2)
        self.thinker = Thinker(
            gateway,
            config.model_id,
            search_backend=search_backend,
            safety=self.safety,
            max_attempts=config.max_attempts,
        )
        self.coder = Coder(
            agent,
            gateway,
            config.model_id,
            run_timeout=config.run_timeout,
            max_attempts=config.max_attempts,
        )
        self.reviewer = Reviewer(gateway, config.model_id, max_attempts=config.max_attempts)
        self.plan: dict[str, dict[str, Any]] | None = None
        self.sessions: dict[str, PipelineSession] = {}

    # -- session management ------------------------------------------------------

    def new_session(self, session_id: str | None = None) -> PipelineSession:
        session_id = session_id or self.config.session_id or "s-unnamed"
        session = PipelineSession(session_id, self.config, self.ledger)
        self.sessions[session_id] = session
        return session

    def out_dir(self) -> Path:
        return Path(self.config.out_dir)

    def persist(self, session: PipelineSession) -> None:
        out = self.out_dir()
        out.mkdir(parents=True, exist_ok=True)
        state = session.to_json()
        state["gateway_cursor"] = self._script_cursor()
        state["agent_cursor"] = (
            self.agent.cursor if isinstance(self.agent, StubCodingAgent) else None
        )
        # Persisted paths are relative to the session directory so identical
        # runs into different directories stay byte-identical.
        state["config"]["out_dir"] = "."
        if state.get("coding_session"):
            state["coding_session"]["workdir"] = "experiments"
        (out / "session.json").write_text(canonical.dumps(state), encoding="utf-8")
        with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
            for event in session.event_log:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
        (out / "ledger.jsonl").write_text(self.ledger.to_jsonl(), encoding="utf-8")

    def _script_cursor(self) -> int | None:
        backend = self.gateway.default_backend
        return backend.cursor if isinstance(backend, ScriptedBackend) else None

    @classmethod
    def load(
        cls,
        out_dir: str | Path,
        gateway: Gateway | None = None,
        agent: Any = None,
        search_backend: Any = None,
    ) -> tuple["Engine", PipelineSession]:
        """Rebuild an engine + session from a persisted session directory."""
        out = Path(out_dir)
        state = json.loads((out / "session.json").read_text(encoding="utf-8"))
        config = RunConfig.from_json(state["config"])
        config.out_dir = str(out)
        explicit_agent = agent is not None
        engine = cls(config, gateway=gateway, agent=agent, search_backend=search_backend)
        backend = engine.gateway.default_backend
        # The gateway script is a full recording of the session: resume at the
        # persisted position. An explicitly provided agent script is fresh
        # continuation guidance and starts from its beginning.
        if isinstance(backend, ScriptedBackend) and state.get("gateway_cursor") is not None:
            backend.seek(state["gateway_cursor"])
        if (
            not explicit_agent
            and isinstance(engine.agent, StubCodingAgent)
            and state.get("agent_cursor") is not None
        ):
            engine.agent.cursor = state["agent_cursor"]

        session = engine.new_session(state["id"])
        session.phase = state["phase"]
        if state.get("intent"):
            session.intent = ResearchIntent.from_json(state["intent"])
        session.ideas = [validate_idea(raw) for raw in state.get("ideas", [])]
        session.selected_index = state.get("selected_index")
        if state.get("coding_session"):
            session.coding_session = CodingSession.from_json(state["coding_session"])
            session.coding_session.workdir = str(out / "experiments")
        session.artifacts = dict(state.get("artifacts", {}))
        session.warnings = list(state.get("warnings", []))
        session.tables = {
            name: formatter.StageTable.from_json(raw)
            for name, raw in state.get("tables", {}).items()
        }
        events_path = out / "events.jsonl"
        if events_path.exists():
            session.event_log = [
                json.loads(line)
                for line in events_path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        session._seq = state.get("event_seq", len(session.event_log))

        # Re-apply historical charges so ledger state survives the reload.
        ledger_path = out / "ledger.jsonl"
        if ledger_path.exists():
            for line in ledger_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                try:
                    engine.ledger.charge(
                        entry["stage"],
                        Usage(
                            prompt_tokens=entry["prompt_tokens"],
                            completion_tokens=entry["completion_tokens"],
                            model_id=entry["model_id"],
                        ),
                    )
                except (TerminationSignal, ChargeAfterTermination):
                    pass
        return engine, session

    # -- budget -------------------------------------------------------------------

    def _ensure_plan(self) -> None:
        if self.plan is not None:
            return
        self.plan = plan_budget(
            self.config.budget,
            self.config.model_id,
            price_table=self.ledger.price_table,
            estimates=self.estimates,
            stage_allowance=self.stage_allowance,
        )

    def effective_config(self) -> StageConfig:
        """StageConfig with reflection counts clamped by the budget plan."""
        self._ensure_plan()
        cfg = self.config.stage
        clamped = {
            stage: min(cfg.reflections(stage), self.plan[stage]["reflection_count"])
            for stage in ("thinker", "coder", "writer", "reviewer")
        }
        return replace(cfg, num_reflections=clamped)

    def _cost_event(self, session: PipelineSession) -> None:
        session.emit("cost_update", self.ledger.snapshot())

    # -- guarded stage execution -----------------------------------------------------

    def _guard(self, session: PipelineSession, stage_fn: Callable[[], None]) -> None:
        """Run a stage body, mapping failures onto absorbing phases."""
        try:
            stage_fn()
        except SafetyBlocked as exc:
            session.emit("error", {"error": "safety_blocked", "detail": str(exc)})
            session.phase = "blocked"
            session.emit("phase_change", {"phase": "blocked"})
            self.persist(session)
        except (TerminationSignal, BudgetExceeded, BudgetTooSmall) as exc:
            session.emit("error", {"error": "budget_terminated", "detail": str(exc)})
            session.phase = "terminated"
            session.emit("phase_change", {"phase": "terminated"})
            self.persist(session)
        except AwaitingHuman as exc:
            session.coding_session = exc.snapshot
            if session.phase != "awaiting_human":
                session.transition("awaiting_human")
            session.emit("warning", {"warning": "awaiting human input"})
            self.persist(session)
        else:
            self.persist(session)

    # -- stages ----------------------------------------------------------------------

    def think_stage(self, session: PipelineSession, intent: ResearchIntent) -> None:
        session.intent = intent
        session.transition("thinking")

        def body() -> None:
            self._ensure_plan()
            cfg = self.effective_config()
            # think() runs the safety gate internally; the report is cached, so
            # re-reading it here for warning/attack badges costs no extra call.
            ideas = self.thinker.think(intent, cfg)
            report = self.safety.assess_safety("thinker", intent.text)
            if report.risk_level == "MEDIUM":
                session.warnings.append(f"thinker: {report.reason}")
                session.emit("warning", {"stage": "thinker", "reason": report.reason})
            if report.is_attacked:
                session.emit(
                    "warning", {"stage": "thinker", "attack_type": report.attack_type}
                )
            session.ideas = ideas
            best = rank_and_select(ideas)
            session.selected_index = ideas.index(best)
            table = formatter.render_idea_table(ideas)
            session.tables["ideas"] = table
            session.emit("table_update", {"name": "ideas", "table": table.to_json()})
            self._cost_event(session)
            session.transition("idea_ready")
            self._write_artifact(session, "ideas.json", [i.to_json() for i in ideas])
            self._write_artifact(session, "idea.json", best.to_json())
            session.artifacts["ideas"] = "ideas.json"
            session.artifacts["idea"] = "idea.json"

        self._guard(session, body)

    def code_stage(self, session: PipelineSession) -> None:
        if session.phase != "idea_ready":
            raise IllegalTransition(f"code stage requires idea_ready, not {session.phase}")
        idea = session.selected_idea.with_status("selected")
        session.ideas[session.selected_index] = idea
        session.transition("coding")

        def body() -> None:
            report = self.safety.gate("coder", f"{idea.title}\n{idea.experiment_plan}")
            if report.risk_level == "MEDIUM":
                session.warnings.append(f"coder: {report.reason}")
                session.emit("warning", {"stage": "coder", "reason": report.reason})
            spec = self.coder.extract_experiment_spec(idea, max_runs=self.config.max_runs)
            enriched = replace(
                idea, extra={**idea.extra, "experiment_spec": spec.to_json()}
            )
            session.ideas[session.selected_index] = enriched
            table = formatter.render_experiment_table(enriched, spec)
            session.tables["experiment"] = table
            session.emit("table_update", {"name": "experiment", "table": table.to_json()})
            exp_dir = self.out_dir() / "experiments"
            status, exp_path, coding_session = self.coder.code(
                enriched, spec, exp_dir, resume=session.coding_session
            )
            session.coding_session = coding_session
            session.artifacts["experiments"] = "experiments"
            self._write_artifact(session, "idea.json", enriched.to_json())
            self._cost_event(session)
            if status:
                session.transition("code_ready")
            else:
                session.emit("log", {"message": "code stage returned no successful runs"})
                session.transition("done")

        self._guard(session, body)

    def resume_coding(self, session: PipelineSession, instruction: str) -> None:
        if session.phase != "awaiting_human":
            raise IllegalTransition(f"resume requires awaiting_human, not {session.phase}")
        if session.coding_session is None:
            raise SchemaError("coding_session", "nothing to resume")
        session.coding_session.pending_instruction = instruction
        session.transition("coding")

        def body() -> None:
            idea = session.selected_idea
            spec_raw = idea.extra.get("experiment_spec")
            if not spec_raw:
                raise SchemaError("experiment_spec", "missing from selected idea")
            spec = ExperimentSpec.from_json(spec_raw)
            status, _path, coding_session = self.coder.code(
                idea, spec, session.coding_session.workdir, resume=session.coding_session
            )
            session.coding_session = coding_session
            self._cost_event(session)
            if status:
                session.transition("code_ready")
            else:
                session.transition("done")

        self._guard(session, body)

    def write_stage(self, session: PipelineSession) -> None:
        if session.phase != "code_ready":
            raise IllegalTransition(f"write stage requires code_ready, not {session.phase}")
        session.transition("writing")

        def body() -> None:
            cfg = self.effective_config()
            writer = Writer(
                self.gateway,
                self.config.model_id,
                search_backend=self.search_backend,
                max_attempts=self.config.max_attempts,
                reflections=cfg.reflections("writer"),
            )
            idea = session.selected_idea
            exp_dir = self.out_dir() / "experiments"
            outcome = writer.write(idea, exp_dir, self.out_dir() / "paper")
            session.artifacts["paper"] = str(
                Path(outcome.path).relative_to(self.out_dir())
            )
            session.artifacts["paper_compiled"] = outcome.compiled
            session.artifacts["watermarked"] = outcome.project.watermarked
            self._cost_event(session)
            session.transition("paper_ready")

        self._guard(session, body)

    def review_stage(self, session: PipelineSession) -> None:
        if session.phase != "paper_ready":
            raise IllegalTransition(f"review stage requires paper_ready, not {session.phase}")
        session.transition("reviewing")

        def body() -> None:
            cfg = self.effective_config()
            paper_text = self._paper_text(session)
            report = self.safety.gate("reviewer", paper_text[:4000])
            if report.risk_level == "MEDIUM":
                session.warnings.append(f"reviewer: {report.reason}")
                session.emit("warning", {"stage": "reviewer", "reason": report.reason})
            related = self._review_related_works(session)
            review_dir = self.out_dir() / "review"
            review_dir.mkdir(parents=True, exist_ok=True)
            reviews = []
            for persona in ("base", "negative", "positive"):
                review = review_with_reflection(
                    self.reviewer, paper_text, persona, related, cfg.reflections("reviewer")
                )
                reviews.append(review)
                (review_dir / f"reviewer_{persona}.json").write_text(
                    canonical.dumps(review.to_json()), encoding="utf-8"
                )
            meta = self.reviewer.meta_review(reviews)
            (review_dir / "meta.json").write_text(
                canonical.dumps(meta.to_json()), encoding="utf-8"
            )
            session.artifacts["review"] = "review/meta.json"
            self._cost_event(session)
            session.transition("done")

        self._guard(session, body)

    def _paper_text(self, session: PipelineSession) -> str:
        paper_dir = self.out_dir() / "paper"
        parts = []
        main_tex = paper_dir / "main.tex"
        if main_tex.exists():
            parts.append(main_tex.read_text(encoding="utf-8"))
        for name in SECTION_ORDER:
            section = paper_dir / "sections" / f"{name}.tex"
            if section.exists():
                parts.append(section.read_text(encoding="utf-8"))
        if not parts:
            raise SchemaError("paper", f"no paper sources under {paper_dir}")
        return "\n\n".join(parts)

    def _review_related_works(self, session: PipelineSession) -> str:
        if self.search_backend is None:
            return ""
        try:
            hits = search_papers(session.selected_idea.title, 5, self.search_backend)
        except Exception:
            return ""
        return related_works_string(hits)

    def _write_artifact(self, session: PipelineSession, rel_path: str, value: Any) -> None:
        out = self.out_dir()
        out.mkdir(parents=True, exist_ok=True)
        (out / rel_path).write_text(canonical.dumps(value), encoding="utf-8")

    # -- table edits ------------------------------------------------------------------

    def apply_table_edit(
        self,
        session: PipelineSession,
        name: str,
        edit: dict,
        expected_version: int,
    ) -> formatter.StageTable:
        """Compare-and-set table edit; stale versions raise IllegalTransition."""
        table = session.tables.get(name)
        if table is None:
            raise SchemaError("table", f"no table named {name!r}")
        if expected_version != table.version:
            raise IllegalTransition(
                f"stale table version {expected_version}; current is {table.version}"
            )
        new_table = formatter.apply_table_edit(table, edit)
        session.tables[name] = new_table
        self._write_back_table(session, name, new_table, edit)
        session.emit("table_update", {"name": name, "table": new_table.to_json()})
        out = self.out_dir()
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "table_journal.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"table": name, "entry": new_table.journal[-1]}, sort_keys=True) + "\n")
        self.persist(session)
        return new_table

    def _write_back_table(
        self,
        session: PipelineSession,
        name: str,
        table: formatter.StageTable,
        edit: dict,
    ) -> None:
        """Propagate human table edits into the artifacts downstream stages read."""
        if name == "experiment" and session.selected_index is not None:
            spec = {"models": [], "datasets": [], "metrics": []}
            for row in table.rows:
                values = row["values"]
                if isinstance(values, str):
                    values = [v.strip() for v in values.split(",") if v.strip()]
                spec[f"{row['component']}s"] = list(values)
            idea = session.selected_idea
            raw = dict(idea.extra.get("experiment_spec", {}))
            raw.update(spec)
            session.ideas[session.selected_index] = replace(
                idea, extra={**idea.extra, "experiment_spec": raw}
            )
        elif name == "ideas" and "row" in edit:
            row_index = int(edit["row"])
            column = str(edit.get("column"))
            if 0 <= row_index < len(session.ideas) and column == "title":
                idea = session.ideas[row_index]
                session.ideas[row_index] = replace(idea, title=str(edit["new_value"]))

    # -- step & run -------------------------------------------------------------------

    def step(self, session: PipelineSession, action: str, payload: Any = None) -> PipelineSession:
        """Apply one human action; raises IllegalTransition if not legal now."""
        if action == "submit_feedback":
            if session.phase != "idea_ready":
                raise IllegalTransition(f"submit_feedback is illegal in {session.phase}")
            text = str(payload or "").strip()
            if not text:
                raise SchemaError("feedback", "must be non-empty")
            session.transition("thinking")

            def body() -> None:
                parent = session.selected_idea
                refined = self.thinker.refine_idea(parent, text, session.intent)
                refined = replace(
                    refined,
                    extra={**refined.extra, "parent_index": session.selected_index},
                )
                session.ideas.append(refined)
                session.selected_index = len(session.ideas) - 1
                table = formatter.render_idea_table(session.ideas)
                session.tables["ideas"] = table
                session.emit("table_update", {"name": "ideas", "table": table.to_json()})
                self._cost_event(session)
                session.transition("idea_ready")
                self._write_artifact(
                    session, "ideas.json", [i.to_json() for i in session.ideas]
                )
                self._write_artifact(session, "idea.json", session.selected_idea.to_json())

            self._guard(session, body)
        elif action == "confirm_idea":
            if session.phase != "idea_ready":
                raise IllegalTransition(f"confirm_idea is illegal in {session.phase}")
            index = int(payload) if payload is not None else session.selected_index
            if index is None or not 0 <= index < len(session.ideas):
                raise SchemaError("index", f"no idea at index {payload!r}")
            session.selected_index = index
            self.code_stage(session)
        elif action == "resume_coding":
            self.resume_coding(session, str(payload or ""))
        elif action == "approve_paper":
            if session.phase != "paper_ready":
                raise IllegalTransition(f"approve_paper is illegal in {session.phase}")
            self.review_stage(session)
        else:
            raise IllegalTransition(f"unknown action {action!r}")
        return session

    def run_pipeline(self, intent: ResearchIntent) -> PipelineResult:
        """think -> code -> (write -> review if code succeeded), non-interactively.

        Disabled stages end the run at the last completed phase.
        """
        session_id = self.config.session_id or _derived_session_id(
            intent.text, self.config.model_id, self.config.budget
        )
        session = self.new_session(session_id)
        enabled = self.config.stage.enabled

        self.think_stage(session, intent)
        if session.phase == "idea_ready" and enabled("coder"):
            self.code_stage(session)
        if session.phase == "code_ready" and enabled("writer"):
            self.write_stage(session)
        if session.phase == "paper_ready" and enabled("reviewer"):
            self.review_stage(session)

        out = self.out_dir()
        return PipelineResult(
            session_id=session.id,
            phase=session.phase,
            out_dir=str(out),
            idea_path=str(out / "idea.json") if "idea" in session.artifacts else None,
            exp_dir=str(out / "experiments") if "experiments" in session.artifacts else None,
            paper_path=(
                str(out / session.artifacts["paper"]) if "paper" in session.artifacts else None
            ),
            review_path=(
                str(out / session.artifacts["review"]) if "review" in session.artifacts else None
            ),
            warnings=list(session.warnings),
        )


def _derived_session_id(*parts: str) -> str:
    digest = hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()
    return f"s-{digest[:10]}"


# --- seven-line facade -----------------------------------------------------------------


class ResearchPilot:
    """Single-object API over the four stages:

        pilot = ResearchPilot(model)
        idea = pilot.think(intent)
        status, exp_dir = pilot.code(idea)
        if status:
            pdf_path = pilot.write(idea, exp_dir)
            review = pilot.review(pdf_path)
    """

    def __init__(
        self,
        model: str = "scripted",
        budget: str = "10.0",
        out_dir: str = "pilot_out",
        scripted: str | list | None = None,
        agent: Any = None,
        corpus: str | list | None = None,
        stage: StageConfig | None = None,
        **engine_kwargs: Any,
    ):
        gateway = None
        if scripted is not None:
            gateway = Gateway(default_backend=ScriptedBackend(scripted))
        search_backend = FixtureCorpus(corpus) if corpus is not None else None
        config = RunConfig(
            model_id=model,
            budget=str(budget),
            out_dir=str(out_dir),
            stage=stage or StageConfig(),
        )
        if agent is None:
            agent = default_stub_agent()
        self.engine = Engine(
            config,
            gateway=gateway,
            agent=agent,
            search_backend=search_backend,
            **engine_kwargs,
        )
        self._session = self.engine.new_session("facade")

    def think(self, intent: str | ResearchIntent) -> Idea:
        """Generate, score, and novelty-check ideas; returns the selected one."""
        if isinstance(intent, str):
            intent = ResearchIntent(text=intent)
        self._intent = intent
        self.engine._ensure_plan()
        cfg = self.engine.effective_config()
        ideas = self.engine.thinker.think(intent, cfg)
        return rank_and_select(ideas)

    def code(self, idea: Idea) -> tuple[bool, str]:
        spec = self.engine.coder.extract_experiment_spec(
            idea, max_runs=self.engine.config.max_runs
        )
        status, exp_dir, _session = self.engine.coder.code(
            idea, spec, Path(self.engine.config.out_dir) / "experiments"
        )
        return status, exp_dir

    def write(self, idea: Idea, exp_dir: str) -> str:
        cfg = self.engine.effective_config()
        writer = Writer(
            self.engine.gateway,
            self.engine.config.model_id,
            search_backend=self.engine.search_backend,
            reflections=cfg.reflections("writer"),
        )
        outcome = writer.write(idea, exp_dir, Path(self.engine.config.out_dir) / "paper")
        return outcome.path

    def review(self, pdf_path: str):
        paper_path = Path(pdf_path)
        if paper_path.suffix == ".pdf":
            from .pdftext import extract_text

            paper_text = extract_text(paper_path.read_bytes())
        else:
            parts = [paper_path.read_text(encoding="utf-8")]
            sections_dir = paper_path.parent / "sections"
            for name in SECTION_ORDER:
                section = sections_dir / f"{name}.tex"
                if section.exists():
                    parts.append(section.read_text(encoding="utf-8"))
            paper_text = "\n\n".join(parts)
        cfg = self.engine.effective_config()
        reviews = [
            review_with_reflection(
                self.engine.reviewer, paper_text, persona, "", cfg.reflections("reviewer")
            )
            for persona in ("base", "negative", "positive")
        ]
        return self.engine.reviewer.meta_review(reviews)
