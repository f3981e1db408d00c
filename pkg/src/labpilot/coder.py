"""Stage 2: drive a coding agent through bounded experiment runs.

The coding agent sits behind a small adapter so tests run hermetically with a
scripted stub. The harness owns execution: it always invokes the exact command
``python experiment.py --out_dir=run_i`` inside the workdir, collects
``run_i/final_info.json``, appends dated notes, and pauses for a human when a
run cannot be repaired.
"""

from __future__ import annotations

import json
import logging
import re
import subprocess
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

from . import prompts
from .errors import AwaitingHuman, ExecutionTimeout, NoSuccessfulRuns, SchemaError
from .gateway import ChatRequest, Gateway, extract_json_block
from .types import ExperimentSpec, Idea, RunResults

logger = logging.getLogger(__name__)

STAGE = "coder"
ALL_COMPLETED = "ALL_COMPLETED"
RUN_DIR_RE = re.compile(r"^run_(\d+)$")


@dataclass
class AgentReply:
    """One coding-agent exchange: reply text plus files to write."""

    text: str
    edits: dict[str, str] = field(default_factory=dict)


class CodingAgent(Protocol):
    def respond(self, prompt: str) -> AgentReply: ...


class StubCodingAgent:
    """Deterministic scripted agent for hermetic tests.

    Accepts a list of AgentReply (or dicts) or a path to a JSON array of
    {"text": ..., "edits": {path: content}} objects, replayed in order.
    Replays the last reply if the queue runs dry.
    """

    def __init__(self, replies):
        if isinstance(replies, (str, Path)):
            replies = json.loads(Path(replies).read_text(encoding="utf-8"))
        self.replies = [
            r if isinstance(r, AgentReply) else AgentReply(r["text"], dict(r.get("edits", {})))
            for r in replies
        ]
        self.cursor = 0
        self.prompts_seen: list[str] = []

    def respond(self, prompt: str) -> AgentReply:
        self.prompts_seen.append(prompt)
        if self.cursor < len(self.replies):
            reply = self.replies[self.cursor]
            self.cursor += 1
            return reply
        return self.replies[-1] if self.replies else AgentReply(ALL_COMPLETED)


DEFAULT_STUB_EXPERIMENT = """\
import argparse
import json
import os

parser = argparse.ArgumentParser()
parser.add_argument("--out_dir", required=True)
args = parser.parse_args()
os.makedirs(args.out_dir, exist_ok=True)

xs = list(range(16))
ys = [2 * x + 1 for x in xs]
preds = [2 * x + 1 for x in xs]
accuracy = sum(int(p == y) for p, y in zip(preds, ys)) / len(ys)

with open(os.path.join(args.out_dir, "final_info.json"), "w") as fh:
    json.dump({"accuracy": accuracy, "samples": len(xs)}, fh, sort_keys=True)
"""


def default_stub_agent() -> StubCodingAgent:
    """Stub that writes a tiny deterministic experiment and finishes after run 1."""
    return StubCodingAgent(
        [
            AgentReply(
                "Writing a minimal runnable experiment.",
                {"experiment.py": DEFAULT_STUB_EXPERIMENT},
            ),
            AgentReply(f"Results recorded. {ALL_COMPLETED}"),
        ]
    )


@dataclass
class CodingSession:
    """Mutable state of one coding stage, resumable across pauses."""

    workdir: str
    run_index: int = 1
    max_runs: int = 3
    status: str = "running"  # running | awaiting_human | success | failed
    transcript: list[dict] = field(default_factory=list)
    idea_title: str = ""
    experiment_plan: str = ""
    command_log: list[list[str]] = field(default_factory=list)
    successful_runs: list[int] = field(default_factory=list)
    pending_instruction: str = ""

    def record(self, role: str, text: str) -> None:
        self.transcript.append({"role": role, "text": text})

    def to_json(self) -> dict:
        return {
            "workdir": self.workdir,
            "run_index": self.run_index,
            "max_runs": self.max_runs,
            "status": self.status,
            "transcript": list(self.transcript),
            "idea_title": self.idea_title,
            "experiment_plan": self.experiment_plan,
            "command_log": [list(c) for c in self.command_log],
            "successful_runs": list(self.successful_runs),
            "pending_instruction": self.pending_instruction,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "CodingSession":
        return cls(**raw)


@dataclass
class RunOutcome:
    ok: bool
    stderr: str = ""


class Coder:
    def __init__(
        self,
        agent: CodingAgent,
        gateway: Gateway,
        model_id: str,
        run_timeout: float = 600.0,
        repair_attempts: int = 2,
        max_attempts: int = 3,
        python_exe: str | None = None,
    ):
        self.agent = agent
        self.gateway = gateway
        self.model_id = model_id
        self.run_timeout = run_timeout
        self.repair_attempts = repair_attempts
        self.max_attempts = max_attempts
        self.python_exe = python_exe or sys.executable

    # -- spec extraction ----------------------------------------------------

    def extract_experiment_spec(self, idea: Idea, max_runs: int = 3) -> ExperimentSpec:
        """Pull model/dataset/metric name lists out of the experiment plan."""
        if not idea.experiment_plan.strip():
            raise SchemaError("experiment_plan", "idea has no experiment plan")
        # The plan is one narrative block; it serves as all three sections.
        text = prompts.render(
            "coder_format",
            model=idea.experiment_plan,
            dataset=idea.experiment_plan,
            metric=idea.experiment_plan,
        )

        def validator(reply: str) -> ExperimentSpec:
            return ExperimentSpec.from_json(extract_json_block(reply), max_runs=max_runs)

        req = ChatRequest.user(
            system="You extract structured experiment details. Reply with JSON only.",
            text=text,
            model_id=self.model_id,
            temperature=0.0,
        )
        return self.gateway.with_retries(
            req, validator, max_attempts=self.max_attempts, stage=STAGE
        )

    # -- execution ------------------------------------------------------------

    def _apply_edits(self, workdir: Path, edits: dict[str, str]) -> None:
        for rel_path, content in edits.items():
            path = Path(rel_path)
            if path.is_absolute() or ".." in path.parts:
                raise SchemaError("edits", f"path escapes workdir: {rel_path}")
            target = workdir / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content, encoding="utf-8")

    def _execute_run(self, session: CodingSession, run_index: int) -> RunOutcome:
        workdir = Path(session.workdir)
        command = ["python", "experiment.py", f"--out_dir=run_{run_index}"]
        session.command_log.append(command)
        if not (workdir / "experiment.py").exists():
            return RunOutcome(False, "experiment.py not found in workdir")
        argv = [self.python_exe] + command[1:]
        try:
            proc = subprocess.run(
                argv,
                cwd=workdir,
                capture_output=True,
                text=True,
                timeout=self.run_timeout,
            )
        except subprocess.TimeoutExpired:
            timeout_error = ExecutionTimeout(
                f"run_{run_index} exceeded {self.run_timeout:.0f}s wall clock"
            )
            logger.warning("%s", timeout_error)
            return RunOutcome(False, str(timeout_error))
        if proc.returncode != 0:
            return RunOutcome(False, proc.stderr or proc.stdout)
        problem = self._check_run_output(workdir, run_index)
        if problem:
            return RunOutcome(False, problem)
        return RunOutcome(True)

    @staticmethod
    def _check_run_output(workdir: Path, run_index: int) -> str:
        run_dir = workdir / f"run_{run_index}"
        target = run_dir / "final_info.json"
        if not target.exists():
            nested = list(run_dir.glob("*/final_info.json")) if run_dir.exists() else []
            if nested:
                return (
                    f"final_info.json was saved into a nested folder ({nested[0]}); "
                    f"it must be placed directly inside run_{run_index}"
                )
            return f"run_{run_index}/final_info.json was not produced"
        try:
            parsed = json.loads(target.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            return f"final_info.json does not parse: {exc}"
        if not isinstance(parsed, dict):
            return "final_info.json must contain a JSON object"
        return ""

    @staticmethod
    def _append_note(workdir: Path, run_index: int) -> None:
        final_info = json.loads(
            (workdir / f"run_{run_index}" / "final_info.json").read_text(encoding="utf-8")
        )
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%d")
        line = f"[{stamp}] run {run_index}: results {json.dumps(final_info, sort_keys=True)}\n"
        with open(workdir / "notes.txt", "a", encoding="utf-8") as fh:
            fh.write(line)

    def handle_run_failure(self, session: CodingSession, stderr: str) -> str:
        """Render the repair prompt for the agent after a failed run."""
        message = stderr.strip() or "(no output)"
        return prompts.render(
            "coder_failure",
            message=message,
            Title=session.idea_title,
            Experiment=session.experiment_plan,
            max_runs=session.max_runs,
            run_time=session.run_index,
        )

    def _ask_agent(self, session: CodingSession, prompt: str) -> AgentReply:
        session.record("harness", prompt)
        reply = self.agent.respond(prompt)
        session.record("agent", reply.text)
        self._apply_edits(Path(session.workdir), reply.edits)
        return reply

    def code(
        self,
        idea: Idea,
        spec: ExperimentSpec,
        workdir: str | Path,
        resume: CodingSession | None = None,
    ) -> tuple[bool, str, CodingSession]:
        """Run up to max_runs experiment iterations; returns (status, exp_dir, session).

        Status is true iff at least one run produced a parseable final_info.
        Raises AwaitingHuman (with the session snapshot) when a run keeps
        failing after the auto-repair budget, or when the agent deviates by
        producing no edits and no completion signal.
        """
        workdir = Path(workdir)
        workdir.mkdir(parents=True, exist_ok=True)

        if resume is not None:
            session = resume
            session.status = "running"
        else:
            session = CodingSession(
                workdir=str(workdir),
                max_runs=spec.max_runs,
                idea_title=idea.title,
                experiment_plan=idea.experiment_plan,
            )
            initial = prompts.render(
                "coder_experiment",
                title=idea.title,
                problem=idea.narrative["problem"],
                novelty=idea.narrative["gap"],
                approach=idea.narrative["approach"],
                model=", ".join(spec.models),
                dataset=", ".join(spec.datasets),
                metric=", ".join(spec.metrics),
                max_runs=spec.max_runs,
                baseline_results="(no baseline results available)",
            )
            reply = self._ask_agent(session, initial)
            if ALL_COMPLETED in reply.text:
                session.status = "failed"
                return False, str(workdir), session
            if not reply.edits:
                session.status = "awaiting_human"
                raise AwaitingHuman(session)

        while session.run_index <= session.max_runs:
            run_index = session.run_index
            outcome = self._execute_run(session, run_index)
            if not outcome.ok:
                outcome = self._repair_loop(session, outcome)
                if not outcome.ok:
                    session.status = "awaiting_human"
                    raise AwaitingHuman(session)
            self._append_note(workdir, run_index)
            session.successful_runs.append(run_index)
            if run_index == session.max_runs:
                break
            final_info = json.loads(
                (workdir / f"run_{run_index}" / "final_info.json").read_text(encoding="utf-8")
            )
            success_prompt = prompts.render(
                "coder_success",
                run_num=run_index,
                results=json.dumps(final_info, sort_keys=True),
                next_run=run_index + 1,
            )
            reply = self._ask_agent(session, success_prompt)
            if ALL_COMPLETED in reply.text:
                break
            session.run_index += 1

        status = bool(session.successful_runs)
        session.status = "success" if status else "failed"
        return status, str(workdir), session

    def _repair_loop(self, session: CodingSession, outcome: RunOutcome) -> RunOutcome:
        for _attempt in range(self.repair_attempts):
            prompt = self.handle_run_failure(session, outcome.stderr)
            if session.pending_instruction:
                prompt += f"\nHuman instruction: {session.pending_instruction}\n"
                session.pending_instruction = ""
            reply = self._ask_agent(session, prompt)
            if not reply.edits:
                return outcome
            outcome = self._execute_run(session, session.run_index)
            if outcome.ok:
                return outcome
        return outcome


def collect_results(exp_dir: str | Path) -> list[RunResults]:
    """One RunResults per run_i directory holding a valid final_info.json.

    Nested placements are rejected; a final_info that parses to a non-object
    is skipped with a warning. Raises NoSuccessfulRuns when nothing valid
    remains.
    """
    exp_dir = Path(exp_dir)
    if not exp_dir.exists():
        raise NoSuccessfulRuns(f"experiment directory {exp_dir} does not exist")
    notes_path = exp_dir / "notes.txt"
    notes_text = notes_path.read_text(encoding="utf-8") if notes_path.exists() else ""

    indexed = []
    for child in exp_dir.iterdir():
        match = RUN_DIR_RE.match(child.name)
        if match and child.is_dir():
            indexed.append((int(match.group(1)), child))
    results = []
    for run_index, run_dir in sorted(indexed):
        target = run_dir / "final_info.json"
        if not target.exists():
            continue
        try:
            parsed = json.loads(target.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            logger.warning("run_%d final_info does not parse: %s", run_index, exc)
            continue
        if not isinstance(parsed, dict):
            logger.warning("run_%d final_info is not a JSON object; skipped", run_index)
            continue
        run_notes = "\n".join(
            line
            for line in notes_text.splitlines()
            if f"run {run_index}" in line or f"run_{run_index}" in line
        )
        results.append(
            RunResults(
                run_index=run_index,
                out_dir=str(run_dir),
                final_info=parsed,
                notes=run_notes,
            )
        )
    if not results:
        raise NoSuccessfulRuns(f"no run directory under {exp_dir} has a valid final_info.json")
    return results
