"""Edge paths: timeouts, CLI resume, attachments, partial-termination artifacts."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from conftest import (
    CORPUS,
    build_pipeline_script,
    idea_reply,
    make_gateway,
    safety_reply,
    wire_idea,
)
from labpilot import canonical, cli
from labpilot.coder import AgentReply, Coder, StubCodingAgent
from labpilot.errors import AwaitingHuman
from labpilot.formatter import ResearchPayload, export
from labpilot.thinker import Thinker
from labpilot.types import Attachment, ExperimentSpec, ResearchIntent, StageConfig, validate_idea

SLEEPY_SCRIPT = """\
import argparse, time
parser = argparse.ArgumentParser()
parser.add_argument("--out_dir", required=True)
parser.parse_args()
time.sleep(30)
"""

GOOD_SCRIPT = """\
import argparse, json, os
p = argparse.ArgumentParser()
p.add_argument("--out_dir", required=True)
a = p.parse_args()
os.makedirs(a.out_dir, exist_ok=True)
json.dump({"accuracy": 1.0}, open(os.path.join(a.out_dir, "final_info.json"), "w"))
"""

IDEA = validate_idea(wire_idea())
SPEC = ExperimentSpec(models=("M",), datasets=("D",), metrics=("m",), max_runs=2)


class TestRunTimeout:
    def test_wall_clock_timeout_is_a_repairable_failure(self, tmp_path):
        agent = StubCodingAgent(
            [
                AgentReply("writing a slow script", {"experiment.py": SLEEPY_SCRIPT}),
                AgentReply("making it fast", {"experiment.py": GOOD_SCRIPT}),
                AgentReply("ALL_COMPLETED"),
            ]
        )
        coder = Coder(agent, make_gateway([]), "scripted", run_timeout=1.0)
        status, _, session = coder.code(IDEA, SPEC, tmp_path / "exp")
        assert status is True
        timeout_prompts = [p for p in agent.prompts_seen if "wall clock" in p]
        assert timeout_prompts, "timeout was not surfaced to the repair prompt"

    def test_unrepaired_timeout_pauses(self, tmp_path):
        agent = StubCodingAgent(
            [AgentReply("slow", {"experiment.py": SLEEPY_SCRIPT})] * 4
        )
        coder = Coder(agent, make_gateway([]), "scripted", run_timeout=1.0, repair_attempts=1)
        with pytest.raises(AwaitingHuman):
            coder.code(IDEA, SPEC, tmp_path / "exp")


class TestCliResume:
    def test_pause_then_resume_via_cli(self, tmp_path):
        script_path = tmp_path / "script.json"
        script_path.write_text(json.dumps(build_pipeline_script()))
        corpus_path = tmp_path / "corpus.json"
        corpus_path.write_text(json.dumps(CORPUS))
        bad_agent = tmp_path / "agent_bad.json"
        bad_agent.write_text(
            json.dumps(
                [
                    {"text": "try", "edits": {"experiment.py": "import sys\nsys.exit(5)\n"}},
                    {"text": "retry", "edits": {"experiment.py": "import sys\nsys.exit(5)\n"}},
                    {"text": "retry", "edits": {"experiment.py": "import sys\nsys.exit(5)\n"}},
                ]
            )
        )
        out = tmp_path / "out"
        code = cli.main(
            [
                "run",
                "--intent", "improve KV-cache reuse for LLM serving",
                "--out", str(out),
                "--scripted", str(script_path),
                "--corpus", str(corpus_path),
                "--agent-script", str(bad_agent),
                "--num-ideas", "2",
                "--reflections", "1",
                "--session-id", "s-resume",
            ]
        )
        assert code == 1  # paused, resumable
        state = canonical.loads((out / "session.json").read_text())
        assert state["phase"] == "awaiting_human"

        good_agent = tmp_path / "agent_good.json"
        good_agent.write_text(
            json.dumps(
                [
                    {"text": "fixed per instruction", "edits": {"experiment.py": GOOD_SCRIPT}},
                    {"text": "ALL_COMPLETED", "edits": {}},
                ]
            )
        )
        code = cli.main(
            [
                "resume",
                str(out),
                "--instruction", "exit zero and write final_info",
                "--scripted", str(script_path),
                "--agent-script", str(good_agent),
                "--corpus", str(corpus_path),
            ]
        )
        assert code == 0
        assert (out / "experiments" / "run_1" / "final_info.json").exists()
        assert (out / "review" / "meta.json").exists()

    def test_resume_on_finished_session_errors(self, tmp_path, capsys):
        script_path = tmp_path / "script.json"
        script_path.write_text(json.dumps(build_pipeline_script()))
        corpus_path = tmp_path / "corpus.json"
        corpus_path.write_text(json.dumps(CORPUS))
        out = tmp_path / "out"
        assert (
            cli.main(
                [
                    "run",
                    "--intent", "improve KV-cache reuse for LLM serving",
                    "--out", str(out),
                    "--scripted", str(script_path),
                    "--corpus", str(corpus_path),
                    "--num-ideas", "2",
                    "--reflections", "1",
                ]
            )
            == 0
        )
        assert cli.main(["resume", str(out)]) == 1


class TestAttachments:
    def test_text_attachment_flows_into_generation_context(self):
        captured: list[str] = []

        class Recording(Thinker):
            def _request(self, system, text, temperature=None):
                captured.append(text)
                return super()._request(system, text, temperature)

        intent = ResearchIntent(
            text="study cache reuse",
            attachments=(Attachment(format="text", data=b"prior notes: reuse beats recompute"),),
        )
        thinker = Recording(make_gateway([idea_reply()]), "scripted")
        cfg = StageConfig(num_ideas=1, num_reflections={"thinker": 0}, novelty_rounds=1)
        thinker.think(intent, cfg)
        assert any("prior notes: reuse beats recompute" in text for text in captured)

    def test_system_prompt_override_used(self):
        captured: list[str] = []

        class Recording(Thinker):
            def _request(self, system, text, temperature=None):
                captured.append(system)
                return super()._request(system, text, temperature)

        intent = ResearchIntent(
            text="study cache reuse", system_prompt_override="You are a cautious reviewer."
        )
        thinker = Recording(make_gateway([idea_reply()]), "scripted")
        cfg = StageConfig(num_ideas=1, num_reflections={"thinker": 0}, novelty_rounds=1)
        thinker.think(intent, cfg)
        assert captured[0] == "You are a cautious reviewer."


class TestTerminationArtifacts:
    def test_partial_artifacts_survive_mid_run_termination(self, tmp_path):
        from labpilot.engine import Engine, RunConfig
        from labpilot.gateway import Gateway, ScriptedBackend
        from labpilot.toolhub import FixtureCorpus

        config = RunConfig(
            model_id="scripted",
            budget="0.004",  # enough for the thinker block, not the rest
            out_dir=str(tmp_path / "out"),
            stage=StageConfig(num_ideas=2, num_reflections={s: 1 for s in
                              ("thinker", "coder", "writer", "reviewer")}),
            session_id="s-partial",
        )
        from labpilot.checker import CallEstimate

        tiny = {s: CallEstimate(1, 0, 1, 0, max_reflections=1)
                for s in ("thinker", "coder", "writer", "reviewer")}
        engine = Engine(
            config,
            gateway=Gateway(default_backend=ScriptedBackend(build_pipeline_script())),
            search_backend=FixtureCorpus(CORPUS),
            estimates=tiny,
        )
        result = engine.run_pipeline(
            ResearchIntent(text="improve KV-cache reuse for LLM serving")
        )
        assert result.phase == "terminated"
        out = Path(result.out_dir)
        assert (out / "session.json").exists()
        assert (out / "ledger.jsonl").exists()
        state = canonical.loads((out / "session.json").read_text())
        assert state["phase"] == "terminated"


class TestExportEdges:
    def test_payload_markdown_field_table(self):
        payload = ResearchPayload(kind="intent", body={"text": "plain goal"})
        text = export(payload, "markdown_table").decode("utf-8")
        assert text.splitlines()[0] == "| Field | Value |"
        assert "plain goal" in text

    def test_cell_pipe_escaped_in_markdown(self):
        from labpilot.formatter import StageTable

        table = StageTable(
            columns=(("a", "A"),), rows=({"a": "x|y"},), provenance="test"
        )
        text = export(table, "markdown_table").decode("utf-8")
        assert "x\\|y" in text
