"""Command-line entry point.

Subcommands: ``run`` (full pipeline on an intent), ``resume`` (continue a
paused session directory), ``tools list``. Exit codes: 0 success, 2 blocked by
the safety gate, 3 terminated by budget, 1 any other error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import formatter
from .coder import StubCodingAgent
from .engine import Engine, PipelineResult, RunConfig
from .errors import PipelineError
from .toolhub import default_registry
from .types import ResearchIntent, StageConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BLOCKED = 2
EXIT_TERMINATED = 3

_PHASE_EXIT = {
    "done": EXIT_OK,
    "blocked": EXIT_BLOCKED,
    "terminated": EXIT_TERMINATED,
}


class _Parser(argparse.ArgumentParser):
    # Exit code 2 is reserved for safety-blocked runs; usage errors are "other".
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_ERROR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="labpilot", description="Budget-bounded research pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline on an intent")
    run.add_argument("--intent", required=True, help="intent text, or a path to a text/json/pdf file")
    run.add_argument("--model", default="scripted", help="model id for the LLM backend")
    run.add_argument("--budget", default="10.0", help="total budget (currency units)")
    run.add_argument("--out", default="out", help="session output directory")
    run.add_argument("--interactive", action="store_true", help="pause for human steering")
    run.add_argument("--scripted", help="path to a JSON array of scripted completions")
    run.add_argument("--agent-script", help="path to scripted coding-agent replies (JSON)")
    run.add_argument("--corpus", help="path to a fixture paper corpus (JSON array)")
    run.add_argument("--price-table", help="path to a model price table (JSON)")
    run.add_argument("--num-ideas", type=int, default=3)
    run.add_argument("--reflections", type=int, default=2, help="reflection cap per stage")
    run.add_argument("--novelty-rounds", type=int, default=2)
    run.add_argument("--max-runs", type=int, default=3)
    run.add_argument("--session-id", help="explicit session id (default: derived)")

    resume = sub.add_parser("resume", help="resume a paused session")
    resume.add_argument("session_dir", help="session directory containing session.json")
    resume.add_argument("--instruction", default="", help="instruction for the paused coder")
    resume.add_argument("--scripted", help="scripted completions for the resumed run")
    resume.add_argument("--agent-script", help="scripted coding-agent replies (JSON)")
    resume.add_argument("--corpus", help="fixture paper corpus (JSON array)")

    tools = sub.add_parser("tools", help="tool registry commands")
    tools.add_argument("action", choices=["list"])
    return parser


def _load_intent(value: str) -> ResearchIntent:
    path = Path(value)
    if path.exists() and path.is_file():
        suffix = path.suffix.lower().lstrip(".")
        fmt = {"pdf": "pdf", "json": "json"}.get(suffix, "text")
        payload = formatter.parse_input(fmt, path.read_bytes())
        return ResearchIntent.from_json(payload.body)
    return ResearchIntent(text=value)


def _result_exit(result: PipelineResult) -> int:
    return _PHASE_EXIT.get(result.phase, EXIT_ERROR)


def _print_result(result: PipelineResult) -> None:
    print(json.dumps(result.to_json(), indent=2, sort_keys=True))


def _interactive_idea_loop(engine: Engine, session) -> None:
    while session.phase == "idea_ready":
        table = session.tables.get("ideas")
        if table is not None:
            sys.stdout.write(formatter.export(table, "markdown_table").decode("utf-8"))
        answer = input(
            "[enter]=confirm selected, <n>=confirm idea n, otherwise feedback text: "
        ).strip()
        if not answer:
            engine.step(session, "confirm_idea", session.selected_index)
        elif answer.isdigit():
            engine.step(session, "confirm_idea", int(answer))
        else:
            engine.step(session, "submit_feedback", answer)


def _cmd_run(args: argparse.Namespace) -> int:
    config = RunConfig(
        model_id=args.model,
        budget=str(args.budget),
        out_dir=args.out,
        stage=StageConfig(
            num_ideas=args.num_ideas,
            num_reflections={s: args.reflections for s in ("thinker", "coder", "writer", "reviewer")},
            max_reflections=max(args.reflections, 5),
            novelty_rounds=args.novelty_rounds,
        ),
        interactive=args.interactive,
        script_path=args.scripted,
        corpus_path=args.corpus,
        price_table_path=args.price_table,
        session_id=args.session_id,
        max_runs=args.max_runs,
    )
    agent = StubCodingAgent(args.agent_script) if args.agent_script else None
    try:
        engine = Engine(config, agent=agent)
        intent = _load_intent(args.intent)
    except PipelineError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR

    if not args.interactive:
        result = engine.run_pipeline(intent)
        _print_result(result)
        if result.phase == "awaiting_human":
            sys.stderr.write(
                f"session paused; resume with: labpilot resume {result.out_dir}\n"
            )
        return _result_exit(result)

    session = engine.new_session(config.session_id or "interactive")
    engine.think_stage(session, intent)
    if session.phase == "idea_ready":
        _interactive_idea_loop(engine, session)
    while session.phase == "awaiting_human":
        instruction = input("coding paused; instruction for the agent: ").strip()
        engine.step(session, "resume_coding", instruction)
    if session.phase == "code_ready":
        engine.write_stage(session)
    if session.phase == "paper_ready":
        engine.step(session, "approve_paper")
    result = PipelineResult(
        session_id=session.id, phase=session.phase, out_dir=config.out_dir
    )
    _print_result(result)
    return _result_exit(result)


def _cmd_resume(args: argparse.Namespace) -> int:
    from .gateway import Gateway, ScriptedBackend
    from .toolhub import FixtureCorpus

    gateway = None
    if args.scripted:
        gateway = Gateway(default_backend=ScriptedBackend(args.scripted))
    agent = StubCodingAgent(args.agent_script) if args.agent_script else None
    search = FixtureCorpus(args.corpus) if args.corpus else None
    try:
        engine, session = Engine.load(
            args.session_dir, gateway=gateway, agent=agent, search_backend=search
        )
    except (OSError, PipelineError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: cannot load session: {exc}\n")
        return EXIT_ERROR
    if session.phase != "awaiting_human":
        sys.stderr.write(f"error: session is {session.phase}, not awaiting_human\n")
        return EXIT_ERROR
    engine.step(session, "resume_coding", args.instruction)
    if session.phase == "code_ready":
        engine.write_stage(session)
    if session.phase == "paper_ready":
        engine.step(session, "approve_paper")
    result = PipelineResult(
        session_id=session.id, phase=session.phase, out_dir=str(args.session_dir)
    )
    _print_result(result)
    return _result_exit(result)


def _cmd_tools(args: argparse.Namespace) -> int:
    registry = default_registry()
    for descriptor in registry.list_tools():
        print(f"{descriptor.name}\t{descriptor.transport}\t{descriptor.description}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "resume":
            return _cmd_resume(args)
        if args.command == "tools":
            return _cmd_tools(args)
    except PipelineError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
