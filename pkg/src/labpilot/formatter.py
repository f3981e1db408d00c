"""Multi-format I/O and tabular human-agent communication between stages.

Payloads wrap core types in a {kind, body} envelope with canonical JSON as
the wire format. Stage tables are immutable values carrying a version counter
and an edit journal so the UI can make optimistic, replayable edits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from . import canonical, pdftext
from .errors import AddressError, ParseError, PipelineError, SchemaError, SpecMissing
from .types import (
    ExperimentSpec,
    Idea,
    PaperProject,
    ResearchIntent,
    validate_idea,
    validate_review,
)

PAYLOAD_KINDS = ("intent", "idea", "codebase_summary", "paper", "review")


def _validate_body(kind: str, body: Any) -> Any:
    if kind == "intent":
        return ResearchIntent.from_json(body).to_json()
    if kind == "idea":
        return validate_idea(body).to_json()
    if kind == "review":
        return validate_review(body).to_json()
    if kind == "paper":
        return PaperProject.from_json(body).to_json()
    if kind == "codebase_summary":
        if not isinstance(body, Mapping) or "runs" not in body:
            raise SchemaError("runs", "codebase_summary requires a runs list")
        return dict(body)
    raise SchemaError("kind", f"unknown payload kind {kind!r}")


@dataclass(frozen=True)
class ResearchPayload:
    """A stage artifact in canonical JSON form, tagged with its kind."""

    kind: str
    body: Any

    def __post_init__(self) -> None:
        if self.kind not in PAYLOAD_KINDS:
            raise SchemaError("kind", f"unknown payload kind {self.kind!r}")
        object.__setattr__(self, "body", _validate_body(self.kind, self.body))

    def to_json(self) -> dict:
        return {"kind": self.kind, "body": self.body}


def parse_input(fmt: str, data: bytes) -> ResearchPayload:
    """Parse pdf/json/text bytes into a validated payload.

    PDF and plain text become intent payloads (text extraction only); JSON is
    expected in the {kind, body} envelope, with a bare intent object accepted.
    """
    if not data:
        raise ParseError(fmt, "input is empty")
    if fmt == "text":
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("text", str(exc))
        if not text.strip():
            raise ParseError("text", "input is blank")
        return ResearchPayload(kind="intent", body={"text": text})
    if fmt == "json":
        try:
            raw = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError("json", str(exc))
        try:
            if isinstance(raw, Mapping) and "kind" in raw and "body" in raw:
                return ResearchPayload(kind=str(raw["kind"]), body=raw["body"])
            if isinstance(raw, Mapping) and "text" in raw:
                return ResearchPayload(kind="intent", body=raw)
        except PipelineError as exc:
            raise ParseError("json", str(exc))
        raise ParseError("json", "expected a {kind, body} envelope or an intent object")
    if fmt == "pdf":
        try:
            text = pdftext.extract_text(data)
        except PipelineError as exc:
            raise ParseError("pdf", str(exc))
        if not text.strip():
            raise ParseError("pdf", "no extractable text")
        return ResearchPayload(kind="intent", body={"text": text})
    raise ParseError(fmt, "unknown format")


# --- stage tables ------------------------------------------------------------------


@dataclass(frozen=True)
class StageTable:
    """Immutable editable table with a version counter and edit journal."""

    columns: tuple[tuple[str, str], ...]
    rows: tuple[dict[str, Any], ...]
    provenance: str
    version: int = 0
    journal: tuple[dict, ...] = ()

    def __post_init__(self) -> None:
        keys = [key for key, _ in self.columns]
        if len(set(keys)) != len(keys):
            raise SchemaError("columns", "duplicate column keys")
        for i, row in enumerate(self.rows):
            missing = set(keys) - set(row)
            if missing:
                raise SchemaError(f"rows[{i}]", f"missing cells for columns {sorted(missing)}")

    def column_keys(self) -> list[str]:
        return [key for key, _ in self.columns]

    def to_json(self) -> dict:
        return {
            "columns": [list(c) for c in self.columns],
            "rows": [dict(r) for r in self.rows],
            "provenance": self.provenance,
            "version": self.version,
            "journal": [dict(j) for j in self.journal],
        }

    @classmethod
    def from_json(cls, raw: Mapping[str, Any]) -> "StageTable":
        return cls(
            columns=tuple((str(k), str(h)) for k, h in raw["columns"]),
            rows=tuple(dict(r) for r in raw["rows"]),
            provenance=str(raw.get("provenance", "")),
            version=int(raw.get("version", 0)),
            journal=tuple(dict(j) for j in raw.get("journal", ())),
        )


IDEA_TABLE_COLUMNS = (
    ("title", "Title"),
    ("novelty_notes", "Novelty vs related work"),
    ("impact", "Impact"),
    ("feasibility", "Feasibility"),
    ("novelty", "Novelty"),
    ("status", "Status"),
)


def render_idea_table(ideas: list[Idea]) -> StageTable:
    """One row per idea; zero ideas still yields the headers."""
    rows = []
    for idea in ideas:
        if idea.comparison_rows:
            notes = "; ".join(
                f"vs {row.title}: {row.difference_note}" for row in idea.comparison_rows
            )
        else:
            notes = str(idea.extra.get("novelty", {}).get("rationale", ""))
        rows.append(
            {
                "title": idea.title,
                "novelty_notes": notes,
                "impact": idea.scores["impact"].value,
                "feasibility": idea.scores["feasibility"].value,
                "novelty": idea.scores["novelty"].value,
                "status": idea.status,
            }
        )
    return StageTable(
        columns=IDEA_TABLE_COLUMNS, rows=tuple(rows), provenance="thinker", version=0
    )


EXPERIMENT_TABLE_COLUMNS = (("component", "Component"), ("values", "Values"))


def render_experiment_table(idea: Idea, spec: ExperimentSpec | None = None) -> StageTable:
    """Model/dataset/metric rows from the idea's extracted experiment spec."""
    if spec is None:
        raw = idea.extra.get("experiment_spec")
        if not raw:
            raise SpecMissing("idea has no extracted experiment spec")
        spec = ExperimentSpec.from_json(raw)
    if not idea.experiment_plan.strip():
        raise SpecMissing("idea has no experiment plan")
    rows = (
        {"component": "model", "values": list(spec.models)},
        {"component": "dataset", "values": list(spec.datasets)},
        {"component": "metric", "values": list(spec.metrics)},
    )
    return StageTable(
        columns=EXPERIMENT_TABLE_COLUMNS, rows=rows, provenance="coder", version=0
    )


def apply_table_edit(table: StageTable, edit: Mapping[str, Any]) -> StageTable:
    """Apply a cell edit or row addition, bumping the version and journal."""
    keys = table.column_keys()
    if "add_row" in edit:
        cells = dict(edit.get("cells") or {})
        missing = set(keys) - set(cells)
        if missing:
            raise AddressError(f"new row is missing cells for columns {sorted(missing)}")
        unknown = set(cells) - set(keys)
        if unknown:
            raise AddressError(f"new row has unknown columns {sorted(unknown)}")
        rows = table.rows + (cells,)
    else:
        for key in ("row", "column", "new_value"):
            if key not in edit:
                raise AddressError(f"cell edit requires {key!r}")
        row_index = int(edit["row"])
        column = str(edit["column"])
        if not 0 <= row_index < len(table.rows):
            raise AddressError(f"row {row_index} out of range [0,{len(table.rows) - 1}]")
        if column not in keys:
            raise AddressError(f"unknown column {column!r}")
        rows = tuple(
            {**row, column: edit["new_value"]} if i == row_index else row
            for i, row in enumerate(table.rows)
        )
    entry = {"version": table.version + 1, "edit": dict(edit)}
    return replace(
        table, rows=tuple(rows), version=table.version + 1, journal=table.journal + (entry,)
    )


def replay_journal(base: StageTable, journal: tuple[dict, ...]) -> StageTable:
    """Rebuild a table by replaying journal edits from version 0."""
    table = base
    for entry in journal:
        table = apply_table_edit(table, entry["edit"])
    return table


# --- export -----------------------------------------------------------------------


def _markdown_cell(value: Any) -> str:
    if isinstance(value, list):
        text = ", ".join(str(v) for v in value)
    else:
        text = str(value)
    return text.replace("|", "\\|").replace("\n", " ")


def _table_markdown(table: StageTable) -> str:
    headers = [header for _, header in table.columns]
    keys = table.column_keys()
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    for row in table.rows:
        lines.append("| " + " | ".join(_markdown_cell(row[key]) for key in keys) + " |")
    return "\n".join(lines) + "\n"


def _payload_text(payload: ResearchPayload) -> str:
    if payload.kind == "intent":
        return str(payload.body["text"])
    return canonical.dumps(payload.body)


def export(obj: ResearchPayload | StageTable, fmt: str) -> bytes:
    """Deterministic serialization of a payload or table.

    Markdown is for human display only and is never re-ingested as LaTeX.
    """
    if fmt == "json":
        data = obj.to_json()
        return canonical.dump_bytes(data)
    if fmt == "text":
        if isinstance(obj, StageTable):
            return _table_markdown(obj).encode("utf-8")
        return _payload_text(obj).encode("utf-8")
    if fmt == "markdown_table":
        if isinstance(obj, StageTable):
            return _table_markdown(obj).encode("utf-8")
        rows = tuple(
            {"field": key, "value": obj.body[key]} for key in sorted(obj.body)
        )
        table = StageTable(
            columns=(("field", "Field"), ("value", "Value")),
            rows=rows,
            provenance=obj.kind,
        )
        return _table_markdown(table).encode("utf-8")
    raise SchemaError("format", f"unknown export format {fmt!r}")
