"""Exception hierarchy shared across the pipeline.

Every error raised by labpilot derives from PipelineError so callers can
catch the whole family at the engine boundary.
"""

from __future__ import annotations

from typing import Any


class PipelineError(Exception):
    """Base class for all labpilot errors."""


# --- schema / validation ---------------------------------------------------


class SchemaError(PipelineError):
    """A required field is missing or malformed; names the first offender."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        self.detail = detail
        super().__init__(field if not detail else f"{field}: {detail}")


class DecisionError(PipelineError):
    """Review decision is not one of the allowed verdicts."""


# --- gateway ----------------------------------------------------------------


class BackendUnavailable(PipelineError):
    """No backend can serve the request (or scripted queue is exhausted)."""


class NoJsonFound(PipelineError):
    """Completion text contains no parseable JSON payload."""


class ValidationExhausted(PipelineError):
    """All retry attempts failed validation; carries the last error."""

    def __init__(self, last_error: Exception, attempts: int):
        self.last_error = last_error
        self.attempts = attempts
        super().__init__(f"validation failed after {attempts} attempts: {last_error}")


class BudgetExceeded(PipelineError):
    """Pre-charge hook refused the call: the ledger is already terminated."""


# --- thinker ----------------------------------------------------------------


class SafetyBlocked(PipelineError):
    """Stage halted by the safety checker (HIGH or BLOCK risk)."""

    def __init__(self, stage: str, report: Any):
        self.stage = stage
        self.report = report
        super().__init__(f"{stage} blocked: {getattr(report, 'reason', '')}")


class TitleMismatch(PipelineError):
    """Comparative evaluation returned a title that differs from its input."""


class SearchUnavailable(PipelineError):
    """Paper search backend cannot be reached; callers degrade gracefully."""


# --- coder ------------------------------------------------------------------


class AwaitingHuman(PipelineError):
    """Coding paused for human input; carries a session status snapshot."""

    def __init__(self, snapshot: Any):
        self.snapshot = snapshot
        super().__init__("coding session awaiting human input")


class ExecutionTimeout(PipelineError):
    """An experiment run exceeded its wall-clock limit."""


class NoSuccessfulRuns(PipelineError):
    """No run directory yielded a parseable final_info.json."""


# --- writer -----------------------------------------------------------------


class CompileError(PipelineError):
    """Document compilation failed; message carries the log tail."""


class ToolchainMissing(PipelineError):
    """No LaTeX toolchain on PATH; writer degrades to a source bundle."""


class InventedKey(PipelineError):
    """Citation embedding produced a key absent from the candidate set."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"invented citation key: {key}")


class MarkdownTable(PipelineError):
    """Markdown-style table detected in text that must be pure LaTeX."""


# --- formatter ----------------------------------------------------------------


class ParseError(PipelineError):
    """Input bytes could not be parsed in the declared format."""

    def __init__(self, fmt: str, cause: str):
        self.format = fmt
        self.cause = cause
        super().__init__(f"cannot parse {fmt} input: {cause}")


class AddressError(PipelineError):
    """Table edit addressed a row or column that does not exist."""


class SpecMissing(PipelineError):
    """No experiment spec is available for the requested rendering."""


# --- toolhub ------------------------------------------------------------------


class UnknownTool(PipelineError):
    """Tool name is not present in the registry."""


class SchemaMismatch(PipelineError):
    """Tool arguments do not validate against the tool's input schema."""


class TransportError(PipelineError):
    """Remote tool transport failed or returned a mismatched envelope."""


# --- checker ------------------------------------------------------------------


class BudgetTooSmall(PipelineError):
    """Even zero-reflection base calls exceed the total budget."""


class ChargeAfterTermination(PipelineError):
    """A charge was attempted on a terminated ledger."""


class TerminationSignal(PipelineError):
    """Cumulative cost crossed the budget; the engine must stop the run."""


# --- engine -------------------------------------------------------------------


class IllegalTransition(PipelineError):
    """The requested action is not legal in the session's current phase."""
