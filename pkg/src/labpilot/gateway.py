"""Provider-agnostic chat-completion boundary.

Two backends: a deterministic scripted backend replaying recorded completions
(the hermetic test default) and a thin HTTP backend configured from
environment variables. All completions are metered; a pre-charge hook lets the
budget checker veto calls on a terminated ledger.
"""

from __future__ import annotations

import json
import math
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, TypeVar

from .errors import BackendUnavailable, NoJsonFound, SchemaError, ValidationExhausted

T = TypeVar("T")

ROLES = ("user", "assistant")


@dataclass(frozen=True)
class ChatRequest:
    """One chat completion request."""

    system: str
    messages: tuple[tuple[str, str], ...]
    model_id: str
    temperature: float = 0.7
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if not self.messages:
            raise SchemaError("messages", "must be non-empty")
        if self.temperature < 0:
            raise SchemaError("temperature", "must be >= 0")
        previous = None
        for i, (role, _text) in enumerate(self.messages):
            if role not in ROLES:
                raise SchemaError(f"messages[{i}].role", f"unknown role {role!r}")
            if role == previous:
                raise SchemaError(f"messages[{i}].role", "roles must alternate")
            previous = role
        if self.messages[0][0] != "user":
            raise SchemaError("messages[0].role", "conversation must start with user content")

    @classmethod
    def user(cls, system: str, text: str, model_id: str, **kwargs: Any) -> "ChatRequest":
        return cls(system=system, messages=(("user", text),), model_id=model_id, **kwargs)

    def extended(self, reply: str, followup: str) -> "ChatRequest":
        """Append the assistant reply and a follow-up user turn (for retries)."""
        return ChatRequest(
            system=self.system,
            messages=self.messages + (("assistant", reply), ("user", followup)),
            model_id=self.model_id,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
        )


@dataclass(frozen=True)
class Usage:
    """Exact token usage of one completion."""

    prompt_tokens: int
    completion_tokens: int
    model_id: str

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise SchemaError("usage", "token counts must be >= 0")


def estimate_tokens(text: str) -> int:
    """Character-length/4 heuristic, shared by scripted metering and budget tests."""
    return math.ceil(len(text) / 4)


class Backend(Protocol):
    def complete(self, req: ChatRequest) -> tuple[str, Usage]: ...


class ScriptedBackend:
    """Replays a recorded list of completions in order.

    Accepts an in-memory list or a path to a JSON array of response strings.
    Token usage is synthetic (length/4) so budget arithmetic stays stable.
    """

    def __init__(self, responses: list[str] | str | Path):
        if isinstance(responses, (str, Path)):
            responses = json.loads(Path(responses).read_text(encoding="utf-8"))
        if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
            raise SchemaError("script", "expected a JSON array of response strings")
        self._responses = list(responses)
        self._cursor = 0
        self._lock = threading.Lock()

    @property
    def cursor(self) -> int:
        return self._cursor

    def seek(self, cursor: int) -> None:
        if not 0 <= cursor <= len(self._responses):
            raise SchemaError("cursor", "out of script range")
        self._cursor = cursor

    def remaining(self) -> int:
        return len(self._responses) - self._cursor

    def complete(self, req: ChatRequest) -> tuple[str, Usage]:
        with self._lock:
            if self._cursor >= len(self._responses):
                raise BackendUnavailable(
                    f"scripted queue exhausted after {len(self._responses)} completions"
                )
            text = self._responses[self._cursor]
            self._cursor += 1
        prompt_chars = len(req.system) + sum(len(t) for _, t in req.messages)
        usage = Usage(
            prompt_tokens=estimate_tokens("x" * prompt_chars),
            completion_tokens=estimate_tokens(text),
            model_id=req.model_id,
        )
        return text, usage


class HTTPBackend:
    """OpenAI-compatible chat endpoint configured from the environment.

    LABPILOT_API_KEY / LABPILOT_BASE_URL (and optionally LABPILOT_MODEL)
    select the provider; no provider is mandated.
    """

    def __init__(self, base_url: str | None = None, api_key: str | None = None):
        self.base_url = (base_url or os.environ.get("LABPILOT_BASE_URL", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("LABPILOT_API_KEY", "")
        if not self.base_url:
            raise BackendUnavailable("no base URL configured for HTTP backend")

    def complete(self, req: ChatRequest) -> tuple[str, Usage]:
        import httpx

        payload = {
            "model": req.model_id,
            "messages": [{"role": "system", "content": req.system}]
            + [{"role": role, "content": text} for role, text in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions", json=payload, headers=headers, timeout=120
            )
            response.raise_for_status()
            body = response.json()
        except Exception as exc:
            raise BackendUnavailable(f"HTTP backend failed: {exc}") from exc
        text = body["choices"][0]["message"]["content"]
        usage = body.get("usage", {})
        return text, Usage(
            prompt_tokens=int(usage.get("prompt_tokens", estimate_tokens(str(payload)))),
            completion_tokens=int(usage.get("completion_tokens", estimate_tokens(text))),
            model_id=req.model_id,
        )


@dataclass
class Gateway:
    """Routes requests to backends, meters usage, and runs budget hooks.

    ``precheck`` runs before every call and may raise BudgetExceeded;
    ``on_usage`` runs after with the exact Usage (the checker charges there).
    The stage tag of every completed call is recorded for auditability.
    """

    backends: dict[str, Backend] = field(default_factory=dict)
    default_backend: Backend | None = None
    precheck: Callable[[str], None] | None = None
    on_usage: Callable[[str, Usage], None] | None = None

    def __post_init__(self) -> None:
        self.call_log: list[str] = []
        self._lock = threading.Lock()

    def register(self, model_id: str, backend: Backend) -> None:
        self.backends[model_id] = backend

    def _backend_for(self, model_id: str) -> Backend:
        backend = self.backends.get(model_id, self.default_backend)
        if backend is None:
            raise BackendUnavailable(f"no backend registered for model {model_id!r}")
        return backend

    def complete(self, req: ChatRequest, stage: str = "unstaged") -> tuple[str, Usage]:
        backend = self._backend_for(req.model_id)
        if self.precheck is not None:
            self.precheck(stage)
        text, usage = backend.complete(req)
        with self._lock:
            self.call_log.append(stage)
        if self.on_usage is not None:
            self.on_usage(stage, usage)
        return text, usage

    def with_retries(
        self,
        req: ChatRequest,
        validator: Callable[[str], T],
        max_attempts: int = 3,
        stage: str = "unstaged",
        fatal: tuple[type[BaseException], ...] = (),
    ) -> T:
        """Re-prompt with the validator's error appended until it passes.

        The validator receives the raw completion text and either returns the
        validated value or raises; its error message is fed back to the model.
        Errors listed in ``fatal`` propagate immediately instead of retrying.
        """
        if max_attempts < 1:
            raise SchemaError("max_attempts", "must be >= 1")
        last_error: Exception | None = None
        current = req
        for _attempt in range(max_attempts):
            text, _usage = self.complete(current, stage=stage)
            try:
                return validator(text)
            except Exception as exc:
                if isinstance(exc, fatal):
                    raise
                last_error = exc
                current = current.extended(
                    text,
                    f"Your previous reply was invalid: {exc}. "
                    "Please correct it and respond again in the required format.",
                )
        assert last_error is not None
        raise ValidationExhausted(last_error, max_attempts)


_FENCE_RE = re.compile(r"```(?:json)?[ \t]*\r?\n(.*?)```", re.DOTALL)


def _balanced_spans(text: str) -> list[str]:
    """Top-level balanced {...} / [...] substrings, largest first."""
    spans: list[str] = []
    openers = {"{": "}", "[": "]"}
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in openers:
            depth = 0
            for j in range(i, len(text)):
                if text[j] in openers:
                    depth += 1
                elif text[j] in ("}", "]"):
                    depth -= 1
                    if depth == 0:
                        spans.append(text[i : j + 1])
                        i = j
                        break
            else:
                pass
        i += 1
    spans.sort(key=len, reverse=True)
    return spans


def extract_json_block(text: str) -> Any:
    """Parse the LAST well-formed fenced json block in a completion.

    Refinement prompts instruct models to repeat JSON after their thoughts,
    so the final block is authoritative. Falls back to the largest balanced
    brace/bracket substring that parses.
    """
    for block in reversed(_FENCE_RE.findall(text)):
        try:
            return json.loads(block)
        except json.JSONDecodeError:
            continue
    for span in _balanced_spans(text):
        try:
            return json.loads(span)
        except json.JSONDecodeError:
            continue
    raise NoJsonFound("no parseable JSON block in completion")
