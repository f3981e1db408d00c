"""Tool-protocol client and registry bridging workflow stages to research tools.

In-process tools call local handlers; remote tools exchange line-delimited
JSON envelopes ({"id", "method", "params"} / {"id", "result"|"error"}) over
stdio or TCP with integer id correlation. The default registry ships a paper
searcher, a diagram drawer, and a reserved code-search slot.
"""

from __future__ import annotations

import json
import re
import socket
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

from . import prompts
from .errors import (
    SchemaError,
    SchemaMismatch,
    SearchUnavailable,
    TransportError,
    UnknownTool,
)
from .gateway import ChatRequest, Gateway
from .types import CitationCandidate


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    input_schema: dict[str, Any] = field(default_factory=dict)
    transport: str = "in_process"

    def __post_init__(self) -> None:
        if self.transport not in ("in_process", "remote"):
            raise SchemaError("transport", f"unknown transport {self.transport!r}")


@dataclass(frozen=True)
class ToolResult:
    ok: bool
    value: Any = None
    diagnostics: str = ""

    def __post_init__(self) -> None:
        if not self.ok and not self.diagnostics.strip():
            raise SchemaError("diagnostics", "failed results must carry diagnostics")


_TYPE_CHECKS: dict[str, type | tuple[type, ...]] = {
    "string": str,
    "integer": int,
    "number": (int, float),
    "boolean": bool,
    "array": list,
    "object": dict,
}


def _check_schema(args: Any, schema: Mapping[str, Any]) -> None:
    """Minimal JSON-schema check: object shape, required keys, property types."""
    if not schema:
        return
    if schema.get("type") == "object":
        if not isinstance(args, Mapping):
            raise SchemaMismatch("arguments must be a JSON object")
        for key in schema.get("required", []):
            if key not in args:
                raise SchemaMismatch(f"missing required argument {key!r}")
        for key, spec in schema.get("properties", {}).items():
            if key in args and "type" in spec:
                expected = _TYPE_CHECKS.get(spec["type"])
                if expected is not None and not isinstance(args[key], expected):
                    raise SchemaMismatch(f"argument {key!r} must be {spec['type']}")
                if spec["type"] in ("integer", "number") and isinstance(args[key], bool):
                    raise SchemaMismatch(f"argument {key!r} must be {spec['type']}")


# --- remote transport -----------------------------------------------------------


class LineTransport(Protocol):
    def send_line(self, line: str) -> None: ...
    def recv_line(self) -> str: ...


class StreamTransport:
    """Line framing over a (reader, writer) file pair (pipes or socket files)."""

    def __init__(self, reader: Any, writer: Any):
        self.reader = reader
        self.writer = writer

    def send_line(self, line: str) -> None:
        self.writer.write(line + "\n")
        self.writer.flush()

    def recv_line(self) -> str:
        line = self.reader.readline()
        if not line:
            raise TransportError("transport closed while awaiting response")
        return line.rstrip("\n")


def tcp_transport(host: str, port: int, timeout: float = 10.0) -> StreamTransport:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
    return StreamTransport(
        reader=sock.makefile("r", encoding="utf-8"),
        writer=sock.makefile("w", encoding="utf-8"),
    )


class RemoteToolClient:
    """Request/response envelopes with integer id correlation, serialized."""

    def __init__(self, transport: LineTransport):
        self.transport = transport
        self._next_id = 1
        self._lock = threading.Lock()

    def call(self, method: str, params: Mapping[str, Any]) -> ToolResult:
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            envelope = {"id": request_id, "method": method, "params": dict(params)}
            try:
                self.transport.send_line(json.dumps(envelope, sort_keys=True))
                raw = self.transport.recv_line()
            except TransportError:
                raise
            except Exception as exc:
                raise TransportError(f"transport failure: {exc}") from exc
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TransportError(f"malformed response line: {exc}") from exc
        if reply.get("id") != request_id:
            raise TransportError(
                f"response id {reply.get('id')!r} does not match request id {request_id}"
            )
        if "error" in reply:
            message = str(reply["error"].get("message", "remote error"))
            return ToolResult(ok=False, diagnostics=message)
        return ToolResult(ok=True, value=reply.get("result"))


# --- registry ---------------------------------------------------------------------


class ToolRegistry:
    """Read-mostly, thread-safe registry of in-process and remote tools."""

    def __init__(self) -> None:
        self._tools: dict[str, tuple[ToolDescriptor, Any]] = {}
        self._lock = threading.Lock()

    def register(
        self,
        descriptor: ToolDescriptor,
        handler: Callable[[Mapping[str, Any]], ToolResult] | RemoteToolClient,
    ) -> None:
        with self._lock:
            if descriptor.name in self._tools:
                raise SchemaError("name", f"tool {descriptor.name!r} already registered")
            self._tools[descriptor.name] = (descriptor, handler)

    def list_tools(self) -> list[ToolDescriptor]:
        with self._lock:
            return [self._tools[name][0] for name in sorted(self._tools)]

    def invoke_tool(self, name: str, args: Mapping[str, Any]) -> ToolResult:
        with self._lock:
            if name not in self._tools:
                raise UnknownTool(f"tool {name!r} is not registered")
            descriptor, handler = self._tools[name]
        _check_schema(args, descriptor.input_schema)
        if descriptor.transport == "remote":
            return handler.call(name, args)
        try:
            return handler(args)
        except (UnknownTool, SchemaMismatch, TransportError):
            raise
        except Exception as exc:
            return ToolResult(ok=False, diagnostics=f"tool {name} failed: {exc}")


# --- paper search -------------------------------------------------------------------


class FixtureCorpus:
    """Hermetic search backend over a JSON array of paper records."""

    def __init__(self, source: list[dict] | str | Path):
        if isinstance(source, (str, Path)):
            source = json.loads(Path(source).read_text(encoding="utf-8"))
        if not isinstance(source, list):
            raise SchemaError("corpus", "expected a JSON array of records")
        self.records = source

    def search(self, query: str, limit: int) -> list[dict]:
        terms = [t.strip().lower() for t in query.split(" AND ") if t.strip()]
        hits = []
        for record in self.records:
            haystack = (
                str(record.get("title", "")) + " " + str(record.get("abstract", ""))
            ).lower()
            if all(term in haystack for term in terms):
                hits.append(record)
            if len(hits) >= limit:
                break
        return hits


class LivePaperSearch:
    """Scholarly-paper HTTP search with an optional bearer token."""

    def __init__(self, base_url: str, api_key: str = "", timeout: float = 20.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout

    def search(self, query: str, limit: int) -> list[dict]:
        import httpx

        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            response = httpx.get(
                f"{self.base_url}/paper/search",
                params={
                    "query": query,
                    "limit": limit,
                    "fields": "title,authors,venue,year,abstract",
                },
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            data = response.json().get("data", [])
        except Exception as exc:
            raise SearchUnavailable(f"paper search failed: {exc}") from exc
        return [
            {
                "title": item.get("title", ""),
                "authors": ", ".join(a.get("name", "") for a in item.get("authors", [])),
                "venue": item.get("venue", ""),
                "year": str(item.get("year", "")),
                "abstract": item.get("abstract") or "",
            }
            for item in data
        ]


_WORD_RE = re.compile(r"[A-Za-z0-9]+")


class CiteKeyMaker:
    """first-author-surname + year + first-title-word, suffix-disambiguated."""

    def __init__(self) -> None:
        self.seen: set[str] = set()

    @staticmethod
    def _surname(authors: Any) -> str:
        if isinstance(authors, list):
            first = str(authors[0]) if authors else ""
        else:
            first = str(authors).split(" and ")[0].split(";")[0]
        if "," in first:
            surname = first.split(",")[0]
        else:
            words = _WORD_RE.findall(first)
            surname = words[-1] if words else "anon"
        return "".join(_WORD_RE.findall(surname)).lower() or "anon"

    @staticmethod
    def _suffixes():
        letters = "bcdefghijklmnopqrstuvwxyz"
        yield ""
        for first in letters:
            yield first
        for first in letters:
            for second in letters:
                yield first + second

    def make(self, record: Mapping[str, Any]) -> str:
        surname = self._surname(record.get("authors", ""))
        year = "".join(_WORD_RE.findall(str(record.get("year", "")))) or "nd"
        title_words = _WORD_RE.findall(str(record.get("title", "")))
        word = title_words[0].lower() if title_words else "untitled"
        base = f"{surname}{year}{word}"
        for suffix in self._suffixes():
            key = base + suffix
            if key not in self.seen:
                self.seen.add(key)
                return key
        raise SchemaError("cite_key", f"suffix space exhausted for {base}")


def _bibtex_entry(key: str, record: Mapping[str, Any]) -> str:
    title = str(record.get("title", "")).replace("{", "").replace("}", "")
    authors = record.get("authors", "")
    if isinstance(authors, list):
        authors = " and ".join(str(a) for a in authors)
    return (
        f"@article{{{key},\n"
        f"  title = {{{title}}},\n"
        f"  author = {{{authors}}},\n"
        f"  journal = {{{record.get('venue', '')}}},\n"
        f"  year = {{{record.get('year', '')}}}\n"
        f"}}\n"
    )


def search_papers(
    query: str,
    limit: int,
    backend: Any,
    keymaker: CiteKeyMaker | None = None,
) -> list[CitationCandidate]:
    """Search for papers and mint unique cite keys for each hit.

    Raises SearchUnavailable when the backend cannot serve; callers degrade
    gracefully (novelty check continues, citation pass skips).
    """
    if limit < 1:
        raise SchemaError("limit", "must be >= 1")
    if backend is None:
        raise SearchUnavailable("no paper search backend configured")
    keymaker = keymaker or CiteKeyMaker()
    records = backend.search(query, limit)
    candidates = []
    for record in records[:limit]:
        key = keymaker.make(record)
        authors = record.get("authors", "")
        if isinstance(authors, list):
            authors = ", ".join(str(a) for a in authors)
        candidates.append(
            CitationCandidate(
                cite_key=key,
                title=str(record.get("title", "")),
                authors=str(authors),
                venue=str(record.get("venue", "")),
                year=str(record.get("year", "")),
                abstract=str(record.get("abstract", "")),
                bibtex=_bibtex_entry(key, record),
            )
        )
    return candidates


def related_works_string(candidates: list[CitationCandidate]) -> str:
    """Human/model-readable digest of search hits for prompt context."""
    if not candidates:
        return "(no related works found)"
    lines = []
    for c in candidates:
        lines.append(f"- {c.title} ({c.authors}, {c.venue}, {c.year}): {c.abstract}")
    return "\n".join(lines)


# --- diagram drawing ------------------------------------------------------------------


_ID_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")
_XML_SPAN_RE = re.compile(r"<mxfile\b.*?</mxfile>", re.DOTALL)


def validate_diagram_xml(text: str) -> str:
    """Enforce diagram id rules; returns the extracted mxfile XML.

    Rules: root element is mxfile; every mxCell has a non-empty unique id;
    the two root cells have ids "0" and "1"; all other ids are alphanumeric
    and start with a letter.
    """
    span = _XML_SPAN_RE.search(text)
    if not span:
        raise SchemaError("diagram", "no mxfile element found")
    xml_text = span.group(0)
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise SchemaError("diagram", f"XML does not parse: {exc}")
    if root.tag != "mxfile":
        raise SchemaError("diagram", "root element must be mxfile")
    cells = root.iter("mxCell")
    seen: set[str] = set()
    for cell in cells:
        cell_id = cell.get("id")
        if not cell_id:
            raise SchemaError("diagram", "mxCell with empty or missing id")
        if cell_id in seen:
            raise SchemaError("diagram", f"duplicate mxCell id {cell_id!r}")
        seen.add(cell_id)
        if cell_id not in ("0", "1") and not _ID_RE.match(cell_id):
            raise SchemaError(
                "diagram", f"id {cell_id!r} must be alphanumeric and start with a letter"
            )
    if "0" not in seen or "1" not in seen:
        raise SchemaError("diagram", 'root cells with ids "0" and "1" are required')
    return xml_text


def draw_diagram(
    description: str,
    gateway: Gateway,
    model_id: str,
    max_attempts: int = 3,
    stage: str = "writer",
) -> str:
    """Generate validated diagram XML from a natural-language description."""
    if not description.strip():
        raise SchemaError("description", "must be non-empty")
    req = ChatRequest.user(
        system=prompts.load("drawer_system"),
        text=description,
        model_id=model_id,
        temperature=0.0,
    )
    return gateway.with_retries(req, validate_diagram_xml, max_attempts=max_attempts, stage=stage)


# --- default registry -------------------------------------------------------------------


def default_registry(
    search_backend: Any = None,
    gateway: Gateway | None = None,
    model_id: str = "scripted",
) -> ToolRegistry:
    """Registry with the stock tools wired to the provided backends."""
    registry = ToolRegistry()
    keymaker = CiteKeyMaker()

    def paper_search_handler(args: Mapping[str, Any]) -> ToolResult:
        try:
            hits = search_papers(
                str(args["query"]), int(args.get("limit", 5)), search_backend, keymaker
            )
        except SearchUnavailable as exc:
            return ToolResult(ok=False, diagnostics=str(exc))
        return ToolResult(ok=True, value=[c.to_json() for c in hits])

    registry.register(
        ToolDescriptor(
            name="paper_search",
            description="Retrieve papers matching a query from the configured corpus.",
            input_schema={
                "type": "object",
                "properties": {"query": {"type": "string"}, "limit": {"type": "integer"}},
                "required": ["query"],
            },
        ),
        paper_search_handler,
    )

    def draw_handler(args: Mapping[str, Any]) -> ToolResult:
        if gateway is None:
            return ToolResult(ok=False, diagnostics="no gateway configured for drawing")
        xml_text = draw_diagram(str(args["description"]), gateway, model_id)
        return ToolResult(ok=True, value=xml_text)

    registry.register(
        ToolDescriptor(
            name="draw_diagram",
            description="Generate schematic diagram XML from a description.",
            input_schema={
                "type": "object",
                "properties": {"description": {"type": "string"}},
                "required": ["description"],
            },
        ),
        draw_handler,
    )

    registry.register(
        ToolDescriptor(
            name="code_search",
            description="Reserved: code search over repositories (no reference implementation).",
            input_schema={
                "type": "object",
                "properties": {"query": {"type": "string"}},
                "required": ["query"],
            },
        ),
        lambda args: ToolResult(
            ok=False, diagnostics="code_search has no reference implementation"
        ),
    )
    return registry
