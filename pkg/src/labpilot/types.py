"""Shared domain types and their validation.

Every pipeline stage speaks the schemas defined here. Validation accepts two
input shapes for LLM-facing types:

* the canonical snake_case shape produced by ``to_json`` (used for session
  persistence and the service wire format), and
* the capitalized "wire" shape that prompt templates instruct models to emit
  (``Title``, ``ImpactScore``, ``Ethical Concerns``, ...).

Unknown keys are preserved in an ``extra`` map rather than rejected: model
outputs drift, so strictness applies only to required fields.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .errors import DecisionError, SchemaError

logger = logging.getLogger(__name__)

NARRATIVE_KEYS = ("problem", "importance", "difficulty", "gap", "approach")
SCORE_KEYS = ("impact", "feasibility", "novelty")
IDEA_STATUSES = ("draft", "refined", "selected", "blocked")
RATING_KEYS = (
    "originality",
    "quality",
    "clarity",
    "significance",
    "soundness",
    "presentation",
    "contribution",
)
DECISIONS = ("Accept", "Reject")
ATTACHMENT_FORMATS = ("pdf", "json", "text")

# Wire-format aliases: prompt-template key -> canonical location.
_IDEA_WIRE_NARRATIVE = {
    "Problem": "problem",
    "Importance": "importance",
    "Difficulty": "difficulty",
    "Gap": "gap",
    "Approach": "approach",
}
_IDEA_WIRE_SCORES = {
    "ImpactScore": "impact",
    "FeasibilityScore": "feasibility",
    "NoveltyScore": "novelty",
}
_IDEA_WIRE_REASONS = {
    "ImpactReason": "impact",
    "FeasibilityReason": "feasibility",
    "NoveltyReason": "novelty",
}
_REVIEW_WIRE_RATINGS = {
    "Originality": "originality",
    "Quality": "quality",
    "Clarity": "clarity",
    "Significance": "significance",
    "Soundness": "soundness",
    "Presentation": "presentation",
    "Contribution": "contribution",
}
_REVIEW_WIRE_LISTS = {
    "Strengths": "strengths",
    "Weaknesses": "weaknesses",
    "Questions": "questions",
    "Limitations": "limitations",
}

# Pipeline-internal annotations carried in Idea.extra; they persist in the
# canonical form but are never projected into model-facing wire JSON.
INTERNAL_EXTRA_KEYS = ("novelty", "experiment_spec", "parent_index")


def _require_mapping(raw: Any) -> dict:
    if not isinstance(raw, Mapping):
        raise SchemaError("root", "expected a JSON object")
    return dict(raw)


def _req_str(value: Any, path: str, allow_empty: bool = False) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, "expected a string")
    if not allow_empty and not value.strip():
        raise SchemaError(path, "must be non-empty")
    return value


def _str_list(value: Any, path: str) -> list[str]:
    if isinstance(value, str):
        return [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaError(path, "expected a list of strings")
    return list(value)


def _int_in_range(value: Any, lo: int, hi: int, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected an integer in [{lo},{hi}]")
    if isinstance(value, float):
        if not value.is_integer():
            logger.warning("%s: fractional score %s floored", path, value)
        value = int(value)
    if not lo <= value <= hi:
        raise SchemaError(path, f"out of [{lo},{hi}]")
    return int(value)


# --- research intent ---------------------------------------------------------


@dataclass(frozen=True)
class Attachment:
    """A document payload attached to a research intent."""

    format: str
    data: bytes

    def __post_init__(self) -> None:
        if self.format not in ATTACHMENT_FORMATS:
            raise SchemaError("attachments.format", f"unknown format {self.format!r}")
        if self.format == "pdf" and not self.data.startswith(b"%PDF"):
            raise SchemaError("attachments", "pdf tag but content is not a PDF")
        if self.format == "json":
            try:
                json.loads(self.data.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise SchemaError("attachments", f"json tag but content unparseable: {exc}")
        if self.format == "text":
            try:
                self.data.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise SchemaError("attachments", f"text tag but content undecodable: {exc}")

    def to_json(self) -> dict:
        return {
            "format": self.format,
            "data": base64.b64encode(self.data).decode("ascii"),
        }

    @classmethod
    def from_json(cls, raw: Any) -> "Attachment":
        obj = _require_mapping(raw)
        fmt = _req_str(obj.get("format"), "attachments.format")
        try:
            data = base64.b64decode(_req_str(obj.get("data"), "attachments.data", True))
        except (binascii.Error, ValueError) as exc:
            raise SchemaError("attachments.data", f"bad base64: {exc}")
        return cls(format=fmt, data=data)


@dataclass(frozen=True)
class ResearchIntent:
    """The user's research goal plus optional attached documents."""

    text: str
    attachments: tuple[Attachment, ...] = ()
    system_prompt_override: str | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise SchemaError("text", "must be non-empty")

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "attachments": [a.to_json() for a in self.attachments],
            "system_prompt_override": self.system_prompt_override,
        }

    @classmethod
    def from_json(cls, raw: Any) -> "ResearchIntent":
        obj = _require_mapping(raw)
        text = _req_str(obj.get("text"), "text")
        attachments = tuple(
            Attachment.from_json(a) for a in obj.get("attachments", []) or []
        )
        override = obj.get("system_prompt_override")
        if override is not None:
            override = _req_str(override, "system_prompt_override", True)
        return cls(text=text, attachments=attachments, system_prompt_override=override)


# --- idea ---------------------------------------------------------------------


@dataclass(frozen=True)
class RelatedWorkRow:
    """One row of the idea-vs-prior-work comparison table."""

    title: str
    venue_year: str
    similarity_note: str
    difference_note: str

    def to_json(self) -> dict:
        return {
            "title": self.title,
            "venue_year": self.venue_year,
            "similarity_note": self.similarity_note,
            "difference_note": self.difference_note,
        }

    @classmethod
    def from_json(cls, raw: Any, path: str = "comparison_rows") -> "RelatedWorkRow":
        obj = _require_mapping(raw)
        title = obj.get("title", obj.get("Title", ""))
        venue_year = obj.get("venue_year", obj.get("VenueYear", obj.get("Venue", "")))
        similarity = obj.get("similarity_note", obj.get("Similarity", ""))
        difference = obj.get("difference_note", obj.get("Difference", ""))
        # A comparison, not a description: the difference note must say something.
        difference = _req_str(difference, f"{path}.difference_note")
        return cls(
            title=_req_str(title, f"{path}.title"),
            venue_year=str(venue_year),
            similarity_note=str(similarity),
            difference_note=difference,
        )


@dataclass(frozen=True)
class Score:
    """One scored dimension with its justification."""

    value: int
    reason: str = ""

    def to_json(self) -> dict:
        return {"value": self.value, "reason": self.reason}


@dataclass(frozen=True)
class Idea:
    """Structured ideation record: narrative, plan, comparisons, tri-axis scores."""

    title: str
    narrative: dict[str, str]
    experiment_plan: str
    comparison_rows: tuple[RelatedWorkRow, ...] = ()
    scores: dict[str, Score] = field(default_factory=dict)
    status: str = "draft"
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key in NARRATIVE_KEYS:
            if key not in self.narrative or not str(self.narrative[key]).strip():
                raise SchemaError(f"narrative.{key}", "must be present and non-empty")
        for key in SCORE_KEYS:
            if key not in self.scores:
                raise SchemaError(f"scores.{key}", "missing")
            if not 0 <= self.scores[key].value <= 100:
                raise SchemaError(f"scores.{key}", "out of [0,100]")
        if self.status not in IDEA_STATUSES:
            raise SchemaError("status", f"unknown status {self.status!r}")

    def mean_score(self) -> float:
        return sum(self.scores[k].value for k in SCORE_KEYS) / len(SCORE_KEYS)

    def with_status(self, status: str) -> "Idea":
        return replace(self, status=status)

    def to_json(self) -> dict:
        return {
            "title": self.title,
            "narrative": dict(self.narrative),
            "experiment_plan": self.experiment_plan,
            "comparison_rows": [r.to_json() for r in self.comparison_rows],
            "scores": {k: self.scores[k].to_json() for k in SCORE_KEYS},
            "status": self.status,
            "extra": dict(self.extra),
        }

    def to_wire(self) -> dict:
        """Project back into the capitalized shape prompt templates talk about."""
        wire: dict[str, Any] = {"Title": self.title}
        for wk, ck in _IDEA_WIRE_NARRATIVE.items():
            wire[wk] = self.narrative[ck]
        wire["Experiment"] = self.experiment_plan
        wire["RelatedWorks"] = [
            {
                "Title": r.title,
                "VenueYear": r.venue_year,
                "Similarity": r.similarity_note,
                "Difference": r.difference_note,
            }
            for r in self.comparison_rows
        ]
        for wk, ck in _IDEA_WIRE_SCORES.items():
            wire[wk] = self.scores[ck].value
        for wk, ck in _IDEA_WIRE_REASONS.items():
            wire[wk] = self.scores[ck].reason
        wire.update(
            {k: v for k, v in self.extra.items() if k not in INTERNAL_EXTRA_KEYS}
        )
        return wire


def validate_idea(raw: Any) -> Idea:
    """Validate a parsed JSON object into an Idea.

    Accepts the canonical shape and the wire shape; unknown keys land in
    ``extra``. Raises SchemaError naming the first missing or malformed field.
    """
    obj = _require_mapping(raw)
    consumed: set[str] = set()

    def take(*names: str) -> Any:
        for name in names:
            if name in obj:
                consumed.add(name)
                return obj[name]
        return None

    title = _req_str(take("title", "Title"), "title")

    narrative: dict[str, str] = {}
    canon_narrative = take("narrative")
    if canon_narrative is not None:
        sub = _require_mapping(canon_narrative)
        for key in NARRATIVE_KEYS:
            narrative[key] = _req_str(sub.get(key), f"narrative.{key}")
    else:
        for wk, ck in _IDEA_WIRE_NARRATIVE.items():
            value = take(wk)
            if value is None:
                raise SchemaError(f"narrative.{ck}", "missing")
            narrative[ck] = _req_str(value, f"narrative.{ck}")

    plan = take("experiment_plan", "Experiment")
    if plan is None:
        raise SchemaError("experiment_plan", "missing")
    plan = _req_str(plan, "experiment_plan")

    rows_raw = take("comparison_rows", "RelatedWorks")
    rows: list[RelatedWorkRow] = []
    if rows_raw is not None:
        if not isinstance(rows_raw, list):
            raise SchemaError("comparison_rows", "expected a list")
        rows = [RelatedWorkRow.from_json(r) for r in rows_raw]

    scores: dict[str, Score] = {}
    canon_scores = take("scores")
    if canon_scores is not None:
        sub = _require_mapping(canon_scores)
        for key in SCORE_KEYS:
            if key not in sub:
                raise SchemaError(f"scores.{key}", "missing")
            entry = _require_mapping(sub[key])
            value = _int_in_range(entry.get("value"), 0, 100, f"scores.{key}")
            scores[key] = Score(value=value, reason=str(entry.get("reason", "")))
    else:
        for wk, ck in _IDEA_WIRE_SCORES.items():
            value = take(wk)
            if value is None:
                raise SchemaError(f"scores.{ck}", "missing")
            scores[ck] = Score(value=_int_in_range(value, 0, 100, f"scores.{ck}"))
        for wk, ck in _IDEA_WIRE_REASONS.items():
            reason = take(wk)
            if reason is not None:
                scores[ck] = Score(value=scores[ck].value, reason=str(reason))

    status = take("status") or "draft"
    if status not in IDEA_STATUSES:
        raise SchemaError("status", f"unknown status {status!r}")

    extra_canon = take("extra")
    extra: dict[str, Any] = dict(extra_canon) if isinstance(extra_canon, Mapping) else {}
    for key, value in obj.items():
        if key not in consumed:
            extra[key] = value

    return Idea(
        title=title,
        narrative=narrative,
        experiment_plan=plan,
        comparison_rows=tuple(rows),
        scores=scores,
        status=status,
        extra=extra,
    )


# --- experiment ----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """Essential names extracted from an experiment plan."""

    models: tuple[str, ...]
    datasets: tuple[str, ...]
    metrics: tuple[str, ...]
    max_runs: int = 3

    def __post_init__(self) -> None:
        for name, values in (
            ("models", self.models),
            ("datasets", self.datasets),
            ("metrics", self.metrics),
        ):
            if not values:
                raise SchemaError(name, "must be non-empty")
        if self.max_runs < 1:
            raise SchemaError("max_runs", "must be >= 1")

    def to_json(self) -> dict:
        return {
            "models": list(self.models),
            "datasets": list(self.datasets),
            "metrics": list(self.metrics),
            "max_runs": self.max_runs,
        }

    @classmethod
    def from_json(cls, raw: Any, max_runs: int = 3) -> "ExperimentSpec":
        obj = _require_mapping(raw)
        models = _str_list(obj.get("models", obj.get("model")), "models")
        datasets = _str_list(obj.get("datasets", obj.get("dataset")), "datasets")
        metrics = _str_list(obj.get("metrics", obj.get("metric")), "metrics")
        return cls(
            models=tuple(dict.fromkeys(models)),
            datasets=tuple(dict.fromkeys(datasets)),
            metrics=tuple(dict.fromkeys(metrics)),
            max_runs=int(obj.get("max_runs", max_runs)),
        )


@dataclass(frozen=True)
class RunResults:
    """Parsed outcome of one experiment run directory."""

    run_index: int
    out_dir: str
    final_info: dict[str, Any]
    notes: str = ""

    def __post_init__(self) -> None:
        if self.run_index < 1:
            raise SchemaError("run_index", "must be >= 1")

    def to_json(self) -> dict:
        return {
            "run_index": self.run_index,
            "out_dir": self.out_dir,
            "final_info": dict(self.final_info),
            "notes": self.notes,
        }


# --- paper ----------------------------------------------------------------------


@dataclass(frozen=True)
class CitationCandidate:
    """One retrieved reference with a generated cite key and BibTeX entry."""

    cite_key: str
    title: str
    authors: str
    venue: str
    year: str
    abstract: str = ""
    bibtex: str = ""

    def context_line(self) -> str:
        return f"[CITE_KEY: {self.cite_key}] {self.title} ({self.authors}, {self.venue}, {self.year})"

    def to_json(self) -> dict:
        return {
            "cite_key": self.cite_key,
            "title": self.title,
            "authors": self.authors,
            "venue": self.venue,
            "year": self.year,
            "abstract": self.abstract,
            "bibtex": self.bibtex,
        }

    @classmethod
    def from_json(cls, raw: Any) -> "CitationCandidate":
        obj = _require_mapping(raw)
        return cls(
            cite_key=_req_str(obj.get("cite_key"), "cite_key"),
            title=str(obj.get("title", "")),
            authors=str(obj.get("authors", "")),
            venue=str(obj.get("venue", "")),
            year=str(obj.get("year", "")),
            abstract=str(obj.get("abstract", "")),
            bibtex=str(obj.get("bibtex", "")),
        )


@dataclass
class PaperProject:
    """Per-section paper sources plus the bibliography and compiled artifact."""

    sections: dict[str, str] = field(default_factory=dict)
    bibliography: dict[str, CitationCandidate] = field(default_factory=dict)
    compiled_pdf: bytes | None = None
    watermarked: bool = False

    def to_json(self) -> dict:
        return {
            "sections": dict(self.sections),
            "bibliography": {k: c.to_json() for k, c in sorted(self.bibliography.items())},
            "compiled_pdf": (
                base64.b64encode(self.compiled_pdf).decode("ascii")
                if self.compiled_pdf is not None
                else None
            ),
            "watermarked": self.watermarked,
        }

    @classmethod
    def from_json(cls, raw: Any) -> "PaperProject":
        obj = _require_mapping(raw)
        pdf = obj.get("compiled_pdf")
        return cls(
            sections=dict(obj.get("sections", {})),
            bibliography={
                k: CitationCandidate.from_json(v)
                for k, v in obj.get("bibliography", {}).items()
            },
            compiled_pdf=base64.b64decode(pdf) if pdf else None,
            watermarked=bool(obj.get("watermarked", False)),
        )


# --- review ---------------------------------------------------------------------


@dataclass(frozen=True)
class Review:
    """A structured peer review with bounded ratings and a binary decision."""

    summary: str
    strengths: tuple[str, ...]
    weaknesses: tuple[str, ...]
    questions: tuple[str, ...]
    limitations: tuple[str, ...]
    ratings: dict[str, int]
    overall: int
    confidence: int
    ethical_concerns: bool
    decision: str
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key in RATING_KEYS:
            if key not in self.ratings:
                raise SchemaError(f"ratings.{key}", "missing")
            if not 1 <= self.ratings[key] <= 4:
                raise SchemaError(f"ratings.{key}", "out of [1,4]")
        if not 1 <= self.overall <= 10:
            raise SchemaError("overall", "out of [1,10]")
        if not 1 <= self.confidence <= 5:
            raise SchemaError("confidence", "out of [1,5]")
        if self.decision not in DECISIONS:
            raise DecisionError(f"decision must be one of {DECISIONS}, got {self.decision!r}")

    def to_json(self) -> dict:
        return {
            "summary": self.summary,
            "strengths": list(self.strengths),
            "weaknesses": list(self.weaknesses),
            "questions": list(self.questions),
            "limitations": list(self.limitations),
            "ratings": {k: self.ratings[k] for k in RATING_KEYS},
            "overall": self.overall,
            "confidence": self.confidence,
            "ethical_concerns": self.ethical_concerns,
            "decision": self.decision,
            "extra": dict(self.extra),
        }

    def to_wire(self) -> dict:
        wire: dict[str, Any] = {"Summary": self.summary}
        for wk, ck in _REVIEW_WIRE_LISTS.items():
            wire[wk] = list(getattr(self, ck))
        for wk, ck in _REVIEW_WIRE_RATINGS.items():
            wire[wk] = self.ratings[ck]
        wire["Overall"] = self.overall
        wire["Confidence"] = self.confidence
        wire["Ethical Concerns"] = self.ethical_concerns
        wire["Decision"] = self.decision
        wire.update(self.extra)
        return wire


def validate_review(raw: Any) -> Review:
    """Validate a parsed JSON object into a Review with all bounds enforced."""
    obj = _require_mapping(raw)
    consumed: set[str] = set()

    def take(*names: str) -> Any:
        for name in names:
            if name in obj:
                consumed.add(name)
                return obj[name]
        return None

    summary = take("summary", "Summary")
    if summary is None:
        raise SchemaError("summary", "missing")
    summary = _req_str(summary, "summary")

    lists: dict[str, tuple[str, ...]] = {}
    for wk, ck in _REVIEW_WIRE_LISTS.items():
        value = take(ck, wk)
        if value is None:
            raise SchemaError(ck, "missing")
        lists[ck] = tuple(_str_list(value, ck))

    ratings: dict[str, int] = {}
    canon_ratings = take("ratings")
    if canon_ratings is not None:
        sub = _require_mapping(canon_ratings)
        for key in RATING_KEYS:
            if key not in sub:
                raise SchemaError(f"ratings.{key}", "missing")
            ratings[key] = _int_in_range(sub[key], 1, 4, f"ratings.{key}")
    else:
        for wk, ck in _REVIEW_WIRE_RATINGS.items():
            value = take(wk)
            if value is None:
                raise SchemaError(f"ratings.{ck}", "missing")
            ratings[ck] = _int_in_range(value, 1, 4, f"ratings.{ck}")

    overall = take("overall", "Overall")
    if overall is None:
        raise SchemaError("overall", "missing")
    overall = _int_in_range(overall, 1, 10, "overall")

    confidence = take("confidence", "Confidence")
    if confidence is None:
        raise SchemaError("confidence", "missing")
    confidence = _int_in_range(confidence, 1, 5, "confidence")

    concerns = take("ethical_concerns", "Ethical Concerns")
    if concerns is None:
        raise SchemaError("ethical_concerns", "missing")
    if not isinstance(concerns, bool):
        raise SchemaError("ethical_concerns", "expected a boolean")

    decision = take("decision", "Decision")
    if decision is None:
        raise SchemaError("decision", "missing")
    if decision not in DECISIONS:
        raise DecisionError(f"decision must be one of {DECISIONS}, got {decision!r}")

    extra_canon = take("extra")
    extra: dict[str, Any] = dict(extra_canon) if isinstance(extra_canon, Mapping) else {}
    for key, value in obj.items():
        if key not in consumed:
            extra[key] = value

    return Review(
        summary=summary,
        strengths=lists["strengths"],
        weaknesses=lists["weaknesses"],
        questions=lists["questions"],
        limitations=lists["limitations"],
        ratings=ratings,
        overall=overall,
        confidence=confidence,
        ethical_concerns=concerns,
        decision=decision,
        extra=extra,
    )


# --- stage configuration ----------------------------------------------------------


STAGES = ("thinker", "coder", "writer", "reviewer")


@dataclass(frozen=True)
class StageConfig:
    """Per-run knobs: idea count, reflection rounds per stage, stage toggles."""

    num_ideas: int = 3
    num_reflections: dict[str, int] = field(
        default_factory=lambda: {s: 2 for s in STAGES}
    )
    max_reflections: int = 5
    stage_enabled: dict[str, bool] = field(
        default_factory=lambda: {s: True for s in STAGES}
    )
    novelty_rounds: int = 2

    def __post_init__(self) -> None:
        if self.num_ideas < 1:
            raise SchemaError("num_ideas", "must be >= 1")
        for stage, count in self.num_reflections.items():
            if count < 0:
                raise SchemaError(f"num_reflections.{stage}", "must be >= 0")
            if count > self.max_reflections:
                raise SchemaError(
                    f"num_reflections.{stage}",
                    f"exceeds cap {self.max_reflections}",
                )
        if self.novelty_rounds < 1:
            raise SchemaError("novelty_rounds", "must be >= 1")

    def reflections(self, stage: str) -> int:
        return self.num_reflections.get(stage, 0)

    def enabled(self, stage: str) -> bool:
        return self.stage_enabled.get(stage, True)

    def to_json(self) -> dict:
        return {
            "num_ideas": self.num_ideas,
            "num_reflections": dict(self.num_reflections),
            "max_reflections": self.max_reflections,
            "stage_enabled": dict(self.stage_enabled),
            "novelty_rounds": self.novelty_rounds,
        }

    @classmethod
    def from_json(cls, raw: Any) -> "StageConfig":
        obj = _require_mapping(raw)
        kwargs: dict[str, Any] = {}
        for key in (
            "num_ideas",
            "num_reflections",
            "max_reflections",
            "stage_enabled",
            "novelty_rounds",
        ):
            if key in obj:
                kwargs[key] = obj[key]
        return cls(**kwargs)
