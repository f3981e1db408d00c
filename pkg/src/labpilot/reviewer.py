"""Stage 4: simulated peer review with reflection, meta-review, and rubric judging.

Three reviewer personas (base, negative, positive) produce schema-validated
reviews; reflection rounds stop early on the exact phrase "I am done"; the
meta-review aggregates into the same schema with a numeric sanity floor on the
Overall score; rubric judging scores writing and idea quality on a 0.5 grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from . import prompts
from .errors import SchemaError
from .gateway import ChatRequest, Gateway, extract_json_block
from .types import Review, validate_review

STAGE = "reviewer"

PERSONAS = {
    "base": "reviewer_system_base",
    "negative": "reviewer_system_neg",
    "positive": "reviewer_system_pos",
}

DONE_PHRASE = "I am done"
_JSON_MARKER = "REVIEW JSON"

QUALITY_DIMENSIONS = {"writing": "rubric_writing", "idea": "rubric_idea"}
_HALF_STEPS = [x / 2 for x in range(2, 11)]


@dataclass(frozen=True)
class MetaReview(Review):
    """Aggregated review: same schema plus the number of source reviews."""

    source_review_count: int = 1

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.source_review_count < 1:
            raise SchemaError("source_review_count", "must be >= 1")

    def to_json(self) -> dict:
        data = super().to_json()
        data["source_review_count"] = self.source_review_count
        return data


@dataclass(frozen=True)
class QualityScore:
    """Rubric-based quality judgement on a 1-5 scale with 0.5 increments."""

    dimension: str
    score: float
    reason: str = ""

    def __post_init__(self) -> None:
        if self.dimension not in QUALITY_DIMENSIONS:
            raise SchemaError("dimension", f"unknown dimension {self.dimension!r}")
        if self.score not in _HALF_STEPS:
            raise SchemaError("score", "must be in [1,5] at 0.5 steps")

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "score": self.score, "reason": self.reason}


class Reviewer:
    def __init__(
        self,
        gateway: Gateway,
        model_id: str,
        max_attempts: int = 3,
        temperature: float = 0.7,
    ):
        self.gateway = gateway
        self.model_id = model_id
        self.max_attempts = max_attempts
        self.temperature = temperature

    def _request(self, system: str, text: str, temperature: float | None = None) -> ChatRequest:
        return ChatRequest.user(
            system=system,
            text=text,
            model_id=self.model_id,
            temperature=self.temperature if temperature is None else temperature,
        )

    def review(self, paper_text: str, persona: str = "base", related_works: str = "") -> Review:
        """One persona review of the paper, validated against the full schema."""
        if not paper_text.strip():
            raise SchemaError("paper_text", "must be non-empty")
        if persona not in PERSONAS:
            raise SchemaError("persona", f"unknown persona {persona!r}")
        template = prompts.render(
            "review_template", related_works_string=related_works or "(none provided)"
        )
        text = (
            "Here is the paper you are asked to review:\n"
            f"```\n{paper_text}\n```\n\n{template}"
        )

        def validator(reply: str) -> Review:
            return validate_review(extract_json_block(reply))

        return self.gateway.with_retries(
            self._request(prompts.load(PERSONAS[persona]), text),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )

    def reflect_review(
        self, review: Review, related_works: str = "", max_reflections: int = 1
    ) -> Review:
        """Iterate reflection rounds; stop early on the exact done phrase."""
        if max_reflections < 0:
            raise SchemaError("max_reflections", "must be >= 0")
        current = review
        for _round in range(max_reflections):
            template = prompts.render(
                "review_reflection", related_works_string=related_works or "(none provided)"
            )
            text = (
                "Your current review is:\n```json\n"
                + json.dumps(current.to_wire(), indent=2, ensure_ascii=False)
                + f"\n```\n\n{template}"
            )

            def validator(reply: str) -> tuple[Review, bool]:
                validated = validate_review(extract_json_block(reply))
                marker = reply.find(_JSON_MARKER)
                thought = reply[:marker] if marker != -1 else reply
                return validated, DONE_PHRASE in thought

            current, done = self.gateway.with_retries(
                self._request(prompts.load("reviewer_system_base"), text),
                validator,
                max_attempts=self.max_attempts,
                stage=STAGE,
            )
            if done:
                break
        return current

    def meta_review(self, reviews: Sequence[Review]) -> MetaReview:
        """Aggregate reviews into one; meta Overall stays within source bounds."""
        if not reviews:
            raise SchemaError("reviews", "at least one review is required")
        lo = min(r.overall for r in reviews)
        hi = max(r.overall for r in reviews)
        system = prompts.render("metareview_system", reviewer_count=len(reviews))
        numbered = "\n\n".join(
            f"Review {i + 1}:\n```json\n"
            + json.dumps(r.to_wire(), indent=2, ensure_ascii=False)
            + "\n```"
            for i, r in enumerate(reviews)
        )
        template = prompts.render(
            "review_template",
            related_works_string="(aggregate the reviews above; no new search results)",
        )
        text = f"{numbered}\n\n{template}"

        def validator(reply: str) -> Review:
            validated = validate_review(extract_json_block(reply))
            if not lo <= validated.overall <= hi:
                raise SchemaError(
                    "overall", f"meta Overall {validated.overall} outside source range [{lo},{hi}]"
                )
            return validated

        aggregated = self.gateway.with_retries(
            self._request(system, text, temperature=0.0),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )
        return MetaReview(
            summary=aggregated.summary,
            strengths=aggregated.strengths,
            weaknesses=aggregated.weaknesses,
            questions=aggregated.questions,
            limitations=aggregated.limitations,
            ratings=aggregated.ratings,
            overall=aggregated.overall,
            confidence=aggregated.confidence,
            ethical_concerns=aggregated.ethical_concerns,
            decision=aggregated.decision,
            extra=aggregated.extra,
            source_review_count=len(reviews),
        )

    def judge_quality(self, paper_text: str, dimension: str) -> QualityScore:
        """Score one rubric dimension; off-grid scores snap to the nearest 0.5."""
        if dimension not in QUALITY_DIMENSIONS:
            raise SchemaError("dimension", f"unknown dimension {dimension!r}")
        text = prompts.render(QUALITY_DIMENSIONS[dimension], paper_text=paper_text)

        def validator(reply: str) -> QualityScore:
            raw = extract_json_block(reply)
            if not isinstance(raw, dict) or "score" not in raw:
                raise SchemaError("score", "expected a JSON object with score and reason")
            score = raw.get("score")
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise SchemaError("score", "must be numeric")
            if not 1 <= score <= 5:
                raise SchemaError("score", "must be between 1 and 5")
            snapped = round(score * 2) / 2
            return QualityScore(
                dimension=dimension, score=snapped, reason=str(raw.get("reason", ""))
            )

        return self.gateway.with_retries(
            self._request(
                "You are an expert AI research reviewer. Respond with ONLY a JSON object.",
                text,
                temperature=0.0,
            ),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )


def review_with_reflection(
    reviewer: Reviewer,
    paper_text: str,
    persona: str,
    related_works: str,
    max_reflections: int,
) -> Review:
    """Convenience: one persona review followed by its reflection rounds."""
    first = reviewer.review(paper_text, persona=persona, related_works=related_works)
    return reviewer.reflect_review(first, related_works, max_reflections)
