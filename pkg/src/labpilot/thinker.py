"""Stage 1: turn a research intent into scored, novelty-checked, refinable ideas.

The stage samples n ideas with related-work context, self-refines each for at
most k rounds, scores them comparatively, and runs an iterative literature
novelty check per idea. A safety gate runs before any generation call.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace

from . import prompts, toolhub
from .checker import SafetyChecker
from .errors import SchemaError, TitleMismatch
from .gateway import ChatRequest, Gateway, extract_json_block
from .types import Idea, RelatedWorkRow, ResearchIntent, Score, StageConfig, validate_idea

logger = logging.getLogger(__name__)

STAGE = "thinker"

SELF_REFLECTION_NOTE = (
    "Self-reflection round {round}/{total}: critically re-examine the idea and "
    "improve its clarity, feasibility, and novelty while keeping its core "
    "contribution intact."
)

NOVELTY_CRITERIA = (
    "Rate 0-100 how original each idea is relative to the related works above: "
    "0 means fully covered by prior work, 100 means a clearly new contribution."
)
FEASIBILITY_CRITERIA = (
    "Rate 0-100 how practical each idea is to implement and evaluate with "
    "modest compute and existing datasets: 0 means infeasible, 100 means "
    "straightforward to execute."
)
IMPACT_CRITERIA = (
    "Rate 0-100 the expected significance of each idea for the field if it "
    "succeeds: 0 means negligible, 100 means field-changing."
)

_DECISION_RE = re.compile(r"NOVELTY CHECK:\s*(CONTINUE|NOVEL|NOT NOVEL)")
_QUOTED_RE = re.compile(r'"([^"\n]{8,})"')


@dataclass(frozen=True)
class NoveltyVerdict:
    """Outcome of the iterative novelty-check loop."""

    decision: str
    rationale: str
    cited_overlaps: tuple[str, ...] = ()
    rounds_used: int = 0
    inconclusive: bool = False
    examined: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.decision not in ("CONTINUE", "NOVEL", "NOT_NOVEL"):
            raise SchemaError("decision", f"unknown decision {self.decision!r}")
        if self.decision == "NOT_NOVEL" and not self.cited_overlaps:
            raise SchemaError("cited_overlaps", "NOT_NOVEL requires cited overlapping papers")

    def to_json(self) -> dict:
        return {
            "decision": self.decision,
            "rationale": self.rationale,
            "cited_overlaps": list(self.cited_overlaps),
            "rounds_used": self.rounds_used,
            "inconclusive": self.inconclusive,
            "examined": list(self.examined),
        }


def _idea_json(idea: Idea) -> str:
    return json.dumps(idea.to_wire(), indent=2, ensure_ascii=False)


def rank_and_select(ideas: list[Idea]) -> Idea:
    """Argmax of mean(impact, feasibility, novelty); ties go to the earliest idea."""
    if not ideas:
        raise SchemaError("ideas", "must be non-empty")
    best = ideas[0]
    best_mean = best.mean_score()
    for idea in ideas[1:]:
        mean = idea.mean_score()
        if mean > best_mean:
            best, best_mean = idea, mean
    return best


class Thinker:
    def __init__(
        self,
        gateway: Gateway,
        model_id: str,
        search_backend=None,
        safety: SafetyChecker | None = None,
        max_attempts: int = 3,
        temperature: float = 0.7,
        search_limit: int = 5,
    ):
        self.gateway = gateway
        self.model_id = model_id
        self.search_backend = search_backend
        self.safety = safety
        self.max_attempts = max_attempts
        self.temperature = temperature
        self.search_limit = search_limit

    # -- helpers ---------------------------------------------------------

    def _system(self, intent: ResearchIntent, default_asset: str) -> str:
        if intent.system_prompt_override:
            return intent.system_prompt_override
        return prompts.load(default_asset)

    def _request(self, system: str, text: str, temperature: float | None = None) -> ChatRequest:
        return ChatRequest.user(
            system=system,
            text=text,
            model_id=self.model_id,
            temperature=self.temperature if temperature is None else temperature,
        )

    def _search(self, query: str) -> list:
        return toolhub.search_papers(query, self.search_limit, self.search_backend)

    def _related_context(self, intent: ResearchIntent) -> str:
        try:
            candidates = self._search(intent.text)
        except Exception as exc:
            logger.warning("related-work search degraded: %s", exc)
            return "(no related works found)"
        return toolhub.related_works_string(candidates)

    @staticmethod
    def _pdf_section(intent: ResearchIntent) -> str:
        texts = []
        for attachment in intent.attachments:
            if attachment.format == "text":
                texts.append(attachment.data.decode("utf-8"))
            elif attachment.format == "pdf":
                from .pdftext import extract_text

                texts.append(extract_text(attachment.data))
            elif attachment.format == "json":
                texts.append(attachment.data.decode("utf-8"))
        return "\n\n".join(t for t in texts if t.strip())

    # -- operations -------------------------------------------------------

    def think(self, intent: ResearchIntent, cfg: StageConfig) -> list[Idea]:
        """Generate, refine, score, and novelty-check n ideas for an intent."""
        if self.safety is not None:
            self.safety.gate(STAGE, intent.text)
        related = self._related_context(intent)
        reflections = cfg.reflections(STAGE)

        ideas: list[Idea] = []
        for _ in range(cfg.num_ideas):
            idea = self._generate(intent, related, reflections)
            for round_index in range(1, reflections + 1):
                refined = self.refine_idea(
                    idea,
                    SELF_REFLECTION_NOTE.format(round=round_index, total=reflections),
                    intent,
                )
                if self._same_content(idea, refined):
                    break
                idea = refined
            ideas.append(idea)

        if len(ideas) >= 2:
            ideas = self.evaluate_ideas(ideas, intent)

        checked: list[Idea] = []
        for idea in ideas:
            verdict = self.check_novelty(idea, intent, cfg.novelty_rounds)
            extra = dict(idea.extra)
            extra["novelty"] = verdict.to_json()
            idea = replace(idea, extra=extra)
            if not idea.comparison_rows:
                idea = replace(idea, comparison_rows=self._rows_from_verdict(verdict))
            checked.append(idea)
        return checked

    def _generate(self, intent: ResearchIntent, related: str, reflections: int) -> Idea:
        text = prompts.render(
            "idea_generation",
            intent=intent.text,
            pdf_section=self._pdf_section(intent),
            related_works_string=related,
            num_reflections=reflections,
        )

        def validator(reply: str) -> Idea:
            return validate_idea(extract_json_block(reply))

        return self.gateway.with_retries(
            self._request(self._system(intent, "thinker_idea_system"), text),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )

    @staticmethod
    def _same_content(a: Idea, b: Idea) -> bool:
        left, right = a.to_json(), b.to_json()
        left.pop("status"), right.pop("status")
        return left == right

    def refine_idea(self, idea: Idea, modifications: str, intent: ResearchIntent) -> Idea:
        """Rewrite an idea per requested modifications, preserving its field set."""
        if not modifications.strip():
            raise SchemaError("modifications", "must be non-empty")
        original_keys = set(idea.to_wire())
        text = prompts.render(
            "idea_modification",
            idea=_idea_json(idea),
            modifications=modifications,
            intent=intent.text,
        )

        def validator(reply: str) -> Idea:
            raw = extract_json_block(reply)
            if isinstance(raw, dict):
                missing = original_keys - set(raw)
                if missing:
                    raise SchemaError(
                        "fields", f"reply dropped original fields: {sorted(missing)}"
                    )
            return validate_idea(raw).with_status("refined")

        return self.gateway.with_retries(
            self._request(self._system(intent, "thinker_idea_system"), text),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )

    def evaluate_ideas(self, ideas: list[Idea], intent: ResearchIntent) -> list[Idea]:
        """Comparatively rescore ideas; titles must come back byte-identical."""
        if len(ideas) < 2:
            raise SchemaError("ideas", "comparative evaluation needs at least 2 ideas")
        text = prompts.render(
            "idea_evaluation",
            intent=intent.text,
            ideas=json.dumps([i.to_wire() for i in ideas], indent=2, ensure_ascii=False),
            novelty_criteria=NOVELTY_CRITERIA,
            feasibility_criteria=FEASIBILITY_CRITERIA,
            impact_criteria=IMPACT_CRITERIA,
        )
        expected_titles = sorted(i.title for i in ideas)

        def validator(reply: str) -> dict[str, list[dict]]:
            raw = extract_json_block(reply)
            if not isinstance(raw, dict) or not isinstance(raw.get("scored_ideas"), list):
                raise SchemaError("scored_ideas", "missing scored_ideas list")
            entries = raw["scored_ideas"]
            titles = sorted(str(e.get("Title", "")) for e in entries)
            if titles != expected_titles:
                raise TitleMismatch(
                    f"returned titles {titles} do not match input titles {expected_titles}"
                )
            by_title: dict[str, list[dict]] = {}
            for entry in entries:
                for axis in ("FeasibilityScore", "NoveltyScore", "ImpactScore"):
                    value = entry.get(axis)
                    if not isinstance(value, (int, float)) or isinstance(value, bool):
                        raise SchemaError(axis, "missing or non-numeric")
                    if not 0 <= value <= 100:
                        raise SchemaError(axis, "out of [0,100]")
                by_title.setdefault(str(entry["Title"]), []).append(entry)
            return by_title

        by_title = self.gateway.with_retries(
            self._request(prompts.load("thinker_evaluation_system"), text, temperature=0.0),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
            fatal=(TitleMismatch,),
        )

        rescored = []
        for idea in ideas:
            entry = by_title[idea.title].pop(0)
            scores = {
                "impact": Score(int(entry["ImpactScore"]), str(entry.get("ImpactReason", ""))),
                "feasibility": Score(
                    int(entry["FeasibilityScore"]), str(entry.get("FeasibilityReason", ""))
                ),
                "novelty": Score(int(entry["NoveltyScore"]), str(entry.get("NoveltyReason", ""))),
            }
            rescored.append(replace(idea, scores=scores))
        return rescored

    def check_novelty(
        self, idea: Idea, intent: ResearchIntent, max_rounds: int
    ) -> NoveltyVerdict:
        """Iterative search-and-judge loop ending in NOVEL / NOT_NOVEL / flagged."""
        if max_rounds < 1:
            raise SchemaError("max_rounds", "must be >= 1")
        query = idea.title
        last_rationale = ""
        examined: list[str] = []
        for round_index in range(1, max_rounds + 1):
            try:
                candidates = self._search(query)
            except Exception as exc:
                logger.warning("novelty search failed: %s", exc)
                return NoveltyVerdict(
                    decision="CONTINUE",
                    rationale="search failed",
                    rounds_used=round_index - 1,
                    inconclusive=True,
                    examined=tuple(examined),
                )
            examined.extend(c.title for c in candidates if c.title not in examined)
            results_str = toolhub.related_works_string(candidates)
            text = prompts.render(
                "novelty_check",
                current_round=round_index,
                num_rounds=max_rounds,
                intent=intent.text,
                idea=_idea_json(idea),
                last_query_results=results_str,
            )

            def validator(reply: str) -> tuple[str, str]:
                match = _DECISION_RE.search(reply)
                if not match:
                    raise SchemaError("decision", "missing NOVELTY CHECK line")
                return match.group(1), reply

            decision, reply = self.gateway.with_retries(
                self._request(prompts.load("thinker_novelty_system"), text),
                validator,
                max_attempts=self.max_attempts,
                stage=STAGE,
            )
            rationale = reply[reply.find("NOVELTY CHECK") :].strip()
            if decision == "NOVEL":
                return NoveltyVerdict(
                    decision="NOVEL",
                    rationale=rationale,
                    rounds_used=round_index,
                    examined=tuple(examined),
                )
            if decision == "NOT NOVEL":
                overlaps = self._extract_overlaps(reply, candidates)
                if overlaps:
                    return NoveltyVerdict(
                        decision="NOT_NOVEL",
                        rationale=rationale,
                        cited_overlaps=tuple(overlaps),
                        rounds_used=round_index,
                        examined=tuple(examined),
                    )
                # An unsupported NOT NOVEL claim is treated as inconclusive.
                decision = "CONTINUE"
            last_rationale = rationale
            query = f"{idea.title} {last_rationale[:120]}".strip()
        return NoveltyVerdict(
            decision="NOVEL",
            rationale=last_rationale or "round cap reached without a terminal decision",
            rounds_used=max_rounds,
            inconclusive=True,
            examined=tuple(examined),
        )

    @staticmethod
    def _extract_overlaps(reply: str, candidates: list) -> list[str]:
        overlaps = [c.title for c in candidates if c.title and c.title.lower() in reply.lower()]
        if overlaps:
            return overlaps
        return [
            quoted
            for quoted in _QUOTED_RE.findall(reply)
            if not quoted.startswith("NOVELTY CHECK")
        ]

    @staticmethod
    def _rows_from_verdict(verdict: NoveltyVerdict) -> tuple[RelatedWorkRow, ...]:
        if verdict.cited_overlaps:
            note = verdict.rationale[:200] or "overlap found by novelty check"
            titles = verdict.cited_overlaps
        else:
            note = "novelty check found no significant overlap with this work"
            titles = verdict.examined
        return tuple(
            RelatedWorkRow(
                title=title,
                venue_year="",
                similarity_note="surfaced by novelty search",
                difference_note=note,
            )
            for title in titles
        )
