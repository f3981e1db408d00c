"""Safety gating per stage and adaptive budget control with early termination.

Safety: an LLM classifier is parsed into a SafetyReport; HIGH/BLOCK halts the
stage, MEDIUM attaches a warning and continues, and any parse failure after
retries fails closed to BLOCK.

Budget: a Decimal ledger charges every completion against per-stage
allowances; crossing the total raises TerminationSignal, and the planner picks
the largest reflection count whose estimated cost fits each allowance.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Any, Mapping

from . import prompts
from .errors import (
    BudgetExceeded,
    BudgetTooSmall,
    ChargeAfterTermination,
    SafetyBlocked,
    SchemaError,
    TerminationSignal,
    ValidationExhausted,
)
from .gateway import ChatRequest, Gateway, Usage

RISK_LEVELS = ("SAFE", "LOW", "MEDIUM", "HIGH", "BLOCK")
HALTING_LEVELS = ("HIGH", "BLOCK")
SAFETY_STAGES = ("thinker", "coder", "reviewer")

DEFAULT_STAGE_ALLOWANCE = {
    "thinker": "0.15",
    "coder": "0.40",
    "writer": "0.35",
    "reviewer": "0.10",
}


# --- safety -------------------------------------------------------------------


@dataclass(frozen=True)
class SafetyReport:
    """Risk classification of stage content, with prompt-attack flags."""

    risk_level: str
    reason: str
    is_attacked: bool = False
    attack_type: str = "None"
    attack_reason: str = ""

    def __post_init__(self) -> None:
        if self.risk_level not in RISK_LEVELS:
            raise SchemaError("risk_level", f"unknown level {self.risk_level!r}")
        if self.is_attacked and self.attack_type == "None":
            raise SchemaError("attack_type", "is_attacked=true requires a named attack type")
        if self.risk_level == "BLOCK" and not self.reason.strip():
            raise SchemaError("reason", "BLOCK requires a non-empty reason")

    @property
    def halts(self) -> bool:
        return self.risk_level in HALTING_LEVELS

    def to_json(self) -> dict:
        return {
            "risk_level": self.risk_level,
            "reason": self.reason,
            "is_attacked": self.is_attacked,
            "attack_type": self.attack_type,
            "attack_reason": self.attack_reason,
        }


_RISK_RE = re.compile(r"RISK_LEVEL:\s*([A-Z]+)")
_ATTACKED_RE = re.compile(r"IS_ATTACKED:\s*(true|false)", re.IGNORECASE)
_ATTACK_TYPE_RE = re.compile(r"ATTACK_TYPE:\s*(.+)")
_REASON_RE = re.compile(r"REASON:\s*(.+?)(?=\n[A-Z_]+:|\Z)", re.DOTALL)


def parse_safety_reply(text: str) -> SafetyReport:
    """Parse the classifier's line-oriented reply into a SafetyReport."""
    risk = _RISK_RE.search(text)
    if not risk:
        raise SchemaError("risk_level", "missing RISK_LEVEL line")
    attacked = _ATTACKED_RE.search(text)
    if not attacked:
        raise SchemaError("is_attacked", "missing IS_ATTACKED line")
    attack_type_match = _ATTACK_TYPE_RE.search(text)
    attack_type = attack_type_match.group(1).strip() if attack_type_match else "None"
    reasons = _REASON_RE.findall(text)
    reason = reasons[0].strip() if reasons else ""
    attack_reason = reasons[1].strip() if len(reasons) > 1 else ""
    return SafetyReport(
        risk_level=risk.group(1),
        reason=reason,
        is_attacked=attacked.group(1).lower() == "true",
        attack_type=attack_type,
        attack_reason=attack_reason,
    )


FAIL_CLOSED_REPORT = SafetyReport(
    risk_level="BLOCK",
    reason="safety classifier output unparseable after retries; failing closed",
)


class SafetyChecker:
    """Stage-specific safety filter backed by an LLM classifier."""

    def __init__(self, gateway: Gateway, model_id: str, max_attempts: int = 2):
        self.gateway = gateway
        self.model_id = model_id
        self.max_attempts = max_attempts
        self._cache: dict[tuple[str, str], SafetyReport] = {}

    def assess_safety(self, stage: str, content: str) -> SafetyReport:
        """Classify content; parse failures fail closed to BLOCK, never SAFE."""
        if not content.strip():
            raise SchemaError("content", "must be non-empty")
        key = (stage, content)
        if key in self._cache:
            return self._cache[key]
        req = ChatRequest.user(
            system="You classify research content for safety. Follow the format exactly.",
            text=prompts.render("safety_classifier", stage=stage, content=content),
            model_id=self.model_id,
            temperature=0.0,
        )
        try:
            report = self.gateway.with_retries(
                req, parse_safety_reply, max_attempts=self.max_attempts, stage=stage
            )
        except ValidationExhausted:
            report = FAIL_CLOSED_REPORT
        self._cache[key] = report
        return report

    def detect_prompt_attack(self, content: str, stage: str = "thinker") -> tuple[bool, str]:
        """Attack flags from the same classification call, surfaced for UI badges."""
        report = self.assess_safety(stage, content)
        return report.is_attacked, report.attack_type

    def gate(self, stage: str, content: str) -> SafetyReport:
        """Assess and halt the stage on HIGH/BLOCK; MEDIUM passes with the report."""
        report = self.assess_safety(stage, content)
        if report.halts:
            raise SafetyBlocked(stage, report)
        return report


# --- budget -------------------------------------------------------------------


@dataclass(frozen=True)
class PriceEntry:
    """Per-token prices for one model."""

    prompt: Decimal
    completion: Decimal


def load_price_table(source: Mapping[str, Any] | str | Path) -> dict[str, PriceEntry]:
    """Price table from config: model_id -> {prompt_per_1k, completion_per_1k}."""
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text(encoding="utf-8"))
    table: dict[str, PriceEntry] = {}
    for model_id, entry in source.items():
        table[model_id] = PriceEntry(
            prompt=Decimal(str(entry["prompt_per_1k"])) / 1000,
            completion=Decimal(str(entry["completion_per_1k"])) / 1000,
        )
    return table


DEFAULT_PRICE_TABLE = {"scripted": {"prompt_per_1k": "0.001", "completion_per_1k": "0.002"}}


@dataclass(frozen=True)
class LedgerEntry:
    stage: str
    usage: Usage
    cost: Decimal

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "model_id": self.usage.model_id,
            "prompt_tokens": self.usage.prompt_tokens,
            "completion_tokens": self.usage.completion_tokens,
            "cost": str(self.cost),
        }


class BudgetLedger:
    """Token/cost accounting with per-stage allowances and termination state.

    All arithmetic is Decimal so conservation (sum of entries == total) holds
    exactly. Updates are atomic and totally ordered per session.
    """

    def __init__(
        self,
        total_budget: Decimal | str | float,
        price_table: Mapping[str, PriceEntry] | None = None,
        stage_allowance: Mapping[str, Any] | None = None,
        warning_fraction: str = "0.9",
    ):
        self.total_budget = Decimal(str(total_budget))
        self.price_table = dict(price_table or load_price_table(DEFAULT_PRICE_TABLE))
        allowance = stage_allowance or DEFAULT_STAGE_ALLOWANCE
        self.stage_allowance = {k: Decimal(str(v)) for k, v in allowance.items()}
        if sum(self.stage_allowance.values()) != Decimal("1"):
            raise SchemaError("stage_allowance", "fractions must sum to 1.0")
        self.warning_fraction = Decimal(warning_fraction)
        self.entries: list[LedgerEntry] = []
        self.state = "active"
        self._lock = threading.Lock()

    def price_for(self, model_id: str) -> PriceEntry:
        if model_id not in self.price_table:
            raise SchemaError("price_table", f"model {model_id!r} not priced")
        return self.price_table[model_id]

    def cost_of(self, usage: Usage) -> Decimal:
        price = self.price_for(usage.model_id)
        return usage.prompt_tokens * price.prompt + usage.completion_tokens * price.completion

    def total(self) -> Decimal:
        return sum((e.cost for e in self.entries), Decimal("0"))

    def charge(self, stage: str, usage: Usage) -> str:
        """Append an entry; returns the new state or raises TerminationSignal."""
        with self._lock:
            if self.state == "terminated":
                raise ChargeAfterTermination(f"ledger terminated; cannot charge {stage}")
            entry = LedgerEntry(stage=stage, usage=usage, cost=self.cost_of(usage))
            self.entries.append(entry)
            running = self.total()
            if running > self.total_budget:
                self.state = "terminated"
                raise TerminationSignal(
                    f"cost {running} exceeded budget {self.total_budget} at stage {stage}"
                )
            if running > self.total_budget * self.warning_fraction:
                self.state = "warning"
            return self.state

    def precheck(self, stage: str) -> None:
        """Gateway pre-charge hook: refuse calls once terminated."""
        if self.state == "terminated":
            raise BudgetExceeded(f"budget exhausted; refusing {stage} call")

    def stage_total(self, stage: str) -> Decimal:
        return sum((e.cost for e in self.entries if e.stage == stage), Decimal("0"))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.entries)

    def snapshot(self) -> dict:
        return {
            "total_budget": str(self.total_budget),
            "total_spent": str(self.total()),
            "state": self.state,
            "entries": len(self.entries),
            "per_stage": {s: str(self.stage_total(s)) for s in self.stage_allowance},
        }


# --- planning -----------------------------------------------------------------


@dataclass(frozen=True)
class CallEstimate:
    """Configured per-stage call-volume and token estimates for planning."""

    base_calls: int
    calls_per_reflection: int
    prompt_tokens: int
    completion_tokens: int
    max_reflections: int = 5


DEFAULT_ESTIMATES = {
    "thinker": CallEstimate(8, 4, 1200, 700),
    "coder": CallEstimate(3, 1, 1500, 900),
    "writer": CallEstimate(14, 8, 1800, 1100),
    "reviewer": CallEstimate(5, 3, 1600, 800),
}


def estimated_stage_cost(estimate: CallEstimate, reflections: int, price: PriceEntry) -> Decimal:
    calls = estimate.base_calls + reflections * estimate.calls_per_reflection
    per_call = (
        estimate.prompt_tokens * price.prompt + estimate.completion_tokens * price.completion
    )
    return calls * per_call


def plan_budget(
    total: Decimal | str | float,
    model_id: str,
    stages: tuple[str, ...] = ("thinker", "coder", "writer", "reviewer"),
    price_table: Mapping[str, PriceEntry] | None = None,
    estimates: Mapping[str, CallEstimate] | None = None,
    stage_allowance: Mapping[str, Any] | None = None,
) -> dict[str, dict[str, Any]]:
    """Per-stage plan: allowance plus the max reflection count that fits it."""
    total = Decimal(str(total))
    if total <= 0:
        raise SchemaError("total", "must be > 0")
    prices = dict(price_table or load_price_table(DEFAULT_PRICE_TABLE))
    if model_id not in prices:
        raise SchemaError("price_table", f"model {model_id!r} not priced")
    price = prices[model_id]
    estimates = dict(estimates or DEFAULT_ESTIMATES)
    allowance_map = {
        k: Decimal(str(v)) for k, v in (stage_allowance or DEFAULT_STAGE_ALLOWANCE).items()
    }

    base_total = sum(
        (estimated_stage_cost(estimates[s], 0, price) for s in stages), Decimal("0")
    )
    if base_total > total:
        raise BudgetTooSmall(
            f"base calls cost {base_total}, exceeding total budget {total}"
        )

    plan: dict[str, dict[str, Any]] = {}
    for stage in stages:
        estimate = estimates[stage]
        allowance = total * allowance_map[stage]
        reflections = 0
        for r in range(estimate.max_reflections, -1, -1):
            if estimated_stage_cost(estimate, r, price) <= allowance:
                reflections = r
                break
        plan[stage] = {"allowance": allowance, "reflection_count": reflections}
    return plan
