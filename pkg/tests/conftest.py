"""Shared builders for scripted completions and fixture data."""

from __future__ import annotations

import json

import pytest

from labpilot.gateway import Gateway, ScriptedBackend
from labpilot.types import Idea, Review, validate_idea, validate_review

# --- wire-shape builders -----------------------------------------------------


def wire_idea(title: str = "Adaptive Cache Reuse for Long Contexts", **over) -> dict:
    data = {
        "Title": title,
        "Problem": "Long-context inference recomputes key-value caches wastefully.",
        "Importance": "Serving costs scale with context length across deployments.",
        "Difficulty": "Cache entries drift as prompts diverge between requests.",
        "Gap": "Prior work only reuses exact-prefix caches, missing partial overlap.",
        "Approach": "Align cache segments with an overlap-tolerant matching pass.",
        "Experiment": "Evaluate ResNet18 on MNIST measuring accuracy across runs.",
        "RelatedWorks": [
            {
                "Title": "Prefix Caching at Scale",
                "VenueYear": "MLSys 2023",
                "Similarity": "Also reuses transformer caches",
                "Difference": "Only exact prefixes; no partial-overlap alignment",
            }
        ],
        "ImpactScore": 70,
        "FeasibilityScore": 60,
        "NoveltyScore": 80,
        "ImpactReason": "Broad serving-cost impact",
        "FeasibilityReason": "Small models suffice",
        "NoveltyReason": "Partial-overlap reuse is unexplored",
    }
    data.update(over)
    return data


def idea_reply(idea: dict | None = None, thought: str = "Considering the intent.") -> str:
    body = json.dumps(idea or wire_idea(), indent=2)
    return f"THOUGHT:\n{thought}\n\nNEW IDEA JSON:\n```json\n{body}\n```\n"


def modified_idea_reply(idea: dict, thought: str = "Refining per the request.") -> str:
    body = json.dumps(idea, indent=2)
    return f"THOUGHT:\n{thought}\n\nMODIFIED IDEA JSON:\n```json\n{body}\n```\n"


def eval_reply(entries: list[dict]) -> str:
    body = json.dumps({"scored_ideas": entries}, indent=2)
    return f"COMPARATIVE ANALYSIS:\n<balanced trade-offs>\nEVALUATION JSON:\n```json\n{body}\n```\n"


def eval_entry(title: str, feasibility: int = 60, novelty: int = 70, impact: int = 80) -> dict:
    return {
        "Title": title,
        "FeasibilityScore": feasibility,
        "NoveltyScore": novelty,
        "ImpactScore": impact,
        "FeasibilityReason": "r1",
        "NoveltyReason": "r2",
        "ImpactReason": "r3",
    }


def novelty_reply(decision: str, detail: str = "No significant overlap found.") -> str:
    return (
        "THOUGHT:\nCompared against the search results.\n\n"
        f"DECISION:\nNOVELTY CHECK: {decision}\n{detail}\n"
    )


def wire_review(overall: int = 6, decision: str = "Accept", **over) -> dict:
    data = {
        "Summary": "The paper proposes overlap-tolerant cache reuse.",
        "Strengths": ["Clear problem statement", "Simple method"],
        "Weaknesses": ["Small-scale evaluation"],
        "Originality": 3,
        "Quality": 3,
        "Clarity": 3,
        "Significance": 2,
        "Questions": ["How does drift affect accuracy?"],
        "Limitations": ["Single-GPU scope"],
        "Ethical Concerns": False,
        "Soundness": 3,
        "Presentation": 3,
        "Contribution": 2,
        "Overall": overall,
        "Confidence": 4,
        "Decision": decision,
    }
    data.update(over)
    return data


def review_reply(review: dict | None = None, thought: str = "Assessing the paper.") -> str:
    body = json.dumps(review or wire_review(), indent=2)
    return f"THOUGHT:\n{thought}\n\nREVIEW JSON:\n```json\n{body}\n```\n"


def safety_reply(level: str = "SAFE", attacked: bool = False, attack_type: str = "None") -> str:
    return (
        f"RISK_LEVEL: {level}\n"
        f"REASON: Assessment of the supplied content places it at {level}.\n"
        f"IS_ATTACKED: {'true' if attacked else 'false'}\n"
        f"ATTACK_TYPE: {attack_type}\n"
        "REASON: No prompt-attack indicators were detected in the content.\n"
    )


# --- section texts satisfying the writer's structure contracts ------------------


def paragraphs(n: int, prefix: str) -> str:
    return "\n\n".join(
        f"{prefix} paragraph {i + 1} discusses the matter in enough depth to stand alone."
        for i in range(n)
    )


def section_draft(name: str, anchor: str = "") -> str:
    counts = {"Introduction": 5, "Related_Work": 3, "Conclusion": 1}
    n = counts.get(name, 2)
    body = paragraphs(n, name.replace("_", " "))
    if anchor:
        body += f"\n\nThe best run reached an accuracy of {anchor} on the held-out set."
    return f"\\section{{{name.replace('_', ' ')}}}\n\n{body}\n"


def abstract_reply() -> str:
    return (
        "\\begin{abstract}\n"
        "We study overlap-tolerant cache reuse, describe a matching pass, and "
        "report deterministic experiments with accuracy 1.0 on a toy task.\n"
        "\\end{abstract}\n"
    )


# --- fixture corpus ----------------------------------------------------------------


CORPUS = [
    {
        "title": "Graph Attention Networks for Link Prediction",
        "authors": "Alice Smith and Bo Chen",
        "venue": "NeurIPS",
        "year": "2023",
        "abstract": "Graph attention aggregates neighborhoods for link prediction tasks.",
    },
    {
        "title": "Knowledge Distillation for Compact Language Models",
        "authors": "Bob Jones",
        "venue": "ACL",
        "year": "2022",
        "abstract": "Distilling large teachers into compact students preserves accuracy.",
    },
    {
        "title": "Budget-Aware Hyperparameter Search",
        "authors": "Carol Lee",
        "venue": "ICML",
        "year": "2024",
        "abstract": "Search under explicit cost budgets with early termination.",
    },
]


# --- objects ------------------------------------------------------------------------


@pytest.fixture
def sample_idea() -> Idea:
    return validate_idea(wire_idea())


@pytest.fixture
def sample_review() -> Review:
    return validate_review(wire_review())


def make_gateway(responses: list[str]) -> Gateway:
    return Gateway(default_backend=ScriptedBackend(responses))


# --- full-pipeline script builder ----------------------------------------------------
#
# Mirrors the engine's exact gateway call order for a scripted end-to-end run:
#   thinker gate | n x (generation + k refinements) | evaluation (n>=2) |
#   n x novelty | coder gate | spec extraction | 7 drafts | writer_k x 7
#   refinements | 3 x (citation queries + embed) | abstract | reviewer gate |
#   3 x (review + reflection) | meta review.

SECTION_ORDER = (
    "Introduction",
    "Related_Work",
    "Method",
    "Experimental_Setup",
    "Results",
    "Discussion",
    "Conclusion",
)

# section -> (matching query, resulting cite key) against CORPUS
CITATION_PLAN = {
    "Introduction": ("graph attention AND link prediction", "smith2023graph"),
    "Related_Work": ("knowledge distillation AND compact", "jones2022knowledge"),
    "Method": ("budget-aware hyperparameter", "lee2024budget"),
}


def spec_reply(models=("ResNet18",), datasets=("MNIST",), metrics=("accuracy",)) -> str:
    body = json.dumps(
        {"model": list(models), "dataset": list(datasets), "metric": list(metrics)}
    )
    return f"```json\n{body}\n```"


def citation_queries_reply(section: str) -> str:
    matching, _key = CITATION_PLAN[section]
    queries = [matching] + [
        f"overlap-tolerant cache alignment AND probe {section.lower()} {i}" for i in range(5)
    ]
    return json.dumps(queries)


def embed_reply(section: str, key: str, anchor: str = "") -> str:
    draft = section_draft(section, anchor=anchor).rstrip("\n")
    return f"{draft} Prior work informs this design \\cite{{{key}}}.\n"


def build_pipeline_script(
    n: int = 2,
    thinker_k: int = 1,
    writer_k: int = 1,
    reviewer_k: int = 1,
    safety: tuple[str, str, str] = ("SAFE", "SAFE", "SAFE"),
    titles: list[str] | None = None,
    results_anchor: str = "1.0",
    overalls: tuple[int, int, int] = (6, 4, 7),
    meta_overall: int = 6,
) -> list[str]:
    titles = titles or [f"Idea {i + 1}" for i in range(n)]
    script: list[str] = [safety_reply(safety[0])]
    for title in titles:
        script.append(idea_reply(wire_idea(Title=title)))
        for round_index in range(thinker_k):
            script.append(
                modified_idea_reply(
                    wire_idea(Title=title, Approach=f"Approach v{round_index + 2} for {title}")
                )
            )
    if n >= 2:
        script.append(
            eval_reply(
                [eval_entry(t, 70 + 10 * i, 70 + 10 * i, 70 + 10 * i) for i, t in enumerate(titles)]
            )
        )
    script.extend(novelty_reply("NOVEL") for _ in titles)

    script.append(safety_reply(safety[1]))
    script.append(spec_reply())

    anchors = {"Results": results_anchor}
    for name in SECTION_ORDER:
        script.append(section_draft(name, anchor=anchors.get(name, "")))
    for _round in range(writer_k):
        for name in SECTION_ORDER:
            script.append(section_draft(name, anchor=anchors.get(name, "")))
    for name, (_query, key) in CITATION_PLAN.items():
        script.append(citation_queries_reply(name))
        script.append(embed_reply(name, key, anchor=anchors.get(name, "")))
    script.append(abstract_reply())

    script.append(safety_reply(safety[2]))
    for overall in overalls:
        script.append(review_reply(wire_review(overall=overall)))
        if reviewer_k >= 1:
            script.append(
                review_reply(wire_review(overall=overall), thought="Verified. I am done")
            )
    script.append(review_reply(wire_review(overall=meta_overall)))
    return script
