"""Golden prompt fidelity: placeholder sets, render-vs-substitution, anchors.

Every template must render by pure placeholder substitution (zero diffs
outside placeholders, verified against an independent substitution
implementation) and must keep its load-bearing verbatim phrases.
"""

from __future__ import annotations

import re

import pytest

from labpilot import prompts

# Frozen placeholder map: any asset drift breaks this on purpose.
PLACEHOLDERS = {
    "abstract_prompt": ["abstract_tips", "full_paper_content", "idea"],
    "citation_add": ["num_papers", "paper_context", "section", "section_content"],
    "citation_search": ["idea", "section", "snippet"],
    "citation_system": [],
    "coder_experiment": [
        "approach",
        "baseline_results",
        "dataset",
        "max_runs",
        "metric",
        "model",
        "novelty",
        "problem",
        "title",
    ],
    "coder_failure": ["Experiment", "Title", "max_runs", "message", "run_time"],
    "coder_format": ["dataset", "metric", "model"],
    "coder_success": ["next_run", "results", "run_num"],
    "drawer_system": [],
    "idea_evaluation": [
        "feasibility_criteria",
        "ideas",
        "impact_criteria",
        "intent",
        "novelty_criteria",
    ],
    "idea_generation": ["intent", "num_reflections", "pdf_section", "related_works_string"],
    "idea_modification": ["idea", "intent", "modifications"],
    "metareview_system": ["reviewer_count"],
    "novelty_check": ["current_round", "idea", "intent", "last_query_results", "num_rounds"],
    "refinement": [
        "error_list",
        "focus",
        "method_specific_instruction",
        "other_sections_context",
        "round_num",
        "section",
        "section_content",
        "section_tips",
        "total_rounds",
    ],
    "review_reflection": ["related_works_string"],
    "review_template": ["related_works_string"],
    "reviewer_system_base": [],
    "reviewer_system_neg": [],
    "reviewer_system_pos": [],
    "rubric_idea": ["paper_text"],
    "rubric_writing": ["paper_text"],
    "safety_classifier": ["content", "stage"],
    "section_tips": [],
    "thinker_ethical_system": [],
    "thinker_evaluation_system": [],
    "thinker_idea_system": [],
    "thinker_novelty_system": [],
    "writer_system": [],
}

# Verbatim phrases each template must carry.
ANCHORS = {
    "thinker_idea_system": ["ambitious AI PhD student"],
    "thinker_evaluation_system": ["feasibility, novelty, impact"],
    "thinker_novelty_system": ["Be a harsh critic for novelty"],
    "thinker_ethical_system": ["research ethics advisor"],
    "idea_generation": [
        "NEW IDEA JSON:",
        "This JSON will be automatically parsed",
        "What are the key components of my approach and results?",
        "You will have {num_reflections} rounds to iterate on the idea",
    ],
    "idea_modification": ["MODIFIED IDEA JSON:", "including all original fields"],
    "idea_evaluation": [
        '"NoveltyScore": A number from 0 to 100',
        "DO NOT MODIFY OR CHANGE THE TITLE IN ANY WAY",
        "You MUST preserve the exact original",
    ],
    "novelty_check": [
        "Round {current_round}/{num_rounds}.",
        '"NOVELTY CHECK: CONTINUE"',
        '"NOVELTY CHECK: NOVEL"',
        '"NOVELTY CHECK: NOT NOVEL"',
        "cite the specific paper(s)",
    ],
    "coder_experiment": [
        "`python experiment.py --out_dir=run_i`",
        "`final_info.json` placed directly inside",
        "do **not** save into nested folders",
        "MNIST, UCI datasets, small MLPs or ResNet18",
        "`os.makedirs(out_dir, exist_ok=True)`",
    ],
    "coder_success": [
        "'ALL_COMPLETED'",
        "`notes.txt`",
        "DO NOT ADD ADDITIONAL COMMAND LINE ARGS",
        "Run {run_num} completed",
    ],
    "coder_failure": [
        "There was an error running",
        "We're currently on run {run_time}",
        "`python experiment.py --out_dir=run_{run_time}`",
    ],
    "coder_format": ["extract the essential names", '"model": ["Model1", "Model2", ...]'],
    "writer_system": [
        "NEVER mix Markdown and LaTeX",
        "Use `\\%` to indicate percentage",
        "\\textbf{{text}}",
    ],
    "section_tips": [
        "TL;DR of the paper",
        "Write 5 paragraphs for the instructions",
        "ONE single paragraph only (~100-150 words)",
        "Write 3 paragraphs (at most 4 paragraphs)",
        'Goal is to "Compare and contrast"',
    ],
    "abstract_prompt": [
        "\\begin{{abstract}} ... \\end{{abstract}}",
        "full paper has already been written",
    ],
    "citation_system": [
        "[CITE_KEY: bibtex_key] Paper Title (authors, venue, year)",
        "NEVER invent citation keys",
    ],
    "citation_add": ["Cite ALL {num_papers} new papers", "[CITE_KEY: bibtex_key]"],
    "citation_search": [
        "Return ONLY a JSON array of 6-10 query strings",
        "WHAT TO AVOID",
        '"machine learning"',
    ],
    "refinement": [
        "Round {round_num}/{total_rounds}",
        "CITATION PRESERVATION",
        "Do NOT expand it",
    ],
    "reviewer_system_base": ["Be critical and cautious in your decision"],
    "reviewer_system_neg": ["give it bad scores and reject it"],
    "reviewer_system_pos": ["give it good scores and accept it"],
    "metareview_system": [
        "reviewed by {reviewer_count} reviewers",
        "aggregate the reviews into",
    ],
    "review_template": [
        '"Overall": A rating from 1 to 10 (very strong reject to award quality)',
        "one of the following: Accept, Reject",
        "REVIEW JSON:",
        '"Limitations": A set of limitations',
    ],
    "review_reflection": [
        'include "I am done" at the end of the thoughts but before the JSON',
        'ONLY INCLUDE "I am done" IF YOU ARE MAKING NO MORE CHANGES',
    ],
    "rubric_writing": [
        "Quality Rubric (1–5 scale)",
        "can use 0.5 increments",
        "Content Richness",
    ],
    "rubric_idea": [
        "Value Rubric (1–5 scale)",
        "Feasibility, Novelty, and Usefulness",
        "can use 0.5 increments",
    ],
    "drawer_system": [
        "You are a DrawIO code generator",
        "Every mxCell element MUST have a unique id",
        'Root cells should have IDs "0" and "1"',
        "No empty or duplicate IDs allowed",
    ],
}

FIXED_VALUES = {name: f"<<{name}-value>>" for names in PLACEHOLDERS.values() for name in names}


def placeholder_scan(text: str) -> set[str]:
    masked = text.replace("{{", "\x00").replace("}}", "\x01")
    return set(re.findall(r"\{(\w+)\}", masked))


def independent_substitute(template: str, mapping: dict) -> str:
    """Greedy left-to-right token substitution, independent of prompts.render."""
    out = []
    i = 0
    tokens = {("{" + key + "}"): str(value) for key, value in mapping.items()}
    while i < len(template):
        for token, value in tokens.items():
            if template.startswith(token, i):
                out.append(value)
                i += len(token)
                break
        else:
            out.append(template[i])
            i += 1
    return "".join(out)


def test_template_inventory_is_complete():
    assert sorted(prompts.list_templates()) == sorted(PLACEHOLDERS)


@pytest.mark.parametrize("name", sorted(PLACEHOLDERS))
def test_placeholder_sets_frozen(name):
    assert placeholder_scan(prompts.load(name)) == set(PLACEHOLDERS[name])


@pytest.mark.parametrize("name", sorted(PLACEHOLDERS))
def test_render_diffs_only_at_placeholders(name):
    mapping = {key: FIXED_VALUES[key] for key in PLACEHOLDERS[name]}
    rendered = prompts.render(name, mapping)
    expected = independent_substitute(prompts.load(name), mapping)
    assert rendered == expected
    # No placeholder token survives, and nothing else changed structurally.
    assert not placeholder_scan(rendered) & set(PLACEHOLDERS[name])


@pytest.mark.parametrize("name", sorted(ANCHORS))
def test_verbatim_anchor_phrases(name):
    text = prompts.load(name)
    for anchor in ANCHORS[name]:
        assert anchor in text, f"{name} lost anchor {anchor!r}"


def test_templates_without_placeholders_render_identically():
    for name, keys in PLACEHOLDERS.items():
        if not keys:
            assert prompts.render(name) == prompts.load(name)


def test_unknown_placeholder_rejected():
    with pytest.raises(KeyError):
        prompts.render("idea_generation", nonexistent="x")


def test_section_tips_cover_all_paper_sections():
    tips = prompts.section_tips()
    assert sorted(tips) == [
        "Abstract",
        "Conclusion",
        "Discussion",
        "Experimental_Setup",
        "Introduction",
        "Method",
        "Related_Work",
        "Results",
    ]
    assert "5 paragraphs" in tips["Introduction"]
    assert "ONE single paragraph" in tips["Conclusion"]
