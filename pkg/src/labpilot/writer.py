"""Stage 3: three-step paper production ending in a watermarked document.

Sections are drafted in a fixed order (Abstract written last, placed first),
refined for coherence, then citations are retrieved and embedded. Every draft
passes through the LaTeX sanitizer, cite-key closure is enforced mechanically,
and the result is compiled when a TeX toolchain exists or emitted as a flagged
source bundle otherwise.
"""

from __future__ import annotations

import json
import logging
import re
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import prompts, toolhub
from .coder import collect_results
from .errors import (
    CompileError,
    InventedKey,
    MarkdownTable,
    SchemaError,
    ToolchainMissing,
    ValidationExhausted,
)
from .gateway import ChatRequest, Gateway, extract_json_block
from .toolhub import CiteKeyMaker
from .types import CitationCandidate, Idea, PaperProject, RunResults

logger = logging.getLogger(__name__)

STAGE = "writer"

SECTION_ORDER = (
    "Introduction",
    "Related_Work",
    "Method",
    "Experimental_Setup",
    "Results",
    "Discussion",
    "Conclusion",
)
# (min, max) prose paragraphs for sections with a hard structure contract.
PARAGRAPH_RULES = {"Introduction": (5, 5), "Conclusion": (1, 1), "Related_Work": (3, 4)}

DEFAULT_CITATION_SECTIONS = ("Introduction", "Related_Work", "Method")
MAX_CANDIDATES_PER_SECTION = 8

QUERY_BLOCKLIST_SUBSTRINGS = ("deep learning", "machine learning")
QUERY_BLOCKLIST_BARE = ("neural networks",)
_AI_WORD_RE = re.compile(r"\bai\b", re.IGNORECASE)

# Extensible checklist of LaTeX error classes fed to the refinement prompt.
ERROR_CHECKLIST = [
    "Mixing Markdown and LaTeX (e.g. **bold** instead of \\textbf{bold})",
    "Markdown-style tables (lines starting with |) instead of tabular",
    "Unescaped %, _, & or # outside math mode",
    "Equations exceeding one line width without align/multline",
    "\\cite commands whose keys are not in references.bib",
]

_CITE_RE = re.compile(r"\\cite[tp]?\{([^}]*)\}")
_MATH_SPAN_RE = re.compile(r"\$\$.*?\$\$|\$[^$]*\$|\\\[.*?\\\]|\\\(.*?\\\)", re.DOTALL)
_BOLD_RE = re.compile(r"\*\*([^*\n]+)\*\*")
_ITALIC_RE = re.compile(r"(?<!\*)\*([^*\n]+)\*(?!\*)")
_CODE_RE = re.compile(r"`([^`\n]+)`")
_ABSTRACT_RE = re.compile(r"\\begin\{abstract\}(.*?)\\end\{abstract\}", re.DOTALL)

WATERMARK_MARKER = "% ai-disclosure-footer"
WATERMARK_TEXT = "Generated by an automated research pipeline --- AI involvement disclosed"
WATERMARK_PREAMBLE = (
    f"{WATERMARK_MARKER}\n"
    "\\makeatletter\n"
    "\\def\\@oddfoot{\\reset@font\\hfil\\footnotesize "
    f"{WATERMARK_TEXT}\\hfil}}\n"
    "\\let\\@evenfoot\\@oddfoot\n"
    "\\makeatother\n"
)

SECTION_DRAFT_PROMPT = """You are writing the {section} section of a research paper.

Section guidelines:
{tips}

Research idea:
{idea}

Experimental results (from final_info.json files):
{results}

Previously written sections:
{prior}

Write the {section} section now. Output pure LaTeX for the section body only,
starting with \\section{{{section}}}. Do not write other sections. Do not add
\\cite commands; citations are inserted in a dedicated later pass.
"""


def cite_keys(text: str) -> list[str]:
    """All keys referenced by \\cite / \\citet / \\citep commands, in order."""
    keys = []
    for group in _CITE_RE.findall(text):
        keys.extend(k.strip() for k in group.split(",") if k.strip())
    return keys


def count_paragraphs(text: str) -> int:
    """Blank-line-separated blocks containing prose (not only LaTeX commands)."""
    count = 0
    for block in re.split(r"\n\s*\n", text.strip()):
        lines = [ln for ln in block.splitlines() if ln.strip()]
        if any(not ln.lstrip().startswith(("\\", "%")) for ln in lines):
            count += 1
    return count


# --- sanitizer -----------------------------------------------------------------


def _math_mask(text: str) -> list[bool]:
    mask = [False] * len(text)
    for match in _MATH_SPAN_RE.finditer(text):
        for i in range(match.start(), match.end()):
            mask[i] = True
    return mask


def _sub_outside_math(text: str, pattern: re.Pattern, repl) -> str:
    mask = _math_mask(text)
    out = []
    last = 0
    for match in pattern.finditer(text):
        if any(mask[match.start() : match.end()]):
            continue
        out.append(text[last : match.start()])
        out.append(repl(match))
        last = match.end()
    out.append(text[last:])
    return "".join(out)


_ESCAPE_RE = re.compile(r"(?<!\\)([%&#_])")


def _sanitize_pass(text: str) -> str:
    text = _sub_outside_math(text, _CODE_RE, lambda m: "\\texttt{" + m.group(1) + "}")
    text = _sub_outside_math(text, _BOLD_RE, lambda m: "\\textbf{" + m.group(1) + "}")
    text = _sub_outside_math(text, _ITALIC_RE, lambda m: "\\textit{" + m.group(1) + "}")
    return _sub_outside_math(text, _ESCAPE_RE, lambda m: "\\" + m.group(1))


def sanitize_latex(text: str) -> str:
    """Convert stray Markdown to LaTeX and escape bare specials outside math.

    Markdown tables cannot be repaired mechanically, so they raise
    MarkdownTable for a re-prompt. Conversion runs to a fixpoint (unbalanced
    delimiters can re-pair after one pass), making the function idempotent.
    """
    for line in text.splitlines():
        if line.lstrip().startswith("|"):
            raise MarkdownTable(f"markdown table row detected: {line.strip()[:60]}")
    for _ in range(10):
        converted = _sanitize_pass(text)
        if converted == text:
            return text
        text = converted
    return text


# --- compile / watermark ----------------------------------------------------------


def check_cite_closure(project_dir: str | Path) -> None:
    """Mechanical closure check: every cited key must exist in references.bib."""
    project_dir = Path(project_dir)
    bib_text = (project_dir / "references.bib").read_text(encoding="utf-8")
    bib_keys = set(re.findall(r"@\w+\{([^,\s]+)\s*,", bib_text))
    sources = [project_dir / "main.tex"] + sorted((project_dir / "sections").glob("*.tex"))
    for source in sources:
        if not source.exists():
            continue
        for key in cite_keys(source.read_text(encoding="utf-8")):
            if key not in bib_keys:
                raise CompileError(f"undefined citation key: {key} (in {source.name})")


def compile_pdf(project_dir: str | Path) -> bytes:
    """latex -> bibliography -> latex x2 via subprocess; returns PDF bytes.

    Runs the mechanical cite-closure check first so undefined keys fail fast
    even before the toolchain is consulted.
    """
    project_dir = Path(project_dir)
    main_tex = project_dir / "main.tex"
    if not main_tex.exists() or not (project_dir / "references.bib").exists():
        raise SchemaError("project_dir", "main.tex and references.bib are required")
    check_cite_closure(project_dir)

    pdflatex = shutil.which("pdflatex")
    if pdflatex is None:
        raise ToolchainMissing("pdflatex not found on PATH")
    bibtex = shutil.which("bibtex")

    log_tail = ""
    passes = [[pdflatex, "-interaction=nonstopmode", "main.tex"]]
    if bibtex and cite_keys(main_tex.read_text(encoding="utf-8")):
        passes.append([bibtex, "main"])
    passes += [
        [pdflatex, "-interaction=nonstopmode", "main.tex"],
        [pdflatex, "-interaction=nonstopmode", "main.tex"],
    ]
    for argv in passes:
        proc = subprocess.run(argv, cwd=project_dir, capture_output=True, text=True, timeout=300)
        log_tail = (proc.stdout or "")[-2000:]
        if proc.returncode != 0 and argv[0] == pdflatex:
            raise CompileError(f"{Path(argv[0]).name} failed:\n{log_tail}")
    log_file = project_dir / "main.log"
    if log_file.exists():
        undefined = re.findall(r"Citation `([^']+)' .* undefined", log_file.read_text(errors="replace"))
        if undefined:
            raise CompileError(f"undefined citation key: {undefined[0]}")
    pdf_path = project_dir / "main.pdf"
    if not pdf_path.exists():
        raise CompileError(f"no PDF produced:\n{log_tail}")
    return pdf_path.read_bytes()


def apply_watermark(project: PaperProject, project_dir: str | Path | None = None) -> PaperProject:
    """Insert the visible AI-disclosure footer into the preamble; idempotent."""
    if project_dir is not None:
        main_tex = Path(project_dir) / "main.tex"
        if main_tex.exists():
            text = main_tex.read_text(encoding="utf-8")
            if WATERMARK_MARKER not in text:
                lines = text.split("\n")
                for i, line in enumerate(lines):
                    if line.startswith("\\documentclass"):
                        lines.insert(i + 1, WATERMARK_PREAMBLE.rstrip("\n"))
                        break
                else:
                    lines.insert(0, WATERMARK_PREAMBLE.rstrip("\n"))
                main_tex.write_text("\n".join(lines), encoding="utf-8")
    project.watermarked = True
    return project


# --- the writer ----------------------------------------------------------------------


@dataclass
class WriteOutcome:
    path: str
    project: PaperProject
    compiled: bool
    project_dir: str


class Writer:
    def __init__(
        self,
        gateway: Gateway,
        model_id: str,
        search_backend=None,
        max_attempts: int = 3,
        reflections: int = 1,
        citation_sections: Sequence[str] = DEFAULT_CITATION_SECTIONS,
        queries_per_section: int | None = None,
        temperature: float = 0.7,
    ):
        self.gateway = gateway
        self.model_id = model_id
        self.search_backend = search_backend
        self.max_attempts = max_attempts
        self.reflections = reflections
        self.citation_sections = tuple(citation_sections)
        # Scripted runs keep search volume bounded; None = one search per query.
        self.queries_per_section = queries_per_section
        self.temperature = temperature

    def _request(self, system: str, text: str, temperature: float | None = None) -> ChatRequest:
        return ChatRequest.user(
            system=system,
            text=text,
            model_id=self.model_id,
            temperature=self.temperature if temperature is None else temperature,
        )

    # -- drafting ---------------------------------------------------------------

    def draft_section(
        self,
        name: str,
        idea: Idea,
        results: list[RunResults],
        prior_sections: dict[str, str],
    ) -> str:
        """Draft one section as sanitized LaTeX honoring its structure contract."""
        if name not in SECTION_ORDER:
            raise SchemaError("name", f"unknown section {name!r}")
        tips = prompts.section_tips()[name]
        results_blob = json.dumps(
            {f"run_{r.run_index}": r.final_info for r in results}, indent=2, sort_keys=True
        )
        prior = "\n\n".join(f"% --- {k} ---\n{v}" for k, v in prior_sections.items()) or "(none yet)"
        text = SECTION_DRAFT_PROMPT.format(
            section=name,
            tips=tips,
            idea=json.dumps(idea.to_wire(), indent=2, ensure_ascii=False),
            results=results_blob,
            prior=prior,
        )
        numeric_anchors = _numeric_anchors(results) if name == "Results" else []

        def validator(reply: str) -> str:
            body = _strip_code_fence(reply)
            body = sanitize_latex(body)
            if cite_keys(body):
                raise SchemaError("citations", "do not cite in drafts; a later pass adds citations")
            _check_paragraphs(name, body)
            if numeric_anchors and not any(anchor in body for anchor in numeric_anchors):
                raise SchemaError(
                    "results", "section must reference actual final_info values"
                )
            return body

        return self.gateway.with_retries(
            self._request(prompts.load("writer_system"), text),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )

    def write_abstract(self, project: PaperProject, idea: Idea) -> str:
        """One continuous paragraph wrapped in the abstract environment."""
        missing = [s for s in SECTION_ORDER if s not in project.sections]
        if missing:
            raise SchemaError("sections", f"drafted sections required first: {missing}")
        full_paper = "\n\n".join(project.sections[s] for s in SECTION_ORDER)
        text = prompts.render(
            "abstract_prompt",
            abstract_tips=prompts.section_tips()["Abstract"],
            idea=json.dumps(idea.to_wire(), indent=2, ensure_ascii=False),
            full_paper_content=full_paper,
        )

        def validator(reply: str) -> str:
            body = _strip_code_fence(reply)
            match = _ABSTRACT_RE.search(body)
            if not match:
                raise SchemaError("abstract", "must be enclosed in the abstract environment")
            inner = match.group(1).strip()
            if re.search(r"\n\s*\n", inner):
                raise SchemaError("abstract", "must be one continuous paragraph")
            return f"\\begin{{abstract}}\n{inner}\n\\end{{abstract}}"

        return self.gateway.with_retries(
            self._request(prompts.load("writer_system"), text),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )

    def refine_section(
        self, project: PaperProject, name: str, round_index: int, total_rounds: int
    ) -> str:
        """One coherence/polish round over an existing section."""
        if name not in project.sections:
            raise SchemaError("name", f"section {name!r} has not been drafted")
        original = project.sections[name]
        original_cites = len(cite_keys(original))
        known_keys = set(project.bibliography) | set(cite_keys(original))
        context = "\n\n".join(
            f"% --- {k} ---\n{v}" for k, v in project.sections.items() if k != name
        )
        focus = (
            "Final round: polish wording, coherence, and citation placement."
            if round_index == total_rounds
            else "Strengthen structure, technical depth, and flow."
        )
        method_instruction = (
            "Formalize the core algorithm with precise mathematical notation"
            if name == "Method"
            else "Improve clarity and tighten the argument of this section"
        )
        text = prompts.render(
            "refinement",
            section=name,
            round_num=round_index,
            total_rounds=total_rounds,
            focus=focus,
            section_content=original,
            section_tips=prompts.section_tips()[name],
            other_sections_context=context,
            method_specific_instruction=method_instruction,
            error_list="\n".join(f"- {item}" for item in ERROR_CHECKLIST),
        )

        def validator(reply: str) -> str:
            body = sanitize_latex(_strip_code_fence(reply))
            new_keys = set(cite_keys(body))
            unknown = new_keys - known_keys
            if unknown:
                raise SchemaError(
                    "citations", f"refinement may not introduce unknown keys: {sorted(unknown)}"
                )
            content_removed = len(body) < len(original)
            if len(cite_keys(body)) < original_cites and not content_removed:
                raise SchemaError("citations", "existing citations must be preserved")
            if name == "Conclusion" and count_paragraphs(body) > 1:
                raise SchemaError("conclusion", "must remain one single paragraph")
            _check_paragraphs(name, body)
            return body

        return self.gateway.with_retries(
            self._request(prompts.load("writer_system"), text),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )

    # -- citations -----------------------------------------------------------------

    def generate_citation_queries(self, section_name: str, idea: Idea, snippet: str) -> list[str]:
        """6-10 specific search queries for a section, generic terms dropped."""
        if not snippet.strip():
            raise SchemaError("snippet", "must be non-empty")
        text = prompts.render(
            "citation_search",
            section=section_name,
            idea=json.dumps(idea.to_wire(), ensure_ascii=False),
            snippet=snippet,
        )

        def validator(reply: str) -> list[str]:
            raw = extract_json_block(reply)
            if not isinstance(raw, list) or not all(isinstance(q, str) for q in raw):
                raise SchemaError("queries", "expected a JSON array of query strings")
            kept = [q for q in raw if not _blocked_query(q)]
            if len(kept) < 6:
                raise SchemaError("queries", f"need 6-10 specific queries, got {len(kept)}")
            return kept[:10]

        return self.gateway.with_retries(
            self._request(prompts.load("citation_system"), text, temperature=0.0),
            validator,
            max_attempts=self.max_attempts,
            stage=STAGE,
        )

    def embed_citations(
        self,
        section_text: str,
        candidates: list[CitationCandidate],
        section_name: str = "section",
    ) -> str:
        """Embed every candidate citation; never accept invented keys."""
        if not candidates:
            return section_text
        candidate_keys = {c.cite_key for c in candidates}
        existing = set(cite_keys(section_text))
        paper_context = "\n".join(c.context_line() for c in candidates)
        text = prompts.render(
            "citation_add",
            section=section_name,
            section_content=section_text,
            paper_context=paper_context,
            num_papers=len(candidates),
        )

        def validator(reply: str) -> str:
            body = sanitize_latex(_strip_code_fence(reply))
            keys = set(cite_keys(body))
            invented = keys - candidate_keys - existing
            if invented:
                raise InventedKey(sorted(invented)[0])
            missing_existing = existing - keys
            if missing_existing:
                raise SchemaError(
                    "citations", f"existing citations dropped: {sorted(missing_existing)}"
                )
            uncited = candidate_keys - keys
            if uncited:
                raise SchemaError("citations", f"cite all new papers; missing {sorted(uncited)}")
            return body

        try:
            return self.gateway.with_retries(
                self._request(prompts.load("citation_system"), text, temperature=0.0),
                validator,
                max_attempts=self.max_attempts,
                stage=STAGE,
            )
        except ValidationExhausted as exc:
            if isinstance(exc.last_error, InventedKey):
                raise exc.last_error
            raise

    def _citation_pass(
        self, project: PaperProject, idea: Idea, keymaker: CiteKeyMaker
    ) -> None:
        if self.search_backend is None:
            logger.warning("no search backend; citation pass skipped")
            return
        for name in self.citation_sections:
            snippet = project.sections[name][:1500]
            queries = self.generate_citation_queries(name, idea, snippet)
            if self.queries_per_section is not None:
                queries = queries[: self.queries_per_section]
            candidates: list[CitationCandidate] = []
            seen_titles = {_normalize_title(c.title) for c in project.bibliography.values()}
            for query in queries:
                try:
                    hits = toolhub.search_papers(query, 2, self.search_backend, keymaker)
                except Exception as exc:
                    logger.warning("citation search failed (%s); skipping pass", exc)
                    return
                for hit in hits:
                    normalized = _normalize_title(hit.title)
                    if normalized in seen_titles:
                        continue
                    seen_titles.add(normalized)
                    candidates.append(hit)
                if len(candidates) >= MAX_CANDIDATES_PER_SECTION:
                    candidates = candidates[:MAX_CANDIDATES_PER_SECTION]
                    break
            if not candidates:
                continue
            embedded = self.embed_citations(project.sections[name], candidates, name)
            used = set(cite_keys(embedded))
            for candidate in candidates:
                if candidate.cite_key in used:
                    project.bibliography[candidate.cite_key] = candidate
            project.sections[name] = embedded

    # -- full pipeline ------------------------------------------------------------------

    def write(self, idea: Idea, exp_dir: str | Path, out_dir: str | Path) -> WriteOutcome:
        """Draft, refine, cite, sanitize, watermark, and compile the paper.

        Returns the compiled PDF path, or the main.tex path of a flagged
        source bundle when no TeX toolchain is present. Partial progress is
        persisted section-by-section so budget termination leaves artifacts.
        """
        results = collect_results(exp_dir)
        project_dir = Path(out_dir)
        sections_dir = project_dir / "sections"
        sections_dir.mkdir(parents=True, exist_ok=True)
        project = PaperProject()
        keymaker = CiteKeyMaker()

        for name in SECTION_ORDER:
            body = self.draft_section(name, idea, results, dict(project.sections))
            project.sections[name] = body
            _persist_section(sections_dir, name, body)

        for round_index in range(1, self.reflections + 1):
            for name in SECTION_ORDER:
                body = self.refine_section(project, name, round_index, self.reflections)
                project.sections[name] = body
                _persist_section(sections_dir, name, body)

        self._citation_pass(project, idea, keymaker)
        for name in self.citation_sections:
            _persist_section(sections_dir, name, project.sections[name])

        project.sections["Abstract"] = self.write_abstract(project, idea)

        (project_dir / "references.bib").write_text(
            "".join(project.bibliography[k].bibtex for k in sorted(project.bibliography)),
            encoding="utf-8",
        )
        (project_dir / "main.tex").write_text(
            _main_tex(idea.title, project, bool(project.bibliography)), encoding="utf-8"
        )
        apply_watermark(project, project_dir)
        check_cite_closure(project_dir)

        try:
            pdf_bytes = compile_pdf(project_dir)
        except ToolchainMissing:
            logger.warning("no TeX toolchain; emitting flagged source bundle")
            return WriteOutcome(
                path=str(project_dir / "main.tex"),
                project=project,
                compiled=False,
                project_dir=str(project_dir),
            )
        project.compiled_pdf = pdf_bytes
        return WriteOutcome(
            path=str(project_dir / "main.pdf"),
            project=project,
            compiled=True,
            project_dir=str(project_dir),
        )


# --- helpers ------------------------------------------------------------------------


def _strip_code_fence(reply: str) -> str:
    text = reply.strip()
    match = re.fullmatch(r"```(?:latex|tex)?\s*\n(.*?)\n?```", text, re.DOTALL)
    return match.group(1).strip() if match else text


def _check_paragraphs(name: str, body: str) -> None:
    rule = PARAGRAPH_RULES.get(name)
    if rule is None:
        return
    lo, hi = rule
    actual = count_paragraphs(body)
    if not lo <= actual <= hi:
        expected = str(lo) if lo == hi else f"{lo}-{hi}"
        raise SchemaError(
            "paragraphs", f"{name} must have {expected} paragraphs, found {actual}"
        )


def _numeric_anchors(results: list[RunResults]) -> list[str]:
    anchors: list[str] = []
    for run in results:
        for value in run.final_info.values():
            if isinstance(value, bool):
                continue
            if isinstance(value, (int, float)):
                anchors.extend({str(value), f"{value:.2f}", f"{value:.1f}"})
    return anchors


def _blocked_query(query: str) -> bool:
    lowered = query.lower().strip()
    if lowered in QUERY_BLOCKLIST_BARE:
        return True
    if any(term in lowered for term in QUERY_BLOCKLIST_SUBSTRINGS):
        return True
    return bool(_AI_WORD_RE.search(query))


def _normalize_title(title: str) -> str:
    return re.sub(r"[^a-z0-9]+", " ", title.lower()).strip()


def _persist_section(sections_dir: Path, name: str, body: str) -> None:
    (sections_dir / f"{name}.tex").write_text(body + "\n", encoding="utf-8")


def _main_tex(title: str, project: PaperProject, has_bibliography: bool) -> str:
    lines = [
        "\\documentclass{article}",
        "\\usepackage[margin=1in]{geometry}",
        f"\\title{{{title}}}",
        "\\author{Automated research pipeline}",
        "\\date{}",
        "\\begin{document}",
        "\\maketitle",
        project.sections.get("Abstract", ""),
    ]
    lines += [f"\\input{{sections/{name}}}" for name in SECTION_ORDER if name in project.sections]
    if has_bibliography:
        lines += ["\\bibliographystyle{plain}", "\\bibliography{references}"]
    lines.append("\\end{document}")
    return "\n".join(lines) + "\n"
