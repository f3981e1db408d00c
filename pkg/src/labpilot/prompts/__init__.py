"""Prompt template store.

Templates live as plain-text assets and are rendered by literal placeholder
substitution only: each ``{name}`` token is replaced in a single pass over the
template, and nothing else in the text is touched. Golden tests pin module
renders against independent substitution into the same assets.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Mapping

_ASSETS = resources.files(__name__) / "assets"

# Parsed lazily from the section-tips asset: section name -> tip text.
_SECTION_HEADER_RE = re.compile(r"^(\w+):\s*$")


@lru_cache(maxsize=None)
def load(name: str) -> str:
    """Return the raw template text for an asset name (without .txt)."""
    return (_ASSETS / f"{name}.txt").read_text(encoding="utf-8")


def list_templates() -> list[str]:
    return sorted(
        entry.name[: -len(".txt")]
        for entry in _ASSETS.iterdir()
        if entry.name.endswith(".txt")
    )


def render(name: str, values: Mapping[str, object] | None = None, **kwargs: object) -> str:
    """Substitute ``{key}`` tokens in one pass; every provided key must occur."""
    mapping = {**(values or {}), **kwargs}
    template = load(name)
    if not mapping:
        return template
    for key in mapping:
        if "{" + key + "}" not in template:
            raise KeyError(f"template {name!r} has no placeholder {{{key}}}")
    pattern = re.compile("|".join(re.escape("{" + k + "}") for k in mapping))
    return pattern.sub(lambda m: str(mapping[m.group(0)[1:-1]]), template)


@lru_cache(maxsize=1)
def section_tips() -> dict[str, str]:
    """Per-section writing tips parsed from the tips asset.

    A column-0 line like ``Introduction:`` starts a section; everything up to
    the next header is that section's tip text.
    """
    tips: dict[str, list[str]] = {}
    current: str | None = None
    for line in load("section_tips").split("\n"):
        match = _SECTION_HEADER_RE.match(line)
        if match:
            current = match.group(1)
            tips[current] = []
        elif current is not None:
            tips[current].append(line)
    return {name: "\n".join(body).strip("\n") for name, body in tips.items()}
