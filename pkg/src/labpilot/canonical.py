"""Canonical JSON serialization: UTF-8, sorted keys, LF line endings.

This is the session persistence format and the service wire schema, so the
byte output must be stable for identical values.
"""

from __future__ import annotations

import json
from typing import Any


def dumps(value: Any) -> str:
    """Serialize to canonical JSON text (sorted keys, 2-space indent, trailing LF)."""
    return json.dumps(value, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def dump_bytes(value: Any) -> bytes:
    return dumps(value).encode("utf-8")


def loads(text: str | bytes) -> Any:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return json.loads(text)
