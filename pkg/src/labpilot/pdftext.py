"""Minimal PDF text extraction.

Pulls show-text operators (Tj / TJ / ' / ") out of page content streams,
inflating FlateDecode streams with zlib. This covers simply-encoded PDFs
(standard fonts, WinAnsi/Latin-1); layout reconstruction and subset-font
CMap decoding are out of scope — prompts need content, not typography.
"""

from __future__ import annotations

import base64
import re
import zlib

from .errors import ParseError

_STREAM_MARK_RE = re.compile(rb"stream\r?\n")
_TEXT_OP_RE = re.compile(
    rb"\((?:[^()\\]|\\.)*\)\s*(?:Tj|')"  # (string) Tj   or   (string) '
    rb"|\[(?:[^\]\\]|\\.)*\]\s*TJ"  # [(a) -120 (b)] TJ
    rb"|ET",
    re.DOTALL,
)
_STRING_RE = re.compile(rb"\((?:[^()\\]|\\.)*\)", re.DOTALL)

_ESCAPES = {
    b"n": b"\n",
    b"r": b"\r",
    b"t": b"\t",
    b"b": b"\b",
    b"f": b"\f",
    b"(": b"(",
    b")": b")",
    b"\\": b"\\",
}


def _unescape(raw: bytes) -> bytes:
    out = bytearray()
    i = 0
    while i < len(raw):
        ch = raw[i : i + 1]
        if ch == b"\\" and i + 1 < len(raw):
            nxt = raw[i + 1 : i + 2]
            if nxt in _ESCAPES:
                out += _ESCAPES[nxt]
                i += 2
                continue
            if nxt.isdigit():
                octal = raw[i + 1 : i + 4]
                digits = re.match(rb"[0-7]{1,3}", octal)
                if digits:
                    out.append(int(digits.group(0), 8) & 0xFF)
                    i += 1 + len(digits.group(0))
                    continue
            i += 1
            continue
        out += ch
        i += 1
    return bytes(out)


def _streams(data: bytes):
    """Yield (object-dict bytes, stream bytes) pairs; dicts may be nested."""
    for mark in _STREAM_MARK_RE.finditer(data):
        end = data.find(b"endstream", mark.end())
        if end == -1:
            continue
        obj_start = data.rfind(b"obj", 0, mark.start())
        head_start = obj_start if obj_start != -1 else max(0, mark.start() - 600)
        yield data[head_start : mark.start()], data[mark.end() : end]


def _decode_stream(dict_part: bytes, stream: bytes) -> bytes | None:
    """Apply the declared filter chain; None when a filter is unsupported."""
    filters = re.findall(rb"/(ASCII85Decode|ASCIIHexDecode|FlateDecode|\w+Decode)", dict_part)
    for name in filters:
        try:
            if name == b"ASCII85Decode":
                stream = base64.a85decode(stream.strip(), adobe=True)
            elif name == b"ASCIIHexDecode":
                stream = bytes.fromhex(
                    stream.replace(b">", b"").decode("ascii").replace("\n", "").replace(" ", "")
                )
            elif name == b"FlateDecode":
                stream = zlib.decompress(stream.rstrip(b"\r\n"))
            else:
                return None
        except (ValueError, zlib.error):
            return None
    return stream


def extract_text(data: bytes) -> str:
    """Extract embedded text from PDF bytes; raises ParseError if not a PDF."""
    if not data.startswith(b"%PDF"):
        raise ParseError("pdf", "missing %PDF header")
    pieces: list[str] = []
    for dict_part, raw in _streams(data):
        stream = _decode_stream(dict_part, raw)
        if stream is None:
            continue
        if b"Tj" not in stream and b"TJ" not in stream and b"'" not in stream:
            continue
        for match in _TEXT_OP_RE.finditer(stream):
            op = match.group(0)
            if op == b"ET":
                if pieces and pieces[-1] != "\n":
                    pieces.append("\n")
                continue
            strings = _STRING_RE.findall(op)
            for raw in strings:
                text = _unescape(raw[1:-1]).decode("latin-1", errors="replace")
                if text:
                    pieces.append(text)
            if op.rstrip().endswith((b"Tj", b"'", b"TJ")):
                pieces.append(" ")
    merged = "".join(pieces)
    merged = re.sub(r"[ \t]+", " ", merged)
    merged = re.sub(r" ?\n ?", "\n", merged)
    return merged.strip()
