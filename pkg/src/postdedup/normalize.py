"""Text cleaning, canonical fingerprinting, and exact-duplicate grouping.

The cleaning pipeline runs five steps in a fixed order: strip HTML tags,
decode character references, split camelCase boundaries, filter the
character set, collapse repeated punctuation and whitespace. The composed
pipeline is applied until the text stops changing, which makes
`clean_text` idempotent even when one step uncovers work for an earlier
one (e.g. filtering "&am™p;" down to "&amp;").
"""

from __future__ import annotations

import hashlib
import html.entities
import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable

from .errors import FingerprintCollision

DEFAULT_KEEP_PUNCT = frozenset('.,;:!?()/-&\'+%"')

# A hard ceiling on pipeline passes; real inputs converge in 2-3.
_MAX_PASSES = 32

_TAG_RE = re.compile(r"<[^>]*>")
_ENTITY_RE = re.compile(r"&(#[0-9]+|#[xX][0-9a-fA-F]+|[a-zA-Z][a-zA-Z0-9]*);")
_PUNCT_RUN_RE = re.compile(r"(\S)\1+")
_WS_RUN_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class NormalizeConfig:
    ascii_only: bool = False
    keep_punct: frozenset[str] = DEFAULT_KEEP_PUNCT


@dataclass(frozen=True)
class CanonicalText:
    """Cleaned text plus the case-insensitive 128-bit fingerprint of it."""

    text: str
    fingerprint: str  # 32 hex chars: MD5 of the UTF-8 lowercased text
    source_id: str


@dataclass(frozen=True)
class ExactGroup:
    representative_id: str  # lexicographic minimum of member_ids
    member_ids: frozenset[str]


def strip_html(text: str) -> str:
    """Replace every complete `<`...`>` span with one space.

    A `<` with no closing `>` before end of string is left verbatim, so
    plain-text inequalities like "3 < 4" survive.
    """
    return _TAG_RE.sub(" ", text)


def _decode_reference(match: re.Match) -> str:
    body = match.group(1)
    if body.startswith("#"):
        try:
            code_point = int(body[2:], 16) if body[1] in "xX" else int(body[1:])
        except ValueError:
            return match.group(0)
        # Reject surrogates and out-of-range values rather than emitting
        # text that cannot be UTF-8 encoded.
        if 0 <= code_point <= 0x10FFFF and not 0xD800 <= code_point <= 0xDFFF:
            return chr(code_point)
        return match.group(0)
    return html.entities.html5.get(body + ";", match.group(0))


def decode_entities(text: str) -> str:
    """Decode named and numeric HTML character references to code points.

    Only semicolon-terminated references are decoded; unknown references
    (and legacy semicolon-less forms) pass through verbatim. Decoding
    repeats until the text is stable so that doubly-escaped input
    ("&amp;amp;") canonicalizes the same as its visible form.
    """
    while True:
        decoded = _ENTITY_RE.sub(_decode_reference, text)
        if decoded == text:
            return decoded
        text = decoded


def split_camel_case(text: str) -> str:
    """Insert a space between each lowercase letter followed by an uppercase one."""
    if len(text) < 2:
        return text
    out = [text[0]]
    for prev, cur in zip(text, text[1:]):
        if prev.islower() and cur.isupper():
            out.append(" ")
        out.append(cur)
    return "".join(out)


def filter_charset(
    text: str, ascii_only: bool = False, keep_punct: frozenset[str] = DEFAULT_KEEP_PUNCT
) -> str:
    """Drop characters outside letters, digits, whitespace, and keep_punct.

    With ascii_only, letters/digits/whitespace are restricted to ASCII.
    Whitespace (including tabs and newlines) is kept in both modes and
    collapsed later; non-whitespace control and format characters are
    always removed. Removal deletes the character without inserting a
    space.
    """
    if not keep_punct:
        raise ValueError("keep_punct must not be empty")
    out = []
    for ch in text:
        if ch in keep_punct:
            out.append(ch)
        elif ch.isspace():
            if not ascii_only or ch.isascii():
                out.append(ch)
        elif ascii_only:
            if ch.isascii() and ch.isalnum():
                out.append(ch)
        elif not unicodedata.category(ch).startswith("C") and (ch.isalpha() or ch.isdigit()):
            out.append(ch)
    return "".join(out)


def collapse_punct_and_ws(text: str) -> str:
    """Collapse runs of one punctuation character to one, whitespace to one space, trim."""

    def shrink(match: re.Match) -> str:
        ch = match.group(1)
        return ch if not ch.isalnum() else match.group(0)

    text = _PUNCT_RUN_RE.sub(shrink, text)
    return _WS_RUN_RE.sub(" ", text).strip()


def _pipeline_once(text: str, config: NormalizeConfig) -> str:
    text = strip_html(text)
    text = decode_entities(text)
    text = split_camel_case(text)
    text = filter_charset(text, config.ascii_only, config.keep_punct)
    return collapse_punct_and_ws(text)


def clean_text(text: str, config: NormalizeConfig | None = None) -> str:
    """Run the full cleaning pipeline to a fixed point."""
    config = config or NormalizeConfig()
    for _ in range(_MAX_PASSES):
        cleaned = _pipeline_once(text, config)
        if cleaned == text:
            return cleaned
        text = cleaned
    return text


def fingerprint_text(text: str) -> str:
    """128-bit case-insensitive fingerprint, stable across runs and platforms."""
    return hashlib.md5(text.lower().encode("utf-8")).hexdigest()


def canonicalize(posting, config: NormalizeConfig | None = None) -> CanonicalText:
    """Clean `title + " " + description`; fingerprint the lowercased result.

    The stored text preserves case; only the fingerprint lowercases, so
    capitalization-only variants land in the same exact group.
    """
    raw = (posting.title or "") + " " + (posting.description or "")
    text = clean_text(raw, config)
    return CanonicalText(text=text, fingerprint=fingerprint_text(text), source_id=posting.id)


def group_exact(canonicals: Iterable[CanonicalText]) -> list[ExactGroup]:
    """Partition canonical texts by fingerprint; singletons included.

    Groups are returned sorted by representative id. Raises
    FingerprintCollision if two members share a fingerprint but differ in
    lowercased text (never expected at 128 bits).
    """
    by_fp: dict[str, list[CanonicalText]] = {}
    for canonical in canonicals:
        by_fp.setdefault(canonical.fingerprint, []).append(canonical)
    groups = []
    for members in by_fp.values():
        reference = members[0].text.lower()
        for other in members[1:]:
            if other.text.lower() != reference:
                raise FingerprintCollision(members[0].source_id, other.source_id)
        ids = frozenset(m.source_id for m in members)
        groups.append(ExactGroup(representative_id=min(ids), member_ids=ids))
    groups.sort(key=lambda g: g.representative_id)
    return groups


__all__ = [
    "DEFAULT_KEEP_PUNCT",
    "NormalizeConfig",
    "CanonicalText",
    "ExactGroup",
    "strip_html",
    "decode_entities",
    "split_camel_case",
    "filter_charset",
    "collapse_punct_and_ws",
    "clean_text",
    "fingerprint_text",
    "canonicalize",
    "group_exact",
]
