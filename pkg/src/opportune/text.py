"""Tokenization shared by enrichment and matching.

Rules: split on non-alphanumeric characters and on lower-to-upper camelCase
boundaries, lowercase everything, drop tokens shorter than 2 characters.
No stemming; enrichment is what supplies semantic overlap.
"""

from __future__ import annotations

import re

_SPLIT = re.compile(r"[^0-9A-Za-z]+")
_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def tokenize(text: str) -> tuple[str, ...]:
    tokens = []
    for chunk in _SPLIT.split(text):
        if not chunk:
            continue
        for part in _CAMEL.split(chunk):
            part = part.lower()
            if len(part) >= 2:
                tokens.append(part)
    return tuple(tokens)


def phrase(text: str) -> str:
    """Normalized multi-word form: tokens joined by single spaces."""
    return " ".join(tokenize(text))
