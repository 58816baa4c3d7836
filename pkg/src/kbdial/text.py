"""Tokenization helpers shared by the belief trackers and the n-gram featurizer."""

from __future__ import annotations

import re

# Alphanumeric runs; dots / hyphens / apostrophes survive when flanked by
# alphanumerics so ratings ("6.2"), certificates ("pg-13") and contractions
# stay single tokens.
_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[.'\-][a-z0-9]+)*")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into tokens."""
    return _TOKEN_RE.findall(text.lower())


def normalize_value(text: str) -> str:
    """Canonical form for KB values: lowercased, whitespace collapsed."""
    return " ".join(text.lower().split())


def bigrams(tokens: list[str]) -> list[str]:
    """Adjacent token pairs joined by a single space."""
    return [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
