"""Bag-of-n-grams featurizer feeding the neural belief tracker."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .kb import KbTable
from .text import bigrams, tokenize

_PLACEHOLDER_RE = re.compile(r"\{[a-z_]+\}")


def _segment_ngrams(text: str) -> list[str]:
    """Unigrams and bigrams of each placeholder-free segment of a template."""
    grams: list[str] = []
    for segment in _PLACEHOLDER_RE.split(text):
        toks = tokenize(segment)
        grams.extend(toks)
        grams.extend(bigrams(toks))
    return grams


@dataclass
class FeatureVocab:
    """Ordered n-gram vocabulary with an index for featurization."""

    grams: tuple[str, ...]

    def __post_init__(self) -> None:
        self.index = {g: k for k, g in enumerate(self.grams)}

    def __len__(self) -> int:
        return len(self.grams)

    def featurize(self, tokens: Sequence[str]) -> np.ndarray:
        """Count vector over the vocabulary; unknown n-grams are dropped."""
        x = np.zeros(len(self.grams), dtype=np.float64)
        for g in list(tokens) + bigrams(list(tokens)):
            k = self.index.get(g)
            if k is not None:
                x[k] += 1.0
        return x

    def to_list(self) -> list[str]:
        return list(self.grams)

    @classmethod
    def from_list(cls, grams: Iterable[str]) -> "FeatureVocab":
        return cls(tuple(grams))


def build_vocab(corpus: Iterable[str], kb: KbTable) -> FeatureVocab:
    """Union of template-corpus n-grams, slot display names, and KB values.

    All entries are unigrams or bigrams; order is first occurrence, so the
    vocabulary is deterministic for a fixed corpus and table.
    """
    seen: dict[str, None] = {}

    def absorb(grams: Iterable[str]) -> None:
        for g in grams:
            seen.setdefault(g)

    for template in corpus:
        absorb(_segment_ngrams(template))
    for name in kb.display_names:
        toks = tokenize(name)
        absorb(toks)
        absorb(bigrams(toks))
    for vocab in kb.vocabs:
        for value in vocab:
            toks = tokenize(value)
            absorb(toks)
            absorb(bigrams(toks))
    return FeatureVocab(tuple(seen))
