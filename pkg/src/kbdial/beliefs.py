"""Hand-crafted belief tracking over slot values from token overlap."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .kb import KbTable


@dataclass
class BeliefState:
    """Per-slot value distributions plus per-slot know-probabilities.

    ``dists[j]`` is a distribution over slot ``j``'s vocabulary (may be empty
    when the column has no observed values) and ``know[j]`` is the tracked
    probability that the user actually knows slot ``j``.
    """

    dists: list[np.ndarray]
    know: np.ndarray
    turn: int = 0

    def copy(self) -> "BeliefState":
        return BeliefState([d.copy() for d in self.dists], self.know.copy(), self.turn)

    def validate(self) -> None:
        for j, d in enumerate(self.dists):
            if d.size and not np.isclose(d.sum(), 1.0):
                raise ValueError(f"slot {j} distribution does not sum to 1")
            if d.size and d.min() < 0:
                raise ValueError(f"slot {j} distribution has negative mass")
        if ((self.know < 0) | (self.know > 1)).any():
            raise ValueError("know-probabilities must lie in [0, 1]")

    def entropies(self) -> np.ndarray:
        from .softkb import entropy

        return np.array([entropy(d) for d in self.dists])


def match_score(utterance_tokens: Iterable[str], value_tokens: Sequence[str]) -> float:
    """Fraction of the value's distinct tokens present in the utterance."""
    value_set = set(value_tokens)
    if not value_set:
        return 0.0
    return len(set(utterance_tokens) & value_set) / len(value_set)


@dataclass
class HandTrackerConfig:
    """Per-component additive-update weights for the token-match tracker."""

    # Weight on the per-value token-match score. Large enough that one clean
    # answer dominates the uniform prior, small enough that a second answer
    # still moves the distribution, so repeated questions average over noise.
    update_weight: float = 2.0
    # Weights on the slot-name match and the just-requested indicator. Both
    # apply uniformly across a slot's values, so at full strength they drown
    # the value evidence itself: the matched:unmatched ratio then caps below
    # 2 however clean the match. Kept small they still nudge the slot under
    # discussion (and support dialogues where the value went unheard) without
    # burying the answer.
    name_weight: float = 0.1
    request_weight: float = 0.05

    def __post_init__(self) -> None:
        if self.update_weight <= 0:
            raise ValueError("update_weight must be positive")
        if self.name_weight < 0 or self.request_weight < 0:
            raise ValueError("name_weight and request_weight must be >= 0")


class HandTracker:
    """Token-overlap tracker: additive evidence, renormalized each turn.

    For each slot the per-value evidence is the weighted token match score,
    plus smaller uniform boosts for a slot-name match and for the slot having
    just been requested. A requested slot whose values all scored zero drops
    its know-probability to 0 for the turn; every other case sets it back
    to 1.
    """

    def __init__(self, kb: KbTable, cfg: HandTrackerConfig | None = None):
        from .text import tokenize

        self.kb = kb
        self.cfg = cfg or HandTrackerConfig()
        # token -> [(value_id, 1/|value_tokens|)] per slot, for fast scoring
        self._value_index: list[dict[str, list[tuple[int, float]]]] = []
        for j in range(kb.n_slots):
            index: dict[str, list[tuple[int, float]]] = {}
            for vid, value in enumerate(kb.vocabs[j]):
                toks = set(tokenize(value))
                if not toks:
                    continue
                w = 1.0 / len(toks)
                for tok in toks:
                    index.setdefault(tok, []).append((vid, w))
            self._value_index.append(index)
        self._slot_tokens = [set(tokenize(name)) for name in kb.display_names]

    def reset(self) -> BeliefState:
        dists = [p.copy() for p in self.kb.priors]
        return BeliefState(dists, np.ones(self.kb.n_slots), turn=0)

    def value_scores(self, j: int, tokens: Iterable[str]) -> np.ndarray:
        scores = np.zeros(self.kb.vocab_size(j))
        index = self._value_index[j]
        for tok in set(tokens):
            for vid, w in index.get(tok, ()):
                scores[vid] += w
        return scores

    def update(self, state: BeliefState, tokens: Sequence[str],
               requested: int | None = None) -> BeliefState:
        token_set = set(tokens)
        cfg = self.cfg
        dists: list[np.ndarray] = []
        know = np.ones(self.kb.n_slots)
        for j in range(self.kb.n_slots):
            scores = self.value_scores(j, token_set)
            name_score = match_score(token_set, self._slot_tokens[j])
            req = 1.0 if requested == j else 0.0
            unnorm = (state.dists[j] + cfg.update_weight * scores
                      + cfg.name_weight * name_score + cfg.request_weight * req)
            total = unnorm.sum()
            dists.append(unnorm / total if total > 0 else unnorm)
            if requested == j and (scores.size == 0 or scores.max() == 0.0):
                know[j] = 0.0
        return BeliefState(dists, know, turn=state.turn + 1)
