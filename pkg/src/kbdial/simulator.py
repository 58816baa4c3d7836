"""Agenda-based user simulator with template NLG and controllable noise."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np

from .kb import MISSING, KbTable
from .policy import Action
from .text import tokenize

_REQUIRED_USER_ACTS = ("open_with_constraints", "open_no_constraints",
                       "constraint_phrase", "provide_value", "dont_know",
                       "off_topic")
_REQUIRED_AGENT_ACTS = ("request", "inform", "greet")


def load_templates(path: str | None = None) -> dict:
    """Load a template pack; defaults to the bundled movie-domain pack."""
    if path is None:
        raw = resources.files("kbdial").joinpath("data/templates.json").read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    pack = json.loads(raw)
    for act in _REQUIRED_USER_ACTS:
        entries = pack.get("user", {}).get(act)
        if not entries or (act != "constraint_join" and len(entries) < 3):
            raise ValueError(f"template pack needs >= 3 user '{act}' templates")
    for act in _REQUIRED_AGENT_ACTS:
        if len(pack.get("agent", {}).get(act, [])) < 3:
            raise ValueError(f"template pack needs >= 3 agent '{act}' templates")
    return pack


@dataclass(frozen=True)
class UserGoal:
    """A target row plus the subset of slot values the user knows."""

    target: int
    known_values: Mapping[int, int]  # slot -> vocabulary id of the true value

    def knows(self, slot: int) -> bool:
        return slot in self.known_values


@dataclass
class NoiseConfig:
    """Channel noise applied to simulated user utterances.

    ``p_corrupt``: chance a mentioned value loses tokens (at least one token
    always survives). ``p_substitute``: chance a mentioned value is swapped
    for a different value of the same slot. ``p_irrelevant``: chance a whole
    response is replaced by an off-topic utterance.
    """

    p_corrupt: float = 0.0
    p_substitute: float = 0.0
    p_irrelevant: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_corrupt", "p_substitute", "p_irrelevant"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


#: A mild noise setting used by training demos and the acceptance runs.
MODERATE_NOISE = NoiseConfig(p_corrupt=0.15, p_substitute=0.05,
                             p_irrelevant=0.1)


@dataclass
class RewardConfig:
    """Episode scoring: graded success on the target's rank in the inform."""

    top_r: int = 5
    turn_penalty: float = -0.1
    fail_reward: float = -1.0
    max_turns: int = 10
    gamma: float = 0.99

    def __post_init__(self) -> None:
        if self.top_r < 1 or self.max_turns < 1:
            raise ValueError("top_r and max_turns must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


def score_inform(goal: UserGoal, results: list[int],
                 cfg: RewardConfig) -> tuple[float, bool, int | None]:
    """(terminal reward, success, 1-based rank) for an inform."""
    if goal.target in results:
        rank = results.index(goal.target) + 1
        return max(0.0, 2.0 * (1.0 - (rank - 1) / cfg.top_r)), True, rank
    return cfg.fail_reward, False, None


def discounted_return(rewards: list[float], gamma: float) -> float:
    """sum_t gamma^t * r_t (t zero-based)."""
    return float(sum(r * gamma ** t for t, r in enumerate(rewards)))


class UserSimulator:
    """Samples goals and produces noisy templated responses to agent actions."""

    def __init__(self, kb: KbTable, templates: dict | None = None,
                 noise: NoiseConfig | None = None,
                 reward: RewardConfig | None = None,
                 p_know: float = 0.8):
        if not 0.0 <= p_know <= 1.0:
            raise ValueError("p_know must lie in [0, 1]")
        self.kb = kb
        self.templates = templates or load_templates()
        self.noise = noise or NoiseConfig()
        self.reward = reward or RewardConfig()
        self.p_know = p_know

    # -- goal sampling ------------------------------------------------------

    def sample_goal(self, rng: np.random.Generator) -> UserGoal:
        """Uniform target; each slot known with probability ``p_know``.

        Known values come from the pre-masking ground truth, so the user can
        know the value of a cell the agent's table shows as missing. A slot
        whose truth value is itself unavailable cannot be known.
        """
        target = int(rng.integers(0, self.kb.n_rows))
        known: dict[int, int] = {}
        for j in range(self.kb.n_slots):
            truth = int(self.kb.truth_ids[target, j])
            if truth != MISSING and rng.random() < self.p_know:
                known[j] = truth
        return UserGoal(target, known)

    # -- NLG helpers ---------------------------------------------------------

    def _pick(self, side: str, act: str, rng: np.random.Generator) -> str:
        options = self.templates[side][act]
        return options[int(rng.integers(0, len(options)))]

    def _value_text(self, slot: int, vid: int, rng: np.random.Generator) -> str:
        """Render a value mention, applying substitution and token-drop noise."""
        if (self.noise.p_substitute > 0.0 and self.kb.vocab_size(slot) > 1
                and rng.random() < self.noise.p_substitute):
            swap = int(rng.integers(0, self.kb.vocab_size(slot) - 1))
            vid = swap if swap < vid else swap + 1
        text = self.kb.value_string(slot, vid)
        toks = tokenize(text)
        if len(toks) > 1 and rng.random() < self.noise.p_corrupt:
            keep = 1 + int(rng.integers(0, len(toks) - 1))
            kept = sorted(rng.choice(len(toks), size=keep, replace=False))
            text = " ".join(toks[k] for k in kept)
        return text

    def _constraint_text(self, goal: UserGoal, slots: list[int],
                         rng: np.random.Generator) -> str:
        phrases = []
        for j in slots:
            phrase = self._pick("user", "constraint_phrase", rng)
            phrases.append(phrase.format(
                value=self._value_text(j, goal.known_values[j], rng),
                slot=self.kb.display_names[j]))
        return self.templates["user"].get("constraint_join", " and ").join(phrases)

    def _off_topic(self, rng: np.random.Generator) -> tuple[str, dict]:
        return self._pick("user", "off_topic", rng), {"kind": "off_topic"}

    # -- dialogue turns --------------------------------------------------------

    def opening(self, goal: UserGoal, rng: np.random.Generator) -> tuple[str, dict]:
        """First user turn: one or two of the known slots, like a real
        searcher who leads with a couple of constraints and answers follow-up
        questions for the rest."""
        if self.noise.p_irrelevant > 0.0 and rng.random() < self.noise.p_irrelevant:
            return self._off_topic(rng)
        known = sorted(goal.known_values)
        if not known:
            return self._pick("user", "open_no_constraints", rng), {
                "kind": "open", "slots": {}}
        size = 1 + int(rng.integers(0, min(len(known), 2)))
        slots = sorted(int(s) for s in rng.choice(known, size=size, replace=False))
        text = self._pick("user", "open_with_constraints", rng).format(
            constraints=self._constraint_text(goal, slots, rng))
        return text, {"kind": "open",
                      "slots": {j: goal.known_values[j] for j in slots}}

    def respond(self, goal: UserGoal, action: Action,
                rng: np.random.Generator) -> tuple[str, dict]:
        """Answer a slot request (informs never receive a reply)."""
        if action.kind != "request":
            raise ValueError("the user only responds to slot requests")
        if self.noise.p_irrelevant > 0.0 and rng.random() < self.noise.p_irrelevant:
            return self._off_topic(rng)
        j = int(action.slot)  # type: ignore[arg-type]
        if not goal.knows(j):
            return self._pick("user", "dont_know", rng), {
                "kind": "dont_know", "slot": j}
        vid = goal.known_values[j]
        text = self._pick("user", "provide_value", rng).format(
            value=self._value_text(j, vid, rng),
            slot=self.kb.display_names[j])
        return text, {"kind": "value", "slot": j, "value": vid}

    # -- agent-side rendering ---------------------------------------------------

    def render_agent_action(self, action: Action, rng: np.random.Generator) -> str:
        if action.kind == "request":
            return self._pick("agent", "request", rng).format(
                slot=self.kb.display_names[int(action.slot)])  # type: ignore[arg-type]
        names = ", ".join(self.kb.entity_names[i] for i in action.results or ())
        return self._pick("agent", "inform", rng).format(results=names)
