"""Dialogue agent variants: rule policies, learned policies, and the oracle.

Every variant informs from the soft row posterior; variants differ in what
drives action selection (nothing KB-side, hard lookup counts, or the full
soft-lookup summary) and in whether the tracker and policy are hand-crafted
or learned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import nnet, softkb
from .beliefs import BeliefState, HandTracker, HandTrackerConfig
from .features import FeatureVocab, build_vocab
from .kb import KbTable, hard_kb_lookup
from .neural_tracker import NeuralTracker
from .nnet import ModelConfig, ParamStore
from .policy import (Action, PolicyNet, RulePolicyConfig, action_space,
                     greedy_inform, rule_select, sample_inform)
from .softkb import SummaryState, posterior, summarize

VARIANTS = {
    "rule-no-kb": ("rule", "nokb"),
    "rule-hard": ("rule", "hard"),
    "rule-soft": ("rule", "soft"),
    "rl-no-kb": ("rl", "nokb"),
    "rl-hard": ("rl", "hard"),
    "rl-soft": ("rl", "soft"),
    "e2e": ("e2e", "soft"),
    "max": ("max", "soft"),
}

_ALIASES = {
    "rule-no-kb-kb": "rule-no-kb",
    "rule-hard-kb": "rule-hard",
    "rule-soft-kb": "rule-soft",
    "rl-no-kb-kb": "rl-no-kb",
    "rl-hard-kb": "rl-hard",
    "rl-soft-kb": "rl-soft",
}

# Grid-tuned against the simulator on the small split, moderate noise
# (demos/03_tune_rule_thresholds.py).  q_max=1 asks about each slot at most
# once: one answer per slot already moves its belief a lot, so a fresh slot
# always buys more than averaging a noisy one.  The soft variant stops early
# once the entity posterior sharpens below alpha_r; the no-KB variant has no
# posterior signal, so it works through the slots the opening turn left
# uncertain and stops only on exhaustion.  The hard variant's stop signal is
# the retrieved-result count, which corrupted answers poison: one wrong
# constraint empties the lookup, so its best thresholds keep it asking
# nearly as deep as the no-KB rule.
DEFAULT_RULE_CONFIGS = {
    "rule-soft": RulePolicyConfig(alpha_r=3.0, alpha_t=0.8, beta=0.9,
                                  q_max=1, prefer="max"),
    "rule-hard": RulePolicyConfig(alpha_r=0.6, alpha_t=0.3, beta=0.3,
                                  q_max=1, prefer="max"),
    "rule-no-kb": RulePolicyConfig(alpha_r=0.0, alpha_t=1.5, beta=0.9,
                                   q_max=1, prefer="min"),
    # The oracle pins exact values, so its posterior collapses fast; it
    # informs once the posterior entropy is essentially zero and never
    # needs to hedge against noise.
    "max": RulePolicyConfig(alpha_r=0.05, alpha_t=0.3, beta=0.5, q_max=1,
                            prefer="max"),
}


def canonical_variant(name: str) -> str:
    name = name.strip().lower()
    name = _ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ValueError(f"unknown agent variant: {name!r}")
    return name


@dataclass
class StepOutcome:
    """Everything a single agent decision produced."""

    action: Action
    log_pi: float | None = None
    log_mu: float | None = None
    policy_input: np.ndarray | None = None
    summary: SummaryState | None = None


class DialogueAgent:
    """Common state machine: observe a user turn, then pick an action."""

    variant: str

    def __init__(self, kb: KbTable, top_r: int = 5):
        self.kb = kb
        self.top_r = top_r
        self.beliefs: BeliefState | None = None
        self.posterior_probs: np.ndarray | None = None
        self.request_counts = np.zeros(kb.n_slots, dtype=np.int64)
        self.prev_action: int | None = None
        self.turn = 0

    def reset(self) -> None:
        self.request_counts[:] = 0
        self.prev_action = None
        self.posterior_probs = None
        self.turn = 0

    def observe(self, tokens, act: dict | None = None) -> None:
        raise NotImplementedError

    def act(self, mode: str, rng: np.random.Generator) -> StepOutcome:
        raise NotImplementedError

    # -- helpers ----------------------------------------------------------

    def _prev_onehot(self) -> np.ndarray:
        onehot = np.zeros(action_space(self.kb.n_slots))
        if self.prev_action is not None:
            onehot[self.prev_action] = 1.0
        return onehot

    # Sampling the informed results (rather than taking the top-R) only
    # makes sense when the posterior itself is trained through the episode's
    # log-probability; the end-to-end agent flips this on.
    sample_inform_results = False

    def _make_inform(self, probs: np.ndarray, mode: str,
                     rng: np.random.Generator) -> tuple[Action, float | None]:
        if mode == "train" and self.sample_inform_results:
            results, log_mu = sample_inform(probs, self.top_r, rng)
            return Action.inform(results), log_mu
        return Action.inform(greedy_inform(probs, self.top_r)), None

    def _note_action(self, index: int) -> None:
        if index < self.kb.n_slots:
            self.request_counts[index] += 1
        self.prev_action = index
        self.turn += 1


def _soft_summary(agent: DialogueAgent) -> tuple[SummaryState, np.ndarray]:
    post = posterior(agent.beliefs, agent.kb)
    return summarize(agent.beliefs, post, agent.kb), post.probs


def _nokb_summary(agent: DialogueAgent) -> tuple[SummaryState, np.ndarray]:
    post = posterior(agent.beliefs, agent.kb)
    summary = SummaryState(agent.beliefs.entropies(), agent.beliefs.know.copy(),
                           float("inf"))
    return summary, post.probs


def _hard_summary(agent: DialogueAgent) -> tuple[SummaryState, np.ndarray]:
    """Value entropies over the retrieved rows; ln(result count) as KB entropy.

    An empty result set means the constraints are contradictory, not that the
    search is done, so it reads as maximal uncertainty rather than ln(1).
    """
    post = posterior(agent.beliefs, agent.kb)
    rows, _ = hard_kb_lookup(agent.kb, agent.beliefs)
    pseudo = np.zeros(agent.kb.n_rows)
    if len(rows):
        pseudo[rows] = 1.0 / len(rows)
        kb_ent = float(np.log(len(rows)))
    else:
        pseudo[:] = 1.0 / agent.kb.n_rows
        kb_ent = float(np.log(agent.kb.n_rows))
    ents = np.array([softkb.entropy(softkb.weighted_slot_dist(pseudo, agent.kb, j))
                     for j in range(agent.kb.n_slots)])
    summary = SummaryState(ents, agent.beliefs.know.copy(), kb_ent)
    return summary, post.probs


_RULE_SUMMARIES: dict[str, Callable] = {
    "soft": _soft_summary,
    "nokb": _nokb_summary,
    "hard": _hard_summary,
}


class RuleAgent(DialogueAgent):
    """Hand-crafted tracker plus the entropy rule."""

    def __init__(self, kb: KbTable, summary_kind: str,
                 cfg: RulePolicyConfig | None = None,
                 tracker_cfg: HandTrackerConfig | None = None,
                 top_r: int = 5, variant: str | None = None):
        super().__init__(kb, top_r)
        self.summary_kind = summary_kind
        self.variant = variant or (
            "rule-no-kb" if summary_kind == "nokb" else f"rule-{summary_kind}")
        self.cfg = cfg or DEFAULT_RULE_CONFIGS.get(self.variant, RulePolicyConfig())
        self.tracker = HandTracker(kb, tracker_cfg)
        self._summary_fn = _RULE_SUMMARIES[summary_kind]
        self.initial_entropies: np.ndarray | None = None

    def reset(self) -> None:
        super().reset()
        self.beliefs = self.tracker.reset()
        summary, _ = self._summary_fn(self)
        self.initial_entropies = summary.slot_entropies.copy()

    def observe(self, tokens, act: dict | None = None) -> None:
        requested = self.prev_action if (
            self.prev_action is not None
            and self.prev_action < self.kb.n_slots) else None
        self.beliefs = self.tracker.update(self.beliefs, tokens, requested)

    def act(self, mode: str, rng: np.random.Generator) -> StepOutcome:
        summary, probs = self._summary_fn(self)
        self.posterior_probs = probs
        idx = rule_select(summary, self.initial_entropies,
                          self.request_counts, self.cfg)
        if idx == self.kb.n_slots:
            action, log_mu = self._make_inform(probs, mode, rng)
            outcome = StepOutcome(action, log_mu=log_mu, summary=summary)
        else:
            outcome = StepOutcome(Action.request(idx), summary=summary)
        self._note_action(idx)
        return outcome


def policy_input_dim(summary_kind: str, n_slots: int) -> int:
    m = n_slots
    base = {"nokb": m, "hard": m + 6, "soft": 2 * m + 1}[summary_kind]
    return base + m + action_space(m)


class PolicyAgent(DialogueAgent):
    """Hand-crafted tracker plus a learned recurrent policy."""

    def __init__(self, kb: KbTable, summary_kind: str, store: ParamStore,
                 model_cfg: ModelConfig | None = None,
                 tracker_cfg: HandTrackerConfig | None = None,
                 top_r: int = 5, variant: str | None = None):
        super().__init__(kb, top_r)
        self.summary_kind = summary_kind
        self.variant = variant or f"rl-{summary_kind}"
        self.model_cfg = model_cfg or ModelConfig()
        self.store = store
        self.policy = PolicyNet(store, policy_input_dim(summary_kind, kb.n_slots),
                                action_space(kb.n_slots),
                                self.model_cfg.hidden_size)
        self.tracker = HandTracker(kb, tracker_cfg)
        self._hidden = None

    def reset(self) -> None:
        super().reset()
        self.beliefs = self.tracker.reset()
        self._hidden = self.policy.initial_hidden()

    def observe(self, tokens, act: dict | None = None) -> None:
        requested = self.prev_action if (
            self.prev_action is not None
            and self.prev_action < self.kb.n_slots) else None
        self.beliefs = self.tracker.update(self.beliefs, tokens, requested)

    def _base_features(self) -> tuple[np.ndarray, SummaryState, np.ndarray]:
        post = posterior(self.beliefs, self.kb)
        if self.summary_kind == "soft":
            summary = summarize(self.beliefs, post, self.kb)
            base = summary.concat()
        elif self.summary_kind == "nokb":
            summary = SummaryState(self.beliefs.entropies(),
                                   self.beliefs.know.copy(), float("inf"))
            base = summary.slot_entropies
        else:  # hard
            _, bins = hard_kb_lookup(self.kb, self.beliefs)
            summary = SummaryState(self.beliefs.entropies(),
                                   self.beliefs.know.copy(), float("inf"))
            base = np.concatenate([summary.slot_entropies, bins])
        return base, summary, post.probs

    def policy_features(self) -> tuple[np.ndarray, SummaryState, np.ndarray]:
        """Current policy input vector, summary state and entity posterior."""
        base, summary, probs = self._base_features()
        x = np.concatenate([base, self.beliefs.know, self._prev_onehot()])
        return x, summary, probs

    def act(self, mode: str, rng: np.random.Generator) -> StepOutcome:
        x, summary, probs = self.policy_features()
        self.posterior_probs = probs
        pi, self._hidden = self.policy.step(x, self._hidden)
        if mode == "train":
            idx = int(rng.choice(pi.size, p=pi))
        else:
            idx = int(np.argmax(pi))
        log_pi = float(np.log(pi[idx]))
        if idx == self.kb.n_slots:
            action, log_mu = self._make_inform(probs, mode, rng)
            outcome = StepOutcome(action, log_pi=log_pi, log_mu=log_mu,
                                  policy_input=x, summary=summary)
        else:
            outcome = StepOutcome(Action.request(idx), log_pi=log_pi,
                                  policy_input=x, summary=summary)
        self._note_action(idx)
        return outcome


class E2EAgent(DialogueAgent):
    """Learned tracker and policy; the whole pipeline is differentiable."""

    variant = "e2e"
    sample_inform_results = True

    def __init__(self, kb: KbTable, store: ParamStore, vocab: FeatureVocab,
                 model_cfg: ModelConfig | None = None, top_r: int = 5):
        if any(kb.vocab_size(j) == 0 for j in range(kb.n_slots)):
            raise ValueError("neural tracking needs every slot to have values")
        super().__init__(kb, top_r)
        self.model_cfg = model_cfg or ModelConfig()
        self.store = store
        self.vocab = vocab
        self.tracker = NeuralTracker(store, kb, vocab,
                                     self.model_cfg.tracker_hidden_size)
        self.policy = PolicyNet(store, policy_input_dim("soft", kb.n_slots),
                                action_space(kb.n_slots),
                                self.model_cfg.hidden_size)
        self._tracker_hidden = None
        self._policy_hidden = None

    def reset(self) -> None:
        super().reset()
        self.beliefs = None
        self._tracker_hidden = self.tracker.initial_hidden()
        self._policy_hidden = self.policy.initial_hidden()

    def observe(self, tokens, act: dict | None = None) -> None:
        self._tracker_hidden, self.beliefs, _, _ = self.tracker.step(
            tokens, self._tracker_hidden)

    def act(self, mode: str, rng: np.random.Generator) -> StepOutcome:
        post = posterior(self.beliefs, self.kb)
        self.posterior_probs = post.probs
        summary = summarize(self.beliefs, post, self.kb)
        x = np.concatenate([summary.concat(), self.beliefs.know,
                            self._prev_onehot()])
        pi, self._policy_hidden = self.policy.step(x, self._policy_hidden)
        if mode == "train":
            idx = int(rng.choice(pi.size, p=pi))
        else:
            idx = int(np.argmax(pi))
        log_pi = float(np.log(pi[idx]))
        if idx == self.kb.n_slots:
            action, log_mu = self._make_inform(post.probs, mode, rng)
            outcome = StepOutcome(action, log_pi=log_pi, log_mu=log_mu,
                                  policy_input=x, summary=summary)
        else:
            outcome = StepOutcome(Action.request(idx), log_pi=log_pi,
                                  policy_input=x, summary=summary)
        self._note_action(idx)
        return outcome


class MaxAgent(DialogueAgent):
    """Upper bound: exact beliefs from the user's structured acts, no noise."""

    variant = "max"

    def __init__(self, kb: KbTable, cfg: RulePolicyConfig | None = None,
                 top_r: int = 5):
        super().__init__(kb, top_r)
        self.cfg = cfg or DEFAULT_RULE_CONFIGS["max"]
        self.initial_entropies: np.ndarray | None = None

    def reset(self) -> None:
        super().reset()
        self.beliefs = BeliefState([p.copy() for p in self.kb.priors],
                                   np.ones(self.kb.n_slots))
        self.initial_entropies = self.beliefs.entropies()

    def set_exact_beliefs(self, known_values: dict[int, int]) -> None:
        """Point-mass beliefs for a known target (live sessions, no acts)."""
        for j, vid in known_values.items():
            self._point_mass(j, vid)

    def _point_mass(self, j: int, vid: int) -> None:
        d = np.zeros(self.kb.vocab_size(j))
        d[vid] = 1.0
        self.beliefs.dists[j] = d
        self.beliefs.know[j] = 1.0

    def observe(self, tokens, act: dict | None = None) -> None:
        if not act:
            return
        kind = act.get("kind")
        if kind == "open":
            for j, vid in act.get("slots", {}).items():
                self._point_mass(int(j), int(vid))
        elif kind == "value":
            self._point_mass(int(act["slot"]), int(act["value"]))
        elif kind == "dont_know":
            self.beliefs.know[int(act["slot"])] = 0.0

    def act(self, mode: str, rng: np.random.Generator) -> StepOutcome:
        summary, probs = _soft_summary(self)
        self.posterior_probs = probs
        # Candidate slots come from the raw belief entropies, not the
        # posterior-weighted ones: a slot pinned to a point mass is settled
        # even when missing cells keep its weighted distribution spread, and
        # informing before every settleable slot is pinned risks ranking a
        # fully-matching decoy above a target whose KB cells are masked.
        raw = SummaryState(self.beliefs.entropies(), self.beliefs.know.copy(),
                           summary.kb_entropy)
        idx = rule_select(raw, self.initial_entropies,
                          self.request_counts, self.cfg)
        if idx == self.kb.n_slots:
            action, log_mu = self._make_inform(probs, mode, rng)
            outcome = StepOutcome(action, log_mu=log_mu, summary=summary)
        else:
            outcome = StepOutcome(Action.request(idx), summary=summary)
        self._note_action(idx)
        return outcome


def default_feature_vocab(kb: KbTable, templates: dict | None = None) -> FeatureVocab:
    from .simulator import load_templates

    pack = templates or load_templates()
    corpus: list[str] = []
    for act, entries in pack.get("user", {}).items():
        if isinstance(entries, list):
            corpus.extend(entries)
    return build_vocab(corpus, kb)


def build_agent(variant: str, kb: KbTable, *, checkpoint: str | None = None,
                rule_cfg: RulePolicyConfig | None = None,
                model_cfg: ModelConfig | None = None,
                templates: dict | None = None,
                top_r: int = 5, init_seed: int = 0) -> DialogueAgent:
    """Construct any agent variant, optionally restoring a checkpoint."""
    variant = canonical_variant(variant)
    kind, summary_kind = VARIANTS[variant]
    if kind == "rule":
        return RuleAgent(kb, summary_kind, cfg=rule_cfg, top_r=top_r,
                         variant=variant)
    if kind == "max":
        return MaxAgent(kb, cfg=rule_cfg, top_r=top_r)

    store = ParamStore(np.random.default_rng(init_seed),
                       (model_cfg or ModelConfig()).init_scale)
    extras: dict = {}
    if checkpoint is not None:
        store, cfg_dict, extras = nnet.load_checkpoint(checkpoint)
        model_cfg = ModelConfig.from_dict(cfg_dict)
        saved_variant = extras.get("variant")
        if saved_variant and canonical_variant(saved_variant) != variant:
            raise ValueError(
                f"checkpoint was trained for {saved_variant!r}, not {variant!r}")
    if kind == "rl":
        return PolicyAgent(kb, summary_kind, store, model_cfg=model_cfg,
                           top_r=top_r, variant=variant)
    if extras.get("feature_vocab"):
        vocab = FeatureVocab.from_list(extras["feature_vocab"])
    else:
        vocab = default_feature_vocab(kb, templates)
    return E2EAgent(kb, store, vocab, model_cfg=model_cfg, top_r=top_r)
