"""Action selection: entropy rule policy, recurrent neural policy, informs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nnet
from .nnet import Node, ParamStore
from .softkb import SummaryState


@dataclass(frozen=True)
class Action:
    """Either a slot request or a terminal inform carrying ranked row ids."""

    kind: str  # "request" | "inform"
    slot: int | None = None
    results: tuple[int, ...] | None = None

    @classmethod
    def request(cls, slot: int) -> "Action":
        return cls("request", slot=slot)

    @classmethod
    def inform(cls, results: Sequence[int]) -> "Action":
        return cls("inform", results=tuple(int(r) for r in results))

    def index(self, n_slots: int) -> int:
        return self.slot if self.kind == "request" else n_slots


def action_space(n_slots: int) -> int:
    """Requests for each slot plus one inform action."""
    return n_slots + 1


@dataclass
class RulePolicyConfig:
    """Thresholds for the entropy rule.

    ``alpha_r``: inform once the row-posterior entropy falls below it.
    ``alpha_t`` / ``beta``: a slot stays requestable while its summary entropy
    is at least min(alpha_t, beta * its initial entropy).
    ``q_max``: per-slot request budget. ``prefer``: pick the requestable slot
    with minimum (default) or maximum entropy.
    """

    alpha_r: float = 0.5
    alpha_t: float = 0.3
    beta: float = 0.5
    q_max: int = 2
    prefer: str = "min"

    def __post_init__(self) -> None:
        if self.q_max < 1:
            raise ValueError("q_max must be at least 1")
        if self.prefer not in ("min", "max"):
            raise ValueError("prefer must be 'min' or 'max'")


def rule_select(summary: SummaryState, initial_entropies: np.ndarray,
                request_counts: np.ndarray, cfg: RulePolicyConfig) -> int:
    """Entropy rule: index of the slot to request, or n_slots to inform.

    Informs when the posterior entropy clears ``alpha_r`` or when no slot is
    requestable; otherwise requests the preferred-entropy candidate, ties
    broken toward the lowest slot index.
    """
    m = summary.slot_entropies.size
    if summary.kb_entropy < cfg.alpha_r:
        return m
    floors = np.minimum(cfg.alpha_t, cfg.beta * initial_entropies)
    candidates = [j for j in range(m)
                  if summary.slot_entropies[j] >= floors[j]
                  and request_counts[j] < cfg.q_max]
    if not candidates:
        return m
    ents = summary.slot_entropies[candidates]
    pick = int(np.argmin(ents)) if cfg.prefer == "min" else int(np.argmax(ents))
    return candidates[pick]


class PolicyNet:
    """GRU over per-turn summary inputs with a softmax head over actions."""

    def __init__(self, store: ParamStore, input_dim: int, n_actions: int,
                 hidden_size: int = 50):
        self.store = store
        self.input_dim = input_dim
        self.n_actions = n_actions
        self.hidden_size = hidden_size
        nnet.init_gru_params(store, "pol", input_dim, hidden_size)
        store.ensure("pol.Wa", (n_actions, hidden_size))
        store.ensure("pol.ba", (n_actions, 1))

    def initial_hidden(self, batch: int = 1) -> Node:
        return nnet.constant(np.zeros((self.hidden_size, batch)))

    def forward_nodes(self, x: Node, hidden: Node) -> tuple[Node, Node]:
        """One step; ``x``: (input_dim, B). Returns (action probs, new hidden)."""
        h = nnet.gru_step(x, hidden, nnet.gru_params(self.store, "pol"))
        probs = nnet.affine_softmax(
            h, self.store.node("pol.Wa"), self.store.node("pol.ba"))
        return probs, h

    def step(self, x: np.ndarray, hidden: Node) -> tuple[np.ndarray, Node]:
        """Forward-only step from a plain input vector."""
        with nnet.no_grad():
            probs, h = self.forward_nodes(nnet.constant(x[:, None]), hidden)
        return probs.value[:, 0], h


def greedy_inform(probs: np.ndarray, top_r: int) -> list[int]:
    """Indices of the ``top_r`` most probable rows, ties to the lowest index."""
    if top_r > probs.size:
        raise ValueError("cannot rank more rows than the table holds")
    order = np.lexsort((np.arange(probs.size), -probs))
    return [int(i) for i in order[:top_r]]


def sample_inform(probs: np.ndarray, top_r: int,
                  rng: np.random.Generator) -> tuple[list[int], float]:
    """Sample ``top_r`` distinct rows sequentially without replacement.

    Returns the ordered sample I and log of its probability
    mu(I) = prod_k p(i_k) / (1 - p(i_1) - ... - p(i_{k-1})). If the
    distribution runs out of mass early, the remainder is padded uniformly
    from the zero-mass rows and only the sampled prefix contributes to log mu.
    """
    if top_r > probs.size:
        raise ValueError("cannot rank more rows than the table holds")
    remaining = np.array(probs, dtype=np.float64)
    chosen: list[int] = []
    log_mu = 0.0
    consumed = 0.0
    for _ in range(top_r):
        total = remaining.sum()
        if total <= 1e-300:
            pool = [i for i in np.nonzero(remaining >= 0)[0] if i not in set(chosen)]
            warnings.warn("posterior ran out of mass; padding inform uniformly")
            pad = rng.choice(len(pool), size=top_r - len(chosen), replace=False)
            chosen.extend(int(pool[k]) for k in pad)
            break
        idx = int(rng.choice(probs.size, p=remaining / total))
        log_mu += float(np.log(probs[idx]) - np.log1p(-consumed))
        consumed += probs[idx]
        remaining[idx] = 0.0
        chosen.append(idx)
    return chosen, log_mu


def log_mu_nodes(p_col: Node, results: Sequence[int]) -> Node:
    """Graph version of the ordered-sample log-probability for one episode.

    ``p_col``: (N, 1) posterior column; ``results``: the sampled row ids, in
    order. Zero-mass padding never occurs on graph paths (softmax inputs).
    """
    log_mu: Node | None = None
    denom = nnet.constant(1.0)
    for idx in results:
        p_i = nnet.take_rows(p_col, [int(idx)])
        term = nnet.sub(nnet.log(p_i), nnet.log(denom))
        log_mu = term if log_mu is None else nnet.add(log_mu, term)
        denom = nnet.sub(denom, p_i)
    assert log_mu is not None
    return nnet.nsum(log_mu)
