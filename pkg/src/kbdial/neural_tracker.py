"""Recurrent neural belief tracker: one GRU per slot over utterance n-grams."""

from __future__ import annotations

import numpy as np

from . import nnet
from .beliefs import BeliefState
from .features import FeatureVocab
from .kb import KbTable
from .nnet import Node, ParamStore


class NeuralTracker:
    """Per-slot GRUs with a softmax value head and a sigmoid know head.

    All slot trackers read the same bag-of-n-grams input; slot ``j`` maintains
    hidden state ``h_j`` and produces a distribution over slot ``j``'s values
    plus the probability that the user knows the slot.
    """

    def __init__(self, store: ParamStore, kb: KbTable, vocab: FeatureVocab,
                 hidden_size: int = 100):
        self.store = store
        self.kb = kb
        self.vocab = vocab
        self.hidden_size = hidden_size
        for j in range(kb.n_slots):
            nnet.init_gru_params(store, f"trk{j}", len(vocab), hidden_size)
            store.ensure(f"trk{j}.Wp", (max(kb.vocab_size(j), 1), hidden_size))
            store.ensure(f"trk{j}.bp", (max(kb.vocab_size(j), 1), 1))
            store.ensure(f"trk{j}.Wq", (1, hidden_size))
            store.ensure(f"trk{j}.bq", (1, 1))

    def initial_hidden(self, batch: int = 1) -> list[Node]:
        return [nnet.constant(np.zeros((self.hidden_size, batch)))
                for _ in range(self.kb.n_slots)]

    def step_nodes(self, x: Node, hidden: list[Node]
                   ) -> tuple[list[Node], list[Node], list[Node]]:
        """Advance every slot tracker one turn.

        ``x``: (V_n, B) feature columns. Returns (new_hidden, value
        distributions [(V_j, B)], know rows [(1, B)]).
        """
        new_hidden: list[Node] = []
        p_nodes: list[Node] = []
        q_rows: list[Node] = []
        for j in range(self.kb.n_slots):
            params = nnet.gru_params(self.store, f"trk{j}")
            h = nnet.gru_step(x, hidden[j], params)
            new_hidden.append(h)
            p_nodes.append(nnet.affine_softmax(
                h, self.store.node(f"trk{j}.Wp"), self.store.node(f"trk{j}.bp")))
            q_rows.append(nnet.affine_sigmoid(
                h, self.store.node(f"trk{j}.Wq"), self.store.node(f"trk{j}.bq")))
        return new_hidden, p_nodes, q_rows

    def step(self, tokens, hidden: list[Node]
             ) -> tuple[list[Node], BeliefState, list[Node], list[Node]]:
        """Forward-only convenience step from raw tokens (no gradients)."""
        x = nnet.constant(self.vocab.featurize(tokens)[:, None])
        with nnet.no_grad():
            new_hidden, p_nodes, q_rows = self.step_nodes(x, hidden)
        dists = [p.value[:self.kb.vocab_size(j), 0]
                 for j, p in enumerate(p_nodes)]
        know = np.array([q.value[0, 0] for q in q_rows])
        return new_hidden, BeliefState(dists, know), p_nodes, q_rows
