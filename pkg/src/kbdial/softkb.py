"""Soft lookup: a differentiable posterior over KB rows given tracked beliefs.

The posterior factorizes over slots. For slot j with know-probability q_j and
value distribution p_j, a row i contributes

    Pr_j(i) = q_j * Pr_j(i | known) + (1 - q_j) / N

where Pr_j(i | known) is 1/N when the cell is missing and
p_j(v_i) / N_j(v_i) * (1 - |M_j|/N) otherwise (N_j counts rows with value v_i,
M_j is the missing set). Row scores multiply across slots and renormalize.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from . import nnet
from .beliefs import BeliefState
from .kb import MISSING, KbTable
from .nnet import Node

ORACLE_MAX_ROWS = 50
ORACLE_MAX_SLOTS = 6


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats; zero-mass entries contribute nothing."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        return 0.0
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


@dataclass
class KbPosterior:
    """Posterior over rows; ``degenerate`` marks an all-zero-score fallback."""

    probs: np.ndarray
    degenerate: bool = False


def _slot_row_terms(beliefs: BeliefState, kb: KbTable, j: int) -> np.ndarray:
    n = kb.n_rows
    q = float(beliefs.know[j])
    col = kb.value_ids[:, j]
    terms = np.full(n, 1.0 / n)  # missing cells: q/N + (1-q)/N = 1/N
    obs = col != MISSING
    if obs.any() and kb.vocab_size(j) > 0:
        coef = kb.row_coefficients(j)
        p = beliefs.dists[j]
        terms[obs] = q * coef[obs] * p[col[obs]] + (1.0 - q) / n
    return terms


def posterior(beliefs: BeliefState, kb: KbTable) -> KbPosterior:
    """Soft posterior over rows; log-space accumulation across slots."""
    log_scores = np.zeros(kb.n_rows)
    for j in range(kb.n_slots):
        terms = _slot_row_terms(beliefs, kb, j)
        with np.errstate(divide="ignore"):
            log_scores += np.log(terms)
    peak = log_scores.max()
    if np.isneginf(peak):
        warnings.warn("all rows scored zero; falling back to a uniform posterior")
        return KbPosterior(np.full(kb.n_rows, 1.0 / kb.n_rows), degenerate=True)
    scores = np.exp(log_scores - peak)
    return KbPosterior(scores / scores.sum())


def posterior_oracle(beliefs: BeliefState, kb: KbTable) -> KbPosterior:
    """Posterior by explicit enumeration of every known/unknown slot pattern.

    Marginalizes over all 2^M assignments of "user knows slot j" instead of
    using the factored per-slot form; tractable only for small tables, and
    kept as an independent cross-check of :func:`posterior`.
    """
    if kb.n_rows > ORACLE_MAX_ROWS or kb.n_slots > ORACLE_MAX_SLOTS:
        raise ValueError("oracle enumeration is limited to small tables")
    n, m = kb.n_rows, kb.n_slots

    known_terms = np.empty((m, n))
    for j in range(m):
        col = kb.value_ids[:, j]
        terms = np.full(n, 1.0 / n)
        obs = col != MISSING
        if obs.any() and kb.vocab_size(j) > 0:
            coef = kb.row_coefficients(j)
            terms[obs] = coef[obs] * beliefs.dists[j][col[obs]]
        known_terms[j] = terms

    scores = np.zeros(n)
    for pattern in itertools.product((0, 1), repeat=m):
        weight = 1.0
        rows = np.ones(n)
        for j, knows in enumerate(pattern):
            q = float(beliefs.know[j])
            weight *= q if knows else (1.0 - q)
            rows = rows * (known_terms[j] if knows else np.full(n, 1.0 / n))
        scores += weight * rows
    total = scores.sum()
    if total <= 0:
        warnings.warn("all rows scored zero; falling back to a uniform posterior")
        return KbPosterior(np.full(n, 1.0 / n), degenerate=True)
    return KbPosterior(scores / total)


def weighted_slot_dist(post: np.ndarray, kb: KbTable, j: int) -> np.ndarray:
    """Posterior-weighted value distribution for slot j.

    Rows vote for their observed value with their posterior mass; rows with a
    missing cell spread their mass along the slot prior.
    """
    v = kb.vocab_size(j)
    if v == 0:
        return np.zeros(0)
    col = kb.value_ids[:, j]
    obs = col != MISSING
    w = np.bincount(col[obs], weights=post[obs], minlength=v).astype(np.float64)
    w += kb.priors[j] * post[~obs].sum()
    total = w.sum()
    return w / total if total > 0 else w


@dataclass
class SummaryState:
    """Entropy summary of the dialogue state: one entropy per slot, the
    know-probabilities, and the entropy of the row posterior."""

    slot_entropies: np.ndarray
    know: np.ndarray
    kb_entropy: float

    def concat(self) -> np.ndarray:
        return np.concatenate(
            [self.slot_entropies, self.know, [self.kb_entropy]])


def summarize(beliefs: BeliefState, post: KbPosterior, kb: KbTable) -> SummaryState:
    ents = np.array([entropy(weighted_slot_dist(post.probs, kb, j))
                     for j in range(kb.n_slots)])
    return SummaryState(ents, beliefs.know.copy(), entropy(post.probs))


# -- graph versions (used when gradients must flow through the lookup) --------


def posterior_nodes(p_nodes: list[Node], q_rows: list[Node], kb: KbTable) -> Node:
    """Posterior as graph nodes. ``p_nodes[j]``: (V_j, B); ``q_rows[j]``: (1, B).

    Returns an (N, B) column-stochastic matrix. Inputs must be strictly
    positive (softmax/sigmoid outputs), so no zero-score fallback is needed.
    """
    n = kb.n_rows
    score: Node | None = None
    for j in range(kb.n_slots):
        scatter = nnet.constant(kb.scatter_matrix(j))
        miss = nnet.constant(kb.missing_mask(j).astype(np.float64)[:, None] / n)
        known = nnet.matmul(scatter, p_nodes[j]) + miss
        term = nnet.mul(q_rows[j], known) + nnet.mul(1.0 - q_rows[j],
                                                     nnet.constant(1.0 / n))
        score = term if score is None else nnet.mul(score, term)
    assert score is not None
    return nnet.div(score, nnet.nsum(score, axis=0, keepdims=True))


def entropy_cols(p: Node) -> Node:
    """Column-wise entropy of a strictly positive column-stochastic matrix."""
    return nnet.mul(nnet.constant(-1.0),
                    nnet.nsum(nnet.mul(p, nnet.log(p)), axis=0, keepdims=True))


def summary_nodes(p_t: Node, q_rows: list[Node], kb: KbTable) -> Node:
    """Entropy summary as a ((2M+1), B) node from an (N, B) posterior."""
    parts: list[Node] = []
    miss_rows = [nnet.constant(kb.missing_mask(j).astype(np.float64)[None, :])
                 for j in range(kb.n_slots)]
    for j in range(kb.n_slots):
        votes = nnet.matmul(nnet.constant(kb.value_indicator(j)), p_t)
        prior = nnet.constant(kb.priors[j][:, None])
        miss_mass = nnet.matmul(miss_rows[j], p_t)
        w = votes + nnet.mul(prior, miss_mass)
        w = nnet.div(w, nnet.nsum(w, axis=0, keepdims=True))
        parts.append(entropy_cols(w))
    parts.extend(q_rows)
    parts.append(entropy_cols(p_t))
    return nnet.concat_rows(parts)
