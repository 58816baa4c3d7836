"""Policy-gradient and imitation training over batches of replayed episodes.

Episodes are collected forward-only, then replayed as a column-batched graph
(episodes sorted by length so the active batch is always a prefix) to build
the surrogate loss whose gradient is the update direction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nnet
from .agents import DialogueAgent, E2EAgent, PolicyAgent, RuleAgent
from .nnet import Node, RmsProp, pick_columns, sgd_step
from .policy import PolicyNet, log_mu_nodes
from .rollout import Episode, rollout
from .simulator import UserSimulator
from .softkb import posterior, posterior_nodes, summarize, summary_nodes

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Knobs for imitation and policy-gradient training."""

    batch_size: int = 128
    il_updates: int = 500
    rl_updates: int = 500
    # SGD step for policy-action mimicry. The policy-only students are a
    # single shallow GRU, where plain SGD converges fine.
    lr_il: float = 0.05
    # RmsProp step for end-to-end belief-and-action mimicry. That loss
    # backpropagates through one GRU per slot plus the posterior, and its
    # gradient scales differ by orders of magnitude across layers; SGD at
    # any single rate stalls long before the tracker matches the teacher.
    lr_il_e2e: float = 0.005
    # Weight on the action cross entropy inside the end-to-end imitation
    # loss. The belief terms sum over every slot, so once the tracker has
    # converged an unweighted action term barely moves the policy and
    # greedy agreement with the teacher drifts.
    il_action_weight: float = 3.0
    lr_rl: float = 0.005
    gamma: float = 0.99
    eval_every: int = 100
    eval_episodes: int = 2000
    final_episodes: int = 5000
    baseline: str = "return-mean"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.baseline not in ("return-mean", "reward-mean", "none"):
            raise ValueError("baseline must be return-mean, reward-mean or none")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


def episode_weights(episodes: Sequence[Episode], gamma: float,
                    baseline: str) -> np.ndarray:
    """Per-episode scalars multiplying the episode's log-probability sum.

    ``return-mean`` subtracts the batch-mean discounted return from each
    episode's discounted return. ``reward-mean`` subtracts the batch-mean
    per-turn reward inside the discounted sum instead. With a single episode
    and ``return-mean`` the weight is exactly zero, so the update vanishes.
    """
    returns = np.array([e.discounted(gamma) for e in episodes])
    if baseline == "none":
        return returns
    if baseline == "return-mean":
        return returns - returns.mean()
    flat = [r for e in episodes for r in e.rewards]
    b = float(np.mean(flat))
    return np.array([
        sum((r - b) * gamma ** t for t, r in enumerate(e.rewards))
        for e in episodes])


def _sorted_batch(episodes: Sequence[Episode]) -> list[Episode]:
    return sorted(episodes, key=lambda e: -e.n_turns)


def _active_count(episodes: list[Episode], t: int) -> int:
    count = 0
    for e in episodes:
        if e.n_turns > t:
            count += 1
        else:
            break
    return count


def _narrow(h: Node, nb: int) -> Node:
    return nnet.slice_cols(h, 0, nb) if h.value.shape[1] > nb else h


def policy_surrogate(policy: PolicyNet, episodes: Sequence[Episode],
                     weights: np.ndarray) -> Node:
    """- (1/B) sum_ep w_ep * sum_t log pi(a_t) as a graph node."""
    episodes = _sorted_batch(list(episodes))
    total: Node | None = None
    h = policy.initial_hidden(batch=len(episodes))
    t = 0
    while True:
        nb = _active_count(episodes, t)
        if nb == 0:
            break
        h = _narrow(h, nb)
        x = np.stack([e.turns[t].policy_input for e in episodes[:nb]], axis=1)
        probs, h = policy.forward_nodes(nnet.constant(x), h)
        actions = [e.turns[t].action_index for e in episodes[:nb]]
        logp = nnet.log(pick_columns(probs, actions))
        w_row = nnet.constant(weights[:nb][None, :])
        term = nnet.nsum(nnet.mul(logp, w_row))
        total = term if total is None else nnet.add(total, term)
        t += 1
    assert total is not None
    return nnet.mul(total, nnet.constant(-1.0 / len(episodes)))


def reinforce_update(agent: PolicyAgent, episodes: Sequence[Episode],
                     cfg: TrainConfig, optimizer: RmsProp) -> dict:
    """One REINFORCE step on the policy network only."""
    episodes = _sorted_batch(list(episodes))
    weights = episode_weights(episodes, cfg.gamma, cfg.baseline)
    loss = policy_surrogate(agent.policy, episodes, weights)
    grads = nnet.backward(loss)
    if not np.isfinite(loss.item()):
        raise RuntimeError("non-finite policy-gradient loss")
    optimizer.step(agent.store, grads)
    returns = [e.discounted(cfg.gamma) for e in episodes]
    return {"loss": loss.item(), "mean_return": float(np.mean(returns)),
            "mean_reward": float(np.mean([e.total_reward for e in episodes]))}


def _replay_e2e(agent: E2EAgent, episodes: list[Episode]):
    """Replay a sorted batch through the full differentiable pipeline.

    Yields per-turn tuples (nb, p_nodes, q_rows, p_t, probs) where ``nb`` is
    the number of episodes still active at that turn.
    """
    batch = len(episodes)
    tracker_h = agent.tracker.initial_hidden(batch=batch)
    policy_h = agent.policy.initial_hidden(batch=batch)
    n_actions = agent.policy.n_actions
    t = 0
    while True:
        nb = _active_count(episodes, t)
        if nb == 0:
            return
        tracker_h = [_narrow(h, nb) for h in tracker_h]
        policy_h = _narrow(policy_h, nb)
        x = np.stack([agent.vocab.featurize(list(e.turns[t].tokens))
                      for e in episodes[:nb]], axis=1)
        tracker_h, p_nodes, q_rows = agent.tracker.step_nodes(
            nnet.constant(x), tracker_h)
        p_t = posterior_nodes(p_nodes, q_rows, agent.kb)
        summary = summary_nodes(p_t, q_rows, agent.kb)
        prev = np.zeros((n_actions, nb))
        for b, e in enumerate(episodes[:nb]):
            if e.turns[t].prev_action is not None:
                prev[e.turns[t].prev_action, b] = 1.0
        inp = nnet.concat_rows(
            [summary, nnet.concat_rows(q_rows), nnet.constant(prev)])
        probs, policy_h = agent.policy.forward_nodes(inp, policy_h)
        yield t, nb, p_nodes, q_rows, p_t, probs
        t += 1


def e2e_surrogate(agent: E2EAgent, episodes: Sequence[Episode],
                  weights: np.ndarray) -> Node:
    """Policy-gradient surrogate through tracker, posterior and policy.

    ``episodes`` must already be sorted longest-first with ``weights``
    aligned. Each episode's ordered-inform log-probability joins its action
    log-probabilities, so the gradient also reshapes the posterior the
    inform was sampled from.
    """
    total: Node | None = None
    for t, nb, _, _, p_t, probs in _replay_e2e(agent, episodes):
        actions = [e.turns[t].action_index for e in episodes[:nb]]
        logp = nnet.log(pick_columns(probs, actions))
        term = nnet.nsum(nnet.mul(logp, nnet.constant(weights[:nb][None, :])))
        total = term if total is None else nnet.add(total, term)
        for b in range(nb):
            e = episodes[b]
            if e.n_turns == t + 1 and e.inform_results is not None:
                lmu = log_mu_nodes(nnet.slice_cols(p_t, b, b + 1),
                                   e.inform_results)
                total = nnet.add(total, nnet.mul(
                    lmu, nnet.constant(float(weights[b]))))
    assert total is not None
    return nnet.mul(total, nnet.constant(-1.0 / len(episodes)))


def e2e_update(agent: E2EAgent, episodes: Sequence[Episode], cfg: TrainConfig,
               optimizer: RmsProp) -> dict:
    """One policy-gradient step through the full differentiable pipeline."""
    episodes = _sorted_batch(list(episodes))
    weights = episode_weights(episodes, cfg.gamma, cfg.baseline)
    loss = e2e_surrogate(agent, episodes, weights)
    if not np.isfinite(loss.item()):
        raise RuntimeError("non-finite end-to-end loss")
    grads = nnet.backward(loss)
    optimizer.step(agent.store, grads)
    returns = [e.discounted(cfg.gamma) for e in episodes]
    return {"loss": loss.item(), "mean_return": float(np.mean(returns)),
            "mean_reward": float(np.mean([e.total_reward for e in episodes]))}


def _xlogx(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float((nz * np.log(nz)).sum())


def imitation_loss(agent: E2EAgent, episodes: Sequence[Episode],
                   action_weight: float = 1.0) -> Node:
    """Mean per-turn distance to the teacher's beliefs and actions.

    Per turn: sum over slots of KL(teacher value dist || student) plus the
    know-probability cross entropy, plus ``action_weight`` times the
    cross entropy to the teacher action; averaged over every turn in the
    batch. The belief part sums over all slots, so an unweighted action term
    is easily outvoted near convergence.
    """
    episodes = _sorted_batch(list(episodes))
    total_turns = sum(e.n_turns for e in episodes)
    total: Node | None = None
    for t, nb, p_nodes, q_rows, _, probs in _replay_e2e(agent, episodes):
        active = episodes[:nb]
        for j in range(agent.kb.n_slots):
            p_hat = np.stack([e.turns[t].p_hat[j] for e in active], axis=1)
            const_term = _xlogx(p_hat)
            cross = nnet.nsum(nnet.mul(nnet.constant(p_hat),
                                       nnet.log(p_nodes[j])))
            kl = nnet.sub(nnet.constant(const_term), cross)
            q_hat = np.array([e.turns[t].q_hat[j] for e in active])[None, :]
            q = q_rows[j]
            ce = nnet.mul(nnet.constant(-1.0), nnet.nsum(
                nnet.add(nnet.mul(nnet.constant(q_hat), nnet.log(q)),
                         nnet.mul(nnet.constant(1.0 - q_hat),
                                  nnet.log(nnet.sub(nnet.constant(1.0), q))))))
            term = nnet.add(kl, ce)
            total = term if total is None else nnet.add(total, term)
        actions = [e.turns[t].action_index for e in active]
        logp = nnet.nsum(nnet.log(pick_columns(probs, actions)))
        total = nnet.sub(total, nnet.mul(logp, nnet.constant(action_weight)))
    assert total is not None
    return nnet.mul(total, nnet.constant(1.0 / total_turns))


def imitation_update(agent: E2EAgent, episodes: Sequence[Episode],
                     optimizer: RmsProp, action_weight: float = 1.0) -> dict:
    """One supervised optimizer step on :func:`imitation_loss`."""
    loss = imitation_loss(agent, episodes, action_weight)
    if not np.isfinite(loss.item()):
        raise RuntimeError("non-finite imitation loss")
    grads = nnet.backward(loss)
    optimizer.step(agent.store, grads)
    return {"loss": loss.item()}


def imitation_metrics(agent: E2EAgent, episodes: Sequence[Episode]) -> dict:
    """Mean per-turn KL to the teacher beliefs and greedy action agreement."""
    kl_sum = 0.0
    agree = 0
    turns = 0
    with nnet.no_grad():
        for e in episodes:
            tracker_h = agent.tracker.initial_hidden()
            policy_h = agent.policy.initial_hidden()
            prev: int | None = None
            for rec in e.turns:
                tracker_h, beliefs, _, _ = agent.tracker.step(
                    list(rec.tokens), tracker_h)
                for j in range(agent.kb.n_slots):
                    p_hat = rec.p_hat[j]
                    sup = p_hat > 0
                    kl_sum += _xlogx(p_hat) - float(
                        (p_hat[sup] * np.log(beliefs.dists[j][sup])).sum())
                post = posterior(beliefs, agent.kb)
                summary = summarize(beliefs, post, agent.kb)
                onehot = np.zeros(agent.policy.n_actions)
                if prev is not None:
                    onehot[prev] = 1.0
                x = np.concatenate([summary.concat(), beliefs.know, onehot])
                pi, policy_h = agent.policy.step(x, policy_h)
                if int(np.argmax(pi)) == rec.action_index:
                    agree += 1
                prev = rec.action_index
                turns += 1
    return {"mean_kl": kl_sum / max(turns, 1),
            "action_agreement": agree / max(turns, 1)}


def shadow_policy_inputs(agent: PolicyAgent, episode: Episode) -> list[np.ndarray]:
    """Policy inputs the agent would see along a teacher's trajectory.

    The hand-crafted tracker is deterministic, so replaying the teacher's
    token stream while forcing the teacher's previous actions reproduces the
    beliefs (and hence inputs) the student would hold had it acted the same.
    """
    agent.reset()
    inputs = []
    for rec in episode.turns:
        agent.prev_action = rec.prev_action
        agent.observe(list(rec.tokens))
        x, _, _ = agent.policy_features()
        inputs.append(x)
    return inputs


def mimic_update(agent: PolicyAgent, episodes: Sequence[Episode],
                 cfg: TrainConfig) -> dict:
    """One supervised step pushing the policy toward the teacher's actions.

    Minimizes the mean over turns of -log pi(teacher action) with the
    student's own input features reconstructed along the teacher trajectory.
    """
    episodes = _sorted_batch(list(episodes))
    for e in episodes:
        for rec, x in zip(e.turns, shadow_policy_inputs(agent, e)):
            rec.policy_input = x
    total_turns = sum(e.n_turns for e in episodes)
    weights = np.full(len(episodes), len(episodes) / total_turns)
    loss = policy_surrogate(agent.policy, episodes, weights)
    if not np.isfinite(loss.item()):
        raise RuntimeError("non-finite mimic loss")
    grads = nnet.backward(loss)
    sgd_step(agent.store, grads, cfg.lr_il)
    return {"loss": loss.item()}


def mimic_agreement(agent: PolicyAgent, episodes: Sequence[Episode]) -> float:
    """Fraction of teacher turns where the greedy student action matches."""
    agree = 0
    turns = 0
    with nnet.no_grad():
        for e in episodes:
            hidden = agent.policy.initial_hidden()
            for rec, x in zip(e.turns, shadow_policy_inputs(agent, e)):
                pi, hidden = agent.policy.step(x, hidden)
                if int(np.argmax(pi)) == rec.action_index:
                    agree += 1
                turns += 1
    return agree / max(turns, 1)


@dataclass
class TrainResult:
    best_values: dict[str, np.ndarray]
    curve: list[dict]
    final: "object" = None  # EvalReport; avoids a circular import at runtime


def collect_episodes(agent: DialogueAgent, sim: UserSimulator, n: int,
                     seed_parts: Sequence[int], mode: str,
                     record_beliefs: bool = False) -> list[Episode]:
    return [rollout(agent, sim,
                    np.random.default_rng([*seed_parts, k]), mode,
                    record_beliefs=record_beliefs)
            for k in range(n)]


def train(agent: DialogueAgent, sim: UserSimulator, cfg: TrainConfig,
          metrics_path: str | None = None,
          teacher: DialogueAgent | None = None) -> TrainResult:
    """Train a learnable agent against the simulator.

    Learnable agents run ``il_updates`` supervised steps toward a rule
    teacher (belief and action mimicry for the end-to-end agent, action
    mimicry for policy-only agents) before ``rl_updates`` policy-gradient
    steps; starting REINFORCE from scratch almost always collapses onto
    immediate informs, after which saturated softmax outputs kill
    exploration. Greedy evaluations every ``eval_every`` updates select the
    checkpoint that is ultimately returned (and restored into the agent).
    """
    from .evaluate import evaluate

    if isinstance(agent, RuleAgent):
        raise ValueError("rule agents have nothing to train")
    is_e2e = isinstance(agent, E2EAgent)
    if teacher is None:
        # Each student mimics the rule policy that reads its own summary
        # kind, so the teacher's decision boundary is expressible in the
        # student's feature space. The end-to-end agent mimics the
        # hand-crafted tracker, whose summaries are the soft kind.
        kind = agent.summary_kind if isinstance(agent, PolicyAgent) else "soft"
        teacher = RuleAgent(agent.kb, kind, top_r=agent.top_r)

    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None

    def emit(record: dict) -> None:
        if sink:
            sink.write(json.dumps(record) + "\n")
            sink.flush()

    curve: list[dict] = []
    best_values: dict[str, np.ndarray] | None = None
    best_reward = -np.inf

    def checkpoint_eval(update: int, phase: str) -> None:
        nonlocal best_values, best_reward
        report = evaluate(agent, sim, cfg.eval_episodes, (cfg.seed, 91, update))
        point = {"update": update, "phase": phase,
                 "eval_reward": report.avg_reward,
                 "eval_success": report.success_rate,
                 "eval_turns": report.avg_turns}
        curve.append(point)
        emit(point)
        if report.avg_reward > best_reward:
            best_reward = report.avg_reward
            best_values = {k: v.copy() for k, v in agent.store.values.items()}
        log.info("update %d (%s): eval reward %.3f success %.3f",
                 update, phase, report.avg_reward, report.success_rate)

    try:
        update = 0
        il_optimizer = RmsProp(cfg.lr_il_e2e) if is_e2e else None
        for u in range(1, cfg.il_updates + 1):
            update += 1
            episodes = collect_episodes(teacher, sim, cfg.batch_size,
                                        (cfg.seed, 17, update), "eval",
                                        record_beliefs=is_e2e)
            if is_e2e:
                stats = imitation_update(agent, episodes, il_optimizer,
                                         cfg.il_action_weight)
            else:
                stats = mimic_update(agent, episodes, cfg)
            emit({"update": update, "phase": "il", **stats})
            if cfg.eval_every and update % cfg.eval_every == 0:
                checkpoint_eval(update, "il")
        optimizer = RmsProp(cfg.lr_rl)
        for u in range(1, cfg.rl_updates + 1):
            update += 1
            episodes = collect_episodes(agent, sim, cfg.batch_size,
                                        (cfg.seed, 29, update), "train")
            if is_e2e:
                stats = e2e_update(agent, episodes, cfg, optimizer)
            else:
                stats = reinforce_update(agent, episodes, cfg, optimizer)
            emit({"update": update, "phase": "rl", **stats})
            if cfg.eval_every and update % cfg.eval_every == 0:
                checkpoint_eval(update, "rl")
        if not curve:
            checkpoint_eval(update, "final-pick")
        assert best_values is not None
        agent.store.values = {k: v.copy() for k, v in best_values.items()}
        final = evaluate(agent, sim, cfg.final_episodes, (cfg.seed, 97))
        emit({"phase": "final", "eval_reward": final.avg_reward,
              "eval_success": final.success_rate,
              "eval_turns": final.avg_turns})
        return TrainResult(best_values, curve, final)
    finally:
        if sink:
            sink.close()
