"""Simulated dialogue episodes between an agent and the user simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agents import DialogueAgent
from .simulator import UserGoal, UserSimulator, discounted_return, score_inform
from .text import tokenize


@dataclass
class TurnRecord:
    """One agent decision plus the user turn that preceded it."""

    tokens: tuple[str, ...]
    act: dict
    action_index: int
    log_pi: float | None
    reward: float
    prev_action: int | None
    policy_input: np.ndarray | None = None
    p_hat: list[np.ndarray] | None = None
    q_hat: np.ndarray | None = None
    summary_vec: np.ndarray | None = None


@dataclass
class Episode:
    """A complete dialogue with everything needed to replay it for learning.

    ``inform_results`` is None only when the horizon expired before an inform
    (the failure reward is folded into the final turn in that case).
    """

    variant: str
    goal: UserGoal
    turns: list[TurnRecord] = field(default_factory=list)
    inform_results: tuple[int, ...] | None = None
    log_mu: float | None = None
    success: bool = False
    target_rank: int | None = None

    @property
    def rewards(self) -> list[float]:
        return [t.reward for t in self.turns]

    @property
    def total_reward(self) -> float:
        return float(sum(t.reward for t in self.turns))

    def discounted(self, gamma: float) -> float:
        return discounted_return(self.rewards, gamma)

    @property
    def n_turns(self) -> int:
        return len(self.turns)


def rollout(agent: DialogueAgent, sim: UserSimulator,
            rng: np.random.Generator, mode: str = "eval",
            record_beliefs: bool = False) -> Episode:
    """Run one dialogue. ``mode='train'`` samples actions and informs.

    The episode ends on the agent's inform or after ``max_turns`` agent
    actions, whichever comes first; a horizon expiry counts as a failure.
    """
    reward_cfg = sim.reward
    goal = sim.sample_goal(rng)
    agent.reset()
    episode = Episode(variant=getattr(agent, "variant", "agent"), goal=goal)

    text, act = sim.opening(goal, rng)
    for turn in range(1, reward_cfg.max_turns + 1):
        tokens = tuple(tokenize(text))
        agent.observe(tokens, act)
        prev = agent.prev_action
        outcome = agent.act(mode, rng)
        reward = reward_cfg.turn_penalty
        done = False

        if outcome.action.kind == "inform":
            results = list(outcome.action.results or ())
            terminal, success, rank = score_inform(goal, results, reward_cfg)
            reward += terminal
            episode.inform_results = tuple(results)
            episode.log_mu = outcome.log_mu
            episode.success = success
            episode.target_rank = rank
            done = True
        elif turn == reward_cfg.max_turns:
            reward += reward_cfg.fail_reward
            done = True

        record = TurnRecord(
            tokens=tokens,
            act=act,
            action_index=outcome.action.index(agent.kb.n_slots),
            log_pi=outcome.log_pi,
            reward=reward,
            prev_action=prev,
            policy_input=outcome.policy_input,
        )
        if record_beliefs and agent.beliefs is not None:
            record.p_hat = [d.copy() for d in agent.beliefs.dists]
            record.q_hat = agent.beliefs.know.copy()
            if outcome.summary is not None:
                record.summary_vec = outcome.summary.concat()
        episode.turns.append(record)

        if done:
            break
        text, act = sim.respond(goal, outcome.action, rng)
    return episode
