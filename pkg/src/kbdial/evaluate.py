"""Greedy evaluation over seeded episode batches, plus noise sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .agents import DialogueAgent
from .kb import KbTable
from .rollout import rollout
from .simulator import NoiseConfig, RewardConfig, UserSimulator

SWEEP_PARAMS = ("irrelevant", "corrupt", "substitute")


def _seed_parts(seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


@dataclass
class EvalReport:
    """Aggregates over one batch of greedy episodes.

    ``std_err`` is the standard error of the per-episode total reward, so two
    reports are comparably far apart when their means differ by a few of
    these. Per-episode arrays are kept for downstream significance tests.
    """

    n_episodes: int
    avg_reward: float
    success_rate: float
    avg_turns: float
    std_err: float
    rewards: tuple[float, ...] = field(repr=False, default=())
    successes: tuple[bool, ...] = field(repr=False, default=())
    turns: tuple[int, ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {"n_episodes": self.n_episodes, "avg_reward": self.avg_reward,
                "success_rate": self.success_rate, "avg_turns": self.avg_turns,
                "std_err": self.std_err}


def evaluate(agent: DialogueAgent, sim: UserSimulator, n_episodes: int,
             seed) -> EvalReport:
    """Run ``n_episodes`` greedy dialogues with per-episode derived seeds.

    Episode ``i`` always draws from ``default_rng([*seed, i])``, so the report
    is reproducible bit for bit regardless of how many episodes ran before or
    after, and totals use compensated summation to keep them order-exact.
    """
    parts = _seed_parts(seed)
    rewards: list[float] = []
    successes: list[bool] = []
    turns: list[int] = []
    for i in range(n_episodes):
        rng = np.random.default_rng([*parts, i])
        episode = rollout(agent, sim, rng, mode="eval")
        rewards.append(episode.total_reward)
        successes.append(episode.success)
        turns.append(episode.n_turns)
    n = max(n_episodes, 1)
    avg = math.fsum(rewards) / n
    if n_episodes > 1:
        var = math.fsum((r - avg) ** 2 for r in rewards) / (n_episodes - 1)
        std_err = math.sqrt(var / n_episodes)
    else:
        std_err = 0.0
    return EvalReport(
        n_episodes=n_episodes,
        avg_reward=avg,
        success_rate=math.fsum(1.0 for s in successes if s) / n,
        avg_turns=math.fsum(turns) / n,
        std_err=std_err,
        rewards=tuple(rewards),
        successes=tuple(successes),
        turns=tuple(turns),
    )


def sweep_noise_config(param: str, value: float) -> NoiseConfig:
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; "
                         f"choose from {SWEEP_PARAMS}")
    kwargs = {"p_corrupt": 0.0, "p_substitute": 0.0, "p_irrelevant": 0.0}
    kwargs[f"p_{param}"] = value
    return NoiseConfig(**kwargs)


def noise_sweep(agents: Mapping[str, DialogueAgent], kb: KbTable,
                values: Sequence[float], n_episodes: int, seed,
                param: str = "irrelevant",
                templates: dict | None = None,
                reward: RewardConfig | None = None,
                p_know: float = 0.8) -> list[dict]:
    """Evaluate each agent at each noise level of a single noise channel.

    Returns one row per (agent, level) with the usual aggregates; all other
    noise channels are held at zero so the sweep isolates one effect.
    """
    parts = _seed_parts(seed)
    rows = []
    for level_idx, value in enumerate(values):
        noise = sweep_noise_config(param, value)
        sim = UserSimulator(kb, templates=templates, noise=noise,
                            reward=reward, p_know=p_know)
        for agent_idx, (name, agent) in enumerate(agents.items()):
            report = evaluate(agent, sim, n_episodes,
                              (*parts, level_idx, agent_idx))
            rows.append({"agent": name, "param": param, "value": value,
                         **report.to_dict()})
    return rows
