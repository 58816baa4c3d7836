"""Print the same simulated dialogue under increasingly noisy channels.

The simulated user draws a goal, opens the conversation, and answers the
rule agent's questions through a noisy channel: whole turns can be replaced
with irrelevant chatter, the intended value can be substituted for another,
and individual words can be dropped or corrupted. Replaying one episode
seed per noise setting shows how the same conversation degrades.

Run:  python3 demos/02_simulated_dialogues.py [--episodes 2] [--kb small@1]
"""

import argparse

import numpy as np

import kbdial as kd

SETTINGS = [
    ("clean", kd.NoiseConfig()),
    ("moderate", kd.MODERATE_NOISE),
    ("drowned in chatter", kd.NoiseConfig(p_irrelevant=0.6)),
]


def replay(kb, agent, sim, seed):
    rng = np.random.default_rng(seed)
    nlg_rng = np.random.default_rng([seed, 1])
    episode = kd.rollout(agent, sim, rng)
    print(f"  target: {kb.entity_names[episode.goal.target]} "
          f"(user knows {sorted(kb.slots[j] for j in episode.goal.known_values)})")
    for turn in episode.turns:
        print(f"  user : {' '.join(turn.tokens)}")
        if turn.action_index < kb.n_slots:
            action = kd.Action.request(turn.action_index)
        else:
            action = kd.Action.inform(episode.inform_results or ())
        print(f"  agent: {sim.render_agent_action(action, nlg_rng)}")
    outcome = "success" if episode.success else "failure"
    print(f"  [{outcome}; reward {episode.total_reward:+.2f}; "
          f"turns {episode.n_turns}]\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=2)
    ap.add_argument("--kb", default="small@1")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    kb = kd.load_kb(args.kb)
    agent = kd.RuleAgent(kb, "soft")
    for label, noise in SETTINGS:
        sim = kd.UserSimulator(kb, noise=noise)
        print(f"=== {label} "
              f"(corrupt {noise.p_corrupt}, substitute {noise.p_substitute}, "
              f"irrelevant {noise.p_irrelevant}) ===")
        for k in range(args.episodes):
            replay(kb, agent, sim, [args.seed, k])


if __name__ == "__main__":
    main()
