"""Watch the end-to-end agent learn to imitate the hand-crafted tracker.

The end-to-end student backpropagates one loss through its per-slot GRU
trackers, the differentiable posterior, and the policy network. Supervised
updates toward the rule teacher's beliefs and actions pull both metrics at
once: the per-turn KL to the teacher's value distributions collapses, and
the greedy action starts agreeing with the teacher's choice. The defaults
(100 updates) take about a minute; 500 updates reproduce the pretraining
used before policy-gradient fine-tuning.

Run:  python3 demos/05_imitation_pretraining.py [--updates 100]
"""

import argparse
import time

import kbdial as kd
from kbdial.nnet import RmsProp


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--updates", type=int, default=100)
    ap.add_argument("--kb", default="small@1")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--held", type=int, default=200,
                    help="held-out teacher dialogues for the metrics")
    args = ap.parse_args()

    kb = kd.load_kb(args.kb)
    sim = kd.UserSimulator(kb, noise=kd.MODERATE_NOISE)
    teacher = kd.RuleAgent(kb, "soft")
    held = kd.collect_episodes(teacher, sim, args.held, (4242, args.seed),
                               "eval", record_beliefs=True)
    agent = kd.build_agent("e2e", kb, init_seed=args.seed)

    start = kd.imitation_metrics(agent, held)
    print(f"random init: kl={start['mean_kl']:.3f} "
          f"agreement={start['action_agreement']:.3f}")

    optimizer = RmsProp(0.005)
    t0 = time.time()
    for u in range(1, args.updates + 1):
        batch = kd.collect_episodes(teacher, sim, 128, (args.seed, 17, u),
                                    "eval", record_beliefs=True)
        stats = kd.imitation_update(agent, batch, optimizer, action_weight=3.0)
        if u % 25 == 0 or u == args.updates:
            m = kd.imitation_metrics(agent, held)
            drop = 1.0 - m["mean_kl"] / start["mean_kl"]
            print(f"update {u:4d}: loss={stats['loss']:.3f} "
                  f"kl={m['mean_kl']:.3f} (drop {drop:.0%}) "
                  f"agreement={m['action_agreement']:.3f} "
                  f"({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
