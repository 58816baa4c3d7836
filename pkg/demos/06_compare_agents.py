"""Evaluate every agent variant on one KB and print a standings table.

Rule agents and the exact-lookup oracle run as-is; learned variants are
included when a checkpoint is supplied. The oracle row is evaluated under
its own preconditions (noiseless channel, fully informed user), which is
why it reads as an upper bound rather than a like-for-like competitor.

Run:  python3 demos/06_compare_agents.py [--episodes 2000] \\
          [--checkpoint rl-soft=/tmp/rl-soft.json]
"""

import argparse

import kbdial as kd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--kb", default="small@1")
    ap.add_argument("--episodes", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint", action="append", metavar="VARIANT=PATH",
                    default=[])
    args = ap.parse_args()

    checkpoints = {}
    for pair in args.checkpoint:
        variant, path = pair.split("=", 1)
        checkpoints[kd.canonical_variant(variant)] = path

    kb = kd.load_kb(args.kb)
    sim = kd.UserSimulator(kb, noise=kd.MODERATE_NOISE)
    oracle_sim = kd.UserSimulator(kb, noise=kd.NoiseConfig(), p_know=1.0)

    print(f"{'agent':12s} {'reward':>10s} {'success':>8s} {'turns':>6s}")
    for name in kd.VARIANTS:
        kind = kd.VARIANTS[name][0]
        if kind in ("rl", "e2e") and name not in checkpoints:
            print(f"{name:12s} {'(no checkpoint)':>10s}")
            continue
        agent = kd.build_agent(name, kb, checkpoint=checkpoints.get(name))
        this_sim = oracle_sim if name == "max" else sim
        rep = kd.evaluate(agent, this_sim, args.episodes, (907, args.seed))
        star = " *" if name == "max" else ""
        print(f"{name:12s} {rep.avg_reward:+10.4f} {rep.success_rate:8.3f} "
              f"{rep.avg_turns:6.2f}{star}")
    print("* noiseless channel and fully informed user")


if __name__ == "__main__":
    main()
