"""Train a recurrent-policy agent and compare it with the rule baselines.

The student first mimics the matching rule policy's actions (imitation
phase), then fine-tunes with policy gradients against the simulator. The
defaults reproduce the soft-posterior student on the small split: roughly
three minutes on one core, ending above the no-lookup rule baseline.

Run:  python3 demos/04_train_policy_agent.py [--agent rl-soft] \\
          [--out /tmp/rl-soft.json]
"""

import argparse
import time

import kbdial as kd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--agent", default="rl-soft",
                    choices=["rl-soft", "rl-hard", "rl-no-kb"])
    ap.add_argument("--kb", default="small@1")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--il-updates", type=int, default=400)
    ap.add_argument("--rl-updates", type=int, default=300)
    ap.add_argument("--out", default=None, help="checkpoint JSON path")
    args = ap.parse_args()

    kb = kd.load_kb(args.kb)
    sim = kd.UserSimulator(kb, noise=kd.MODERATE_NOISE)
    agent = kd.build_agent(args.agent, kb, init_seed=args.seed)
    cfg = kd.TrainConfig(batch_size=128, il_updates=args.il_updates,
                         rl_updates=args.rl_updates, lr_il=0.2, lr_rl=0.001,
                         eval_every=100, eval_episodes=400,
                         final_episodes=2000, seed=args.seed)

    t0 = time.time()
    result = kd.train(agent, sim, cfg)
    for point in result.curve:
        print(f"  update {point['update']:4d} ({point['phase']}): "
              f"reward {point['eval_reward']:+.3f} "
              f"success {point['eval_success']:.3f}")
    print(f"trained {args.agent} in {time.time() - t0:.0f}s; "
          f"final reward {result.final.avg_reward:+.4f} "
          f"+- {result.final.std_err:.4f} over {result.final.n_episodes} "
          f"episodes")

    for name in ("rule-no-kb", "rule-soft"):
        rep = kd.evaluate(kd.build_agent(name, kb), sim, 2000, (907, args.seed))
        print(f"  {name:11s} reward {rep.avg_reward:+.4f} "
              f"+- {rep.std_err:.4f}")

    if args.out:
        kd.save_checkpoint(args.out, agent.store, agent.model_cfg.to_dict(),
                           extras={"variant": args.agent})
        print(f"checkpoint written to {args.out}")


if __name__ == "__main__":
    main()
