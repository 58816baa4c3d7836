"""Grid-search the rule-policy thresholds against the simulator.

The hand-crafted policy has four knobs (inform threshold on the posterior
entropy, slot-entropy floor, floor fraction of the initial entropy, per-slot
request cap) and the hand-crafted tracker has its update weight C. All are
meant to be tuned against the simulator; this script does a coarse sweep on
the small split and prints the leaders for each rule variant.

Run:  python3 demos/03_tune_rule_thresholds.py [--episodes 300]
"""

import argparse
import itertools

import kbdial as kd
from kbdial.beliefs import HandTrackerConfig


def score(variant, kb, sim, cfg, tracker_cfg, episodes, seed):
    agent = kd.RuleAgent(kb, kd.VARIANTS[variant][1], cfg=cfg,
                         tracker_cfg=tracker_cfg, variant=variant)
    report = kd.evaluate(agent, sim, episodes, (seed, 5))
    return report


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=300)
    ap.add_argument("--kb", default="small@1")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--variant", default=None,
                    help="tune only one of rule-soft/rule-hard/rule-no-kb")
    args = ap.parse_args()

    kb = kd.load_kb(args.kb)
    sim = kd.UserSimulator(kb, noise=kd.MODERATE_NOISE)

    grids = {
        "rule-soft": dict(alpha_r=[1.0, 2.0, 3.0], alpha_t=[9.0],
                          beta=[0.6, 0.75, 0.9], q_max=[1, 2],
                          c=[1.0, 2.0, 5.0]),
        "rule-hard": dict(alpha_r=[0.5, 1.0, 2.0], alpha_t=[9.0],
                          beta=[0.6, 0.75, 0.9], q_max=[1, 2], c=[None]),
        "rule-no-kb": dict(alpha_r=[0.0], alpha_t=[9.0],
                           beta=[0.5, 0.7, 0.9], q_max=[1, 2], c=[None]),
    }
    variants = [args.variant] if args.variant else list(grids)

    best_c = None
    for variant in variants:
        grid = grids[variant]
        rows = []
        for ar, at, b, q, c in itertools.product(
                grid["alpha_r"], grid["alpha_t"], grid["beta"],
                grid["q_max"], grid["c"]):
            if c is None:
                c = best_c if best_c is not None else 1.0
            cfg = kd.RulePolicyConfig(alpha_r=ar, alpha_t=at, beta=b, q_max=q)
            tcfg = HandTrackerConfig(update_weight=c)
            rep = score(variant, kb, sim, cfg, tcfg, args.episodes, args.seed)
            rows.append((rep.avg_reward, rep.success_rate, rep.avg_turns,
                         ar, b, q, c))
            print(f"{variant:11s} aR={ar:4.1f} beta={b:4.2f} Q={q} C={c:3.1f}"
                  f" -> R={rep.avg_reward:+.3f} S={rep.success_rate:.3f}"
                  f" T={rep.avg_turns:.2f}")
        rows.sort(reverse=True)
        r, s, t, ar, b, q, c = rows[0]
        print(f"** best {variant}: aR={ar} beta={b} Q={q} C={c} "
              f"(R={r:+.3f} S={s:.3f} T={t:.2f})\n")
        if variant == "rule-soft":
            best_c = c


if __name__ == "__main__":
    main()
