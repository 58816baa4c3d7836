"""Sweep one noise channel and watch each rule agent degrade.

The sweep holds every other channel at zero, so the curve isolates how a
single failure mode (off-topic turns, corrupted values, or neighbouring-value
substitutions) erodes reward. The soft-lookup agent should fall more slowly
than the hard-lookup one: a corrupted answer only tilts its posterior,
whereas a hard lookup is poisoned by a single wrong constraint.

Run:  python3 demos/07_noise_sweep.py [--param irrelevant] [--episodes 500]
"""

import argparse

import kbdial as kd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--kb", default="small@1")
    ap.add_argument("--param", default="irrelevant",
                    choices=("irrelevant", "corrupt", "substitute"))
    ap.add_argument("--levels", default="0.0,0.2,0.4,0.6")
    ap.add_argument("--episodes", type=int, default=500)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    kb = kd.load_kb(args.kb)
    levels = [float(v) for v in args.levels.split(",")]
    agents = {name: kd.build_agent(name, kb)
              for name in ("rule-no-kb", "rule-hard", "rule-soft")}

    rows = kd.noise_sweep(agents, kb, levels, args.episodes, args.seed,
                          param=args.param)

    print(f"avg reward vs p_{args.param} ({args.episodes} episodes/cell)")
    print(f"{'agent':12s}" + "".join(f"{v:>10.2f}" for v in levels))
    for name in agents:
        cells = [r for r in rows if r["agent"] == name]
        cells.sort(key=lambda r: r["value"])
        line = "".join(f"{c['avg_reward']:>+10.4f}" for c in cells)
        print(f"{name:12s}{line}")

    print()
    print("standard errors")
    for name in agents:
        cells = sorted((r for r in rows if r["agent"] == name),
                       key=lambda r: r["value"])
        line = "".join(f"{c['std_err']:>10.4f}" for c in cells)
        print(f"{name:12s}{line}")


if __name__ == "__main__":
    main()
