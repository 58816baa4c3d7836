"""Command line entry points: generate, train, evaluate, simulate, serve."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .agents import VARIANTS, build_agent, canonical_variant
from .evaluate import SWEEP_PARAMS, evaluate, noise_sweep
from .kb import KbSplitSpec, generate_synthetic, load_kb
from .nnet import ModelConfig, save_checkpoint
from .policy import Action
from .rollout import rollout
from .service import LiveSession, ServiceSettings, create_app
from .simulator import (MODERATE_NOISE, NoiseConfig, RewardConfig,
                        UserSimulator)
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)


def _parse_noise(text: str) -> NoiseConfig:
    """'none', 'moderate', or three comma-separated probabilities."""
    if text == "none":
        return NoiseConfig()
    if text == "moderate":
        return MODERATE_NOISE
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "noise must be none, moderate, or corrupt,substitute,irrelevant")
    return NoiseConfig(*parts)


def _parse_checkpoint_map(pairs: list[str]) -> dict[str, str]:
    mapping = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"expected VARIANT=PATH, got {pair!r}")
        variant, path = pair.split("=", 1)
        mapping[canonical_variant(variant)] = path
    return mapping


def _simulator(kb, args) -> UserSimulator:
    reward = RewardConfig(top_r=args.top_r) if hasattr(args, "top_r") \
        else RewardConfig()
    return UserSimulator(kb, noise=args.noise, reward=reward,
                         p_know=getattr(args, "p_know", 0.8))


def cmd_kb_gen(args) -> int:
    spec = KbSplitSpec(args.rows, args.slots, args.vocab, args.missing,
                       args.seed)
    kb = generate_synthetic(spec)
    text = kb.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("wrote %d rows to %s", kb.n_rows, args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    kb = load_kb(args.kb)
    model_cfg = ModelConfig(hidden_size=args.hidden_size,
                            tracker_hidden_size=args.tracker_hidden_size,
                            lr_il=args.lr_il, lr_rl=args.lr_rl,
                            batch_size=args.batch_size)
    agent = build_agent(args.agent, kb, model_cfg=model_cfg, top_r=args.top_r,
                        init_seed=args.seed)
    sim = _simulator(kb, args)
    cfg = TrainConfig(batch_size=args.batch_size, il_updates=args.il_updates,
                      rl_updates=args.rl_updates, lr_il=args.lr_il,
                      lr_rl=args.lr_rl, eval_every=args.eval_every,
                      eval_episodes=args.eval_episodes,
                      final_episodes=args.final_episodes, seed=args.seed)
    result = train(agent, sim, cfg, metrics_path=args.metrics)
    extras = {"variant": canonical_variant(args.agent)}
    if hasattr(agent, "vocab"):
        extras["feature_vocab"] = agent.vocab.to_list()
    save_checkpoint(args.out, agent.store, model_cfg.to_dict(), extras)
    print(json.dumps(result.final.to_dict(), indent=2))
    return 0


def cmd_eval(args) -> int:
    kb = load_kb(args.kb)
    agent = build_agent(args.agent, kb, checkpoint=args.checkpoint,
                        top_r=args.top_r)
    sim = _simulator(kb, args)
    if args.agent == "max":
        sim.p_know = 1.0
        sim.noise = NoiseConfig()
    report = evaluate(agent, sim, args.n, args.seed)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_sweep(args) -> int:
    kb = load_kb(args.kb)
    checkpoints = _parse_checkpoint_map(args.checkpoint)
    agents = {}
    for name in args.agents.split(","):
        name = canonical_variant(name.strip())
        agents[name] = build_agent(name, kb,
                                   checkpoint=checkpoints.get(name),
                                   top_r=args.top_r)
    values = [float(v) for v in args.values.split(",")]
    rows = noise_sweep(agents, kb, values, args.n, args.seed,
                       param=args.param, p_know=args.p_know)
    if args.format == "json":
        print(json.dumps(rows, indent=2))
        return 0
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["agent", "noise", "avg_reward", "std_err"])
    for row in rows:
        writer.writerow([row["agent"], row["value"],
                         f"{row['avg_reward']:.6f}", f"{row['std_err']:.6f}"])
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_simulate(args) -> int:
    kb = load_kb(args.kb)
    agent = build_agent(args.agent, kb, checkpoint=args.checkpoint,
                        top_r=args.top_r)
    sim = _simulator(kb, args)
    for k in range(args.episodes):
        rng = np.random.default_rng([args.seed, k])
        nlg_rng = np.random.default_rng([args.seed, k, 1])
        episode = rollout(agent, sim, rng)
        print(f"--- episode {k + 1} "
              f"(target: {kb.entity_names[episode.goal.target]}) ---")
        for turn in episode.turns:
            print(f"user : {' '.join(turn.tokens)}")
            if turn.action_index < kb.n_slots:
                rendered = sim.render_agent_action(
                    Action.request(turn.action_index), nlg_rng)
            else:
                rendered = sim.render_agent_action(
                    Action.inform(episode.inform_results or ()), nlg_rng)
            print(f"agent: {rendered}")
        outcome = "success" if episode.success else "failure"
        print(f"[{outcome}; reward {episode.total_reward:+.2f}; "
              f"turns {episode.n_turns}]")
    return 0


def cmd_chat(args) -> int:
    kb = load_kb(args.kb)
    agent = build_agent(args.agent, kb, checkpoint=args.checkpoint,
                        top_r=args.top_r)
    session = LiveSession("local", agent, kb, args.seed,
                          max_turns=RewardConfig().max_turns,
                          eval_mode=args.eval_mode)
    print(f"agent: {session.greeting()}")
    if session.target_card:
        print("find this entity:", json.dumps(session.target_card, indent=2))
    while session.status == "open":
        try:
            text = input("you  : ")
        except EOFError:
            break
        if not text.strip():
            continue
        if text.strip() in (":q", ":quit", ":exit"):
            break
        reply = session.step(text)
        print(f"agent: {reply['rendered_text']}")
        if reply["done"]:
            if "target_rank" in reply:
                rank = reply["target_rank"]
                print("target was"
                      + (f" #{rank} in the list." if rank else " not listed."))
            break
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    kb = load_kb(args.kb)
    settings = ServiceSettings(
        kb=kb,
        checkpoints=_parse_checkpoint_map(args.checkpoint),
        transcript_dir=args.transcripts,
        idle_timeout=args.idle_timeout,
        seed=args.seed,
        top_r=args.top_r,
        max_turns=args.max_turns,
    )
    app = create_app(settings)
    host = args.host or os.environ.get("KBDIAL_HOST", "127.0.0.1")
    port = args.port or int(os.environ.get("KBDIAL_PORT", "8080"))
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


def _add_common(p: argparse.ArgumentParser, kb_required: bool = True) -> None:
    p.add_argument("--kb", required=kb_required, default=None,
                   help="CSV path, split-spec JSON, or named split "
                        "(small/medium/large/xlarge, optional @seed)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-r", type=int, default=5, dest="top_r")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbdial",
        description="Dialogue agents that find KB entities via soft lookup.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kb-gen", help="generate a synthetic KB as CSV")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--slots", type=int, default=6)
    p.add_argument("--vocab", type=int, required=True)
    p.add_argument("--missing", type=float, default=0.20)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_kb_gen)

    p = sub.add_parser("train", help="train an RL or end-to-end agent")
    _add_common(p)
    p.add_argument("--agent", required=True, choices=sorted(VARIANTS))
    p.add_argument("--out", required=True, help="checkpoint JSON path")
    p.add_argument("--metrics", default=None, help="metrics JSONL path")
    p.add_argument("--rl-updates", type=int, default=500)
    p.add_argument("--il-updates", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr-il", type=float, default=0.05)
    p.add_argument("--lr-rl", type=float, default=0.005)
    p.add_argument("--hidden-size", type=int, default=50)
    p.add_argument("--tracker-hidden-size", type=int, default=100)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--eval-episodes", type=int, default=2000)
    p.add_argument("--final-episodes", type=int, default=5000)
    p.add_argument("--noise", type=_parse_noise, default=MODERATE_NOISE)
    p.add_argument("--p-know", type=float, default=0.8, dest="p_know")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate an agent over seeded episodes")
    _add_common(p)
    p.add_argument("--agent", required=True, choices=sorted(VARIANTS))
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--noise", type=_parse_noise, default=MODERATE_NOISE)
    p.add_argument("--p-know", type=float, default=0.8, dest="p_know")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="reward vs. noise level for agents")
    _add_common(p)
    p.add_argument("--agents", required=True,
                   help="comma-separated variant names")
    p.add_argument("--values", default="0.0,0.2,0.4,0.6")
    p.add_argument("--param", default="irrelevant", choices=SWEEP_PARAMS)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--checkpoint", action="append", metavar="VARIANT=PATH")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--p-know", type=float, default=0.8, dest="p_know")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="print sample simulated dialogues")
    _add_common(p)
    p.add_argument("--agent", default="rule-soft", choices=sorted(VARIANTS))
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--noise", type=_parse_noise, default=MODERATE_NOISE)
    p.add_argument("--p-know", type=float, default=0.8, dest="p_know")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("chat", help="terminal dialogue with an agent")
    _add_common(p)
    p.add_argument("--agent", default="rule-soft", choices=sorted(VARIANTS))
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--eval-mode", action="store_true",
                   help="sample a target card to search for")
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("serve", help="run the dialogue HTTP service")
    _add_common(p)
    p.add_argument("--host", default=None,
                   help="bind address (or KBDIAL_HOST; default 127.0.0.1)")
    p.add_argument("--port", type=int, default=None,
                   help="bind port (or KBDIAL_PORT; default 8080)")
    p.add_argument("--checkpoint", action="append", metavar="VARIANT=PATH")
    p.add_argument("--transcripts", default=None,
                   help="directory for per-session JSONL transcripts")
    p.add_argument("--idle-timeout", type=float, default=900.0)
    p.add_argument("--max-turns", type=int, default=RewardConfig().max_turns,
                   help="force an inform once a session reaches this turn")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
