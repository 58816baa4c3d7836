"""End-to-end acceptance checks for the dialogue system.

One test per guarantee: posterior correctness against the enumeration
oracle, hand-derived posterior fixtures, finite-difference gradient checks
for every differentiable component, reward arithmetic fixtures, the oracle
agent's perfect score, the learned soft agent beating its baselines, the
imitation-pretraining quality of the end-to-end agent, reward degradation
under irrelevant-utterance noise, and bit-identical evaluation.

The two checks that train agents from scratch dominate the runtime
(roughly 25 minutes on one desktop core); everything else finishes in
seconds.
"""

import time

import numpy as np

from kbdial import nnet
from kbdial.agents import RuleAgent, build_agent
from kbdial.beliefs import BeliefState
from kbdial.evaluate import evaluate, noise_sweep
from kbdial.kb import (MISSING, KbSplitSpec, KbTable, generate_synthetic,
                       load_csv, load_kb)
from kbdial.nnet import ModelConfig, ParamStore, save_checkpoint
from kbdial.policy import PolicyNet, log_mu_nodes
from kbdial.rollout import Episode, TurnRecord
from kbdial.simulator import (MODERATE_NOISE, NoiseConfig, RewardConfig,
                              UserGoal, UserSimulator, discounted_return,
                              score_inform)
from kbdial.softkb import (posterior, posterior_nodes, posterior_oracle,
                           summary_nodes)
from kbdial.trainer import (TrainConfig, collect_episodes, imitation_loss,
                            imitation_metrics, policy_surrogate, train)

TINY_CSV = """name,genre,release_year
the winter harbor,drama,1994
echo of crown,comedy,2001
ember garden,drama,2001
shadow meridian,comedy,1994
"""

SEEDS = (0, 1, 2)


def random_beliefs(kb, rng, know=None):
    dists = [rng.dirichlet(np.ones(kb.vocab_size(j)))
             for j in range(kb.n_slots)]
    if know is None:
        know = rng.uniform(0.0, 1.0, size=kb.n_slots)
    return BeliefState(dists, np.asarray(know, dtype=np.float64))


def test_posterior_matches_enumeration_oracle():
    # Elementwise agreement with the brute-force enumeration over know/
    # don't-know outcomes on small tables, then exact normalization on
    # tables up to the largest split size.
    t0 = time.monotonic()
    rng = np.random.default_rng(2024)
    for _ in range(200):
        spec = KbSplitSpec(n_rows=int(rng.integers(2, 51)),
                           n_slots=int(rng.integers(1, 5)),
                           max_vocab=int(rng.integers(2, 9)),
                           missing_fraction=float(rng.uniform(0.0, 0.5)),
                           seed=int(rng.integers(0, 2 ** 31)))
        kb = generate_synthetic(spec)
        b = random_beliefs(kb, rng)
        fast = posterior(b, kb).probs
        slow = posterior_oracle(b, kb).probs
        assert np.abs(fast - slow).max() < 1e-12

    for i in range(50):
        spec = KbSplitSpec(n_rows=3523 if i == 0 else int(rng.integers(2, 3524)),
                           n_slots=int(rng.integers(1, 7)),
                           max_vocab=int(rng.integers(2, 101)),
                           missing_fraction=float(rng.uniform(0.0, 0.5)),
                           seed=int(rng.integers(0, 2 ** 31)))
        kb = generate_synthetic(spec)
        for _ in range(20):
            b = random_beliefs(kb, rng)
            assert abs(posterior(b, kb).probs.sum() - 1.0) < 1e-9
    assert time.monotonic() - t0 < 10.0


def test_hand_derived_posteriors_are_exact():
    # Two-row tables small enough to work through by hand. 0.65 and 0.35
    # have no exact binary representation, so "exact" means equal to within
    # 1e-15 — a few units in the last place of float64.
    kb = KbTable(["genre"], [["a", "b"]], [[0], [1]])
    certain = BeliefState([np.array([0.8, 0.2])], np.array([1.0]))
    np.testing.assert_allclose(posterior(certain, kb).probs, [0.8, 0.2],
                               rtol=0, atol=1e-15)
    np.testing.assert_array_equal(posterior_oracle(certain, kb).probs,
                                  [0.8, 0.2])

    half = BeliefState([np.array([0.8, 0.2])], np.array([0.5]))
    # Row terms: 0.5*0.8 + 0.5*0.5 = 0.65 and 0.5*0.2 + 0.5*0.5 = 0.35.
    np.testing.assert_allclose(posterior(half, kb).probs, [0.65, 0.35],
                               rtol=0, atol=1e-15)
    np.testing.assert_allclose(posterior_oracle(half, kb).probs, [0.65, 0.35],
                               rtol=0, atol=1e-15)

    gap = KbTable(["genre"], [["a"]], [[0], [MISSING]])
    sure = BeliefState([np.array([1.0])], np.array([1.0]))
    # A certain match scores (1 - 1/2)*1 = 0.5; a missing cell scores 1/N.
    np.testing.assert_allclose(posterior(sure, gap).probs, [0.5, 0.5],
                               rtol=0, atol=1e-15)
    np.testing.assert_allclose(posterior_oracle(sure, gap).probs, [0.5, 0.5],
                               rtol=0, atol=1e-15)

    unknown = random_beliefs(load_csv(TINY_CSV), np.random.default_rng(0),
                             know=np.zeros(2))
    np.testing.assert_allclose(posterior(unknown, load_csv(TINY_CSV)).probs,
                               np.full(4, 0.25), rtol=0, atol=1e-15)


def _fake_episode(rewards, actions, inputs):
    prevs = [None] + actions[:-1]
    turns = [TurnRecord(tokens=(), act={}, action_index=a, log_pi=None,
                        reward=r, prev_action=p, policy_input=x)
             for r, a, x, p in zip(rewards, actions, inputs, prevs)]
    return Episode(variant="test", goal=UserGoal(0, {}), turns=turns)


def test_analytic_gradients_match_finite_differences():
    # Central differences at eps=1e-5 against the analytic backward pass
    # for every differentiable component, each within 1e-4 relative error.
    t0 = time.monotonic()
    rng = np.random.default_rng(3)
    sim = UserSimulator(load_csv(TINY_CSV), reward=RewardConfig(top_r=2))
    small = ModelConfig(hidden_size=8, tracker_hidden_size=6)
    worst = {}

    # Neural tracker, three-turn unroll. The input-projection matrices are
    # skipped only because their width is the n-gram vocabulary (two loss
    # rebuilds per scalar); the recurrent and head tensors cover every
    # distinct gradient path.
    agent = build_agent("e2e", sim.kb, top_r=2, model_cfg=small)
    utts = [("looking", "for", "a", "drama"), ("from", "1994"),
            ("i", "dont", "know")]
    xs = [nnet.constant(agent.vocab.featurize(list(u))[:, None])
          for u in utts]
    mixers = [[rng.normal(size=(sim.kb.vocab_size(j), 1)) for j in range(2)]
              for _ in range(3)]

    def tracker_loss():
        hidden = agent.tracker.initial_hidden()
        total = None
        for t in range(3):
            hidden, p_nodes, q_rows = agent.tracker.step_nodes(xs[t], hidden)
            for j in range(sim.kb.n_slots):
                term = nnet.add(
                    nnet.nsum(nnet.mul(nnet.log(p_nodes[j]),
                                       nnet.constant(mixers[t][j]))),
                    nnet.nsum(q_rows[j]))
                total = term if total is None else nnet.add(total, term)
        return total

    worst["tracker"] = nnet.finite_diff_check(
        tracker_loss, agent.store,
        param_names=["trk0.Ur", "trk0.Uz", "trk0.Uh", "trk0.br", "trk0.bh",
                     "trk0.Wp", "trk0.bp", "trk0.Wq", "trk0.bq",
                     "trk1.Uh", "trk1.Wp", "trk1.bq"])

    # Recurrent policy network, three-turn unroll, batch of two.
    store = ParamStore(rng)
    net = PolicyNet(store, input_dim=3, n_actions=4, hidden_size=5)
    cols = [rng.normal(size=(3, 2)) for _ in range(3)]
    mix = [rng.normal(size=(4, 2)) for _ in range(3)]

    def policy_loss():
        hidden = net.initial_hidden(batch=2)
        total = None
        for t in range(3):
            probs, hidden = net.forward_nodes(nnet.constant(cols[t]), hidden)
            term = nnet.nsum(nnet.mul(nnet.log(probs), nnet.constant(mix[t])))
            total = term if total is None else nnet.add(total, term)
        return total

    worst["policy"] = nnet.finite_diff_check(policy_loss, store)

    # Imitation loss for the end-to-end agent on teacher dialogues.
    teacher = RuleAgent(sim.kb, "soft", top_r=2)
    demos = collect_episodes(teacher, sim, 2, (2, 9), "eval",
                             record_beliefs=True)

    def il_loss():
        return imitation_loss(agent, demos, action_weight=3.0)

    worst["imitation"] = nnet.finite_diff_check(
        il_loss, agent.store,
        param_names=["trk0.br", "trk0.Uh", "trk0.Wp", "trk0.bq", "trk1.bp",
                     "pol.Uz", "pol.Wa", "pol.ba"])

    # Policy-gradient surrogate over a weighted batch.
    store2 = ParamStore(rng)
    net2 = PolicyNet(store2, input_dim=3, n_actions=4, hidden_size=5)
    feats = [rng.normal(size=3) for _ in range(5)]
    episodes = [_fake_episode([-0.1, -0.1, 1.9], [0, 1, 3], feats[:3]),
                _fake_episode([-0.1, -1.1], [2, 3], feats[3:])]
    weights = np.array([0.7, -0.4])

    def surrogate_loss():
        return policy_surrogate(net2, episodes, weights)

    worst["reinforce"] = nnet.finite_diff_check(surrogate_loss, store2)

    # Ordered-inform log-probability through the posterior and the summary
    # vector, parameterized by per-slot belief logits.
    kb = load_csv(TINY_CSV)
    store3 = ParamStore(rng, init_scale=1.0)
    for j in range(kb.n_slots):
        store3.ensure(f"z{j}", (kb.vocab_size(j), 1))
        store3.ensure(f"y{j}", (1, 1))

    def mu_loss():
        p_nodes = [nnet.softmax_cols(store3.node(f"z{j}"))
                   for j in range(kb.n_slots)]
        q_rows = [nnet.sigmoid(store3.node(f"y{j}"))
                  for j in range(kb.n_slots)]
        post = posterior_nodes(p_nodes, q_rows, kb)
        summary = summary_nodes(post, q_rows, kb)
        return nnet.add(log_mu_nodes(post, [0, 2]), nnet.nsum(summary))

    worst["log_mu"] = nnet.finite_diff_check(mu_loss, store3)

    assert max(worst.values()) < 1e-4, worst
    assert time.monotonic() - t0 < 60.0


def test_inform_reward_and_return_fixtures():
    cfg = RewardConfig()
    goal = UserGoal(7, {})
    assert abs(score_inform(goal, [7, 1, 2, 3, 4], cfg)[0] - 2.0) < 1e-12
    assert abs(score_inform(goal, [1, 2, 7, 3, 4], cfg)[0] - 1.2) < 1e-12
    assert abs(score_inform(goal, [1, 2, 3, 4, 5], cfg)[0] - (-1.0)) < 1e-12
    # -0.1 - 0.099 + 2*0.9801 = 1.7612.
    assert abs(discounted_return([-0.1, -0.1, 2.0], 0.99) - 1.7612) < 1e-12


def test_oracle_agent_always_succeeds_without_noise():
    # Perfect user knowledge and a noiseless channel: the exact-lookup
    # agent must place the target in its list every single time.
    t0 = time.monotonic()
    kb = load_kb("medium@1")
    sim = UserSimulator(kb, noise=NoiseConfig(), p_know=1.0)
    report = evaluate(build_agent("max", kb), sim, 2000, 11)
    assert report.success_rate == 1.0
    assert time.monotonic() - t0 < 120.0


def test_learned_soft_agent_beats_baselines():
    # After imitation bootstrap plus policy-gradient training (700 updates
    # in total), the soft-posterior student must beat the no-lookup rule
    # agent and stay within 0.05 average reward of the hard-lookup student,
    # on a majority of three training seeds. Evaluation episodes are
    # matched across agents via shared seed streams.
    t0 = time.monotonic()
    kb = load_kb("small@1")
    sim = UserSimulator(kb, noise=MODERATE_NOISE)
    no_kb = {s: evaluate(RuleAgent(kb, "nokb"), sim, 2000, (907, s)).avg_reward
             for s in SEEDS}
    reward = {}
    for variant in ("rl-soft", "rl-hard"):
        for s in SEEDS:
            agent = build_agent(variant, kb, init_seed=s)
            cfg = TrainConfig(batch_size=128, il_updates=400, rl_updates=300,
                              lr_il=0.2, lr_rl=0.001, eval_every=100,
                              eval_episodes=400, final_episodes=50, seed=s)
            train(agent, sim, cfg)
            reward[variant, s] = evaluate(agent, sim, 2000,
                                          (907, s)).avg_reward
    beats_no_kb = sum(reward["rl-soft", s] > no_kb[s] for s in SEEDS)
    matches_hard = sum(reward["rl-soft", s] >= reward["rl-hard", s] - 0.05
                       for s in SEEDS)
    assert beats_no_kb >= 2, (reward, no_kb)
    assert matches_hard >= 2, reward
    assert time.monotonic() - t0 < 1800.0


def test_imitation_pretraining_tracks_rule_teacher():
    # 500 supervised updates toward the hand-crafted tracker and policy:
    # the per-turn KL to the teacher's beliefs must at least halve from its
    # random-init value, and the greedy action must agree with the teacher
    # on more than 80% of held-out teacher turns.
    kb = load_kb("small@1")
    sim = UserSimulator(kb, noise=MODERATE_NOISE)
    teacher = RuleAgent(kb, "soft")
    held = collect_episodes(teacher, sim, 500, (4242, 0), "eval",
                            record_beliefs=True)
    agent = build_agent("e2e", kb, init_seed=0)
    before = imitation_metrics(agent, held)
    cfg = TrainConfig(batch_size=128, il_updates=500, rl_updates=0,
                      eval_every=0, eval_episodes=50, final_episodes=50,
                      seed=0)
    train(agent, sim, cfg, teacher=teacher)
    after = imitation_metrics(agent, held)
    assert after["mean_kl"] <= 0.5 * before["mean_kl"], (before, after)
    assert after["action_agreement"] > 0.8, (before, after)


def test_reward_drops_with_irrelevant_utterances():
    # Flooding the channel with irrelevant user turns must cost the rule
    # agent real reward: the drop from a clean channel exceeds twice the
    # combined standard error.
    kb = load_kb("small@1")
    agent = build_agent("rule-soft", kb)
    rows = noise_sweep({"rule-soft": agent}, kb, [0.0, 0.6],
                       n_episodes=2000, seed=42)
    clean, noisy = rows
    margin = clean["avg_reward"] - noisy["avg_reward"]
    threshold = 2.0 * np.hypot(clean["std_err"], noisy["std_err"])
    assert margin > threshold, rows


def test_evaluation_reports_are_bit_identical(tmp_path):
    kb = load_kb("small@1")
    sim = UserSimulator(kb, noise=MODERATE_NOISE)
    agent = build_agent("rl-soft", kb, init_seed=5)
    path = str(tmp_path / "ckpt.json")
    save_checkpoint(path, agent.store, agent.model_cfg.to_dict(),
                    extras={"variant": "rl-soft"})
    first = evaluate(build_agent("rl-soft", kb, checkpoint=path),
                     sim, 200, (31, 4))
    second = evaluate(build_agent("rl-soft", kb, checkpoint=path),
                      sim, 200, (31, 4))
    assert first.rewards == second.rewards
    assert first.successes == second.successes
    assert first.turns == second.turns
    assert first.avg_reward == second.avg_reward
    assert first.std_err == second.std_err
