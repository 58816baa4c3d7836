import numpy as np
import pytest

from kbdial.kb import MISSING, load_csv, load_kb
from kbdial.policy import Action
from kbdial.simulator import (MODERATE_NOISE, NoiseConfig, RewardConfig,
                              UserGoal, UserSimulator, discounted_return,
                              load_templates, score_inform)
from kbdial.text import tokenize

CSV = """name,genre,release_year
the winter harbor,dark comedy,1994
echo of crown,comedy,X
ember garden,drama,2001
shadow meridian,X,1994
"""


def tiny_sim(**kwargs):
    return UserSimulator(load_csv(CSV), **kwargs)


class TestScoreInform:
    def setup_method(self):
        self.cfg = RewardConfig(top_r=5)
        self.goal = UserGoal(target=7, known_values={})

    def test_rank_one_scores_two(self):
        r, ok, rank = score_inform(self.goal, [7, 1, 2, 3, 4], self.cfg)
        assert (r, ok, rank) == (2.0, True, 1)

    def test_rank_three_scores_graded(self):
        r, ok, rank = score_inform(self.goal, [1, 2, 7, 3, 4], self.cfg)
        assert (r, ok, rank) == (1.2, True, 3)

    def test_miss_scores_fail_reward(self):
        r, ok, rank = score_inform(self.goal, [1, 2, 3, 4, 5], self.cfg)
        assert (r, ok, rank) == (-1.0, False, None)

    def test_rank_gradient_is_monotone(self):
        rewards = []
        for pos in range(5):
            results = [1, 2, 3, 4, 5]
            results[pos] = 7
            rewards.append(score_inform(self.goal, results, self.cfg)[0])
        assert rewards == sorted(rewards, reverse=True)
        assert min(rewards) > 0.0


class TestDiscountedReturn:
    def test_worked_fixture(self):
        # -0.1 - 0.1*0.99 + 2.0*0.99^2 = -0.199 + 1.9602 = 1.7612
        got = discounted_return([-0.1, -0.1, 2.0], 0.99)
        assert abs(got - 1.7612) < 1e-12

    def test_empty_is_zero(self):
        assert discounted_return([], 0.99) == 0.0

    def test_undiscounted_sums(self):
        assert discounted_return([1.0, 2.0, 3.0], 1.0) == 6.0


class TestConfigs:
    def test_noise_validation(self):
        with pytest.raises(ValueError):
            NoiseConfig(p_corrupt=1.5)
        with pytest.raises(ValueError):
            NoiseConfig(p_irrelevant=-0.1)

    def test_reward_validation(self):
        with pytest.raises(ValueError):
            RewardConfig(top_r=0)
        with pytest.raises(ValueError):
            RewardConfig(gamma=0.0)

    def test_p_know_validation(self):
        with pytest.raises(ValueError):
            tiny_sim(p_know=1.2)

    def test_template_pack_validation(self, tmp_path):
        bad = tmp_path / "pack.json"
        bad.write_text('{"user": {}, "agent": {}}')
        with pytest.raises(ValueError):
            load_templates(str(bad))


class TestGoalSampling:
    def test_known_values_come_from_truth(self):
        kb = load_kb("small@3")
        sim = UserSimulator(kb, p_know=1.0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            goal = sim.sample_goal(rng)
            for j, vid in goal.known_values.items():
                assert vid == kb.truth_ids[goal.target, j]
                assert vid != MISSING

    def test_unknowable_truth_never_known(self):
        kb = load_kb("small@3")
        sim = UserSimulator(kb, p_know=1.0)
        rng = np.random.default_rng(1)
        for _ in range(100):
            goal = sim.sample_goal(rng)
            for j in range(kb.n_slots):
                if kb.truth_ids[goal.target, j] == MISSING:
                    assert not goal.knows(j)

    def test_p_know_controls_coverage(self):
        kb = load_csv(CSV)
        rng = np.random.default_rng(2)
        none = UserSimulator(kb, p_know=0.0)
        assert all(not none.sample_goal(rng).known_values for _ in range(20))
        frac = np.mean([len(UserSimulator(kb, p_know=0.5).sample_goal(rng).known_values)
                        for _ in range(600)])
        assert 0.7 < frac < 1.3  # ~2 knowable slots per row at p=0.5

    def test_targets_cover_table(self):
        sim = tiny_sim()
        rng = np.random.default_rng(3)
        targets = {sim.sample_goal(rng).target for _ in range(200)}
        assert targets == {0, 1, 2, 3}


class TestOpening:
    def test_mentions_one_or_two_known_slots(self):
        sim = tiny_sim(p_know=1.0)
        rng = np.random.default_rng(4)
        sizes = set()
        for _ in range(100):
            goal = sim.sample_goal(rng)
            text, meta = sim.opening(goal, rng)
            assert meta["kind"] == "open"
            sizes.add(len(meta["slots"]))
            for j, vid in meta["slots"].items():
                assert goal.known_values[j] == vid
            assert text
        assert sizes == {1, 2}

    def test_empty_goal_opens_without_constraints(self):
        sim = tiny_sim()
        rng = np.random.default_rng(5)
        goal = UserGoal(target=0, known_values={})
        text, meta = sim.opening(goal, rng)
        assert meta == {"kind": "open", "slots": {}}
        assert "{" not in text

    def test_clean_opening_contains_value_tokens(self):
        sim = tiny_sim(p_know=1.0)
        rng = np.random.default_rng(6)
        for _ in range(20):
            goal = sim.sample_goal(rng)
            text, meta = sim.opening(goal, rng)
            toks = set(tokenize(text))
            for j, vid in meta["slots"].items():
                value_toks = set(tokenize(sim.kb.value_string(j, vid)))
                assert value_toks <= toks


class TestRespond:
    def test_known_slot_yields_value(self):
        sim = tiny_sim(p_know=1.0)
        rng = np.random.default_rng(7)
        goal = UserGoal(target=0, known_values={0: 0, 1: 0})
        text, meta = sim.respond(goal, Action.request(0), rng)
        assert meta == {"kind": "value", "slot": 0, "value": 0}
        assert set(tokenize(sim.kb.value_string(0, 0))) <= set(tokenize(text))

    def test_unknown_slot_yields_dont_know(self):
        sim = tiny_sim()
        rng = np.random.default_rng(8)
        goal = UserGoal(target=1, known_values={0: 1})
        text, meta = sim.respond(goal, Action.request(1), rng)
        assert meta == {"kind": "dont_know", "slot": 1}
        assert text

    def test_rejects_inform(self):
        sim = tiny_sim()
        with pytest.raises(ValueError):
            sim.respond(UserGoal(0, {}), Action.inform([0]),
                        np.random.default_rng(0))


class TestNoiseChannels:
    def test_irrelevant_rate(self):
        sim = tiny_sim(noise=NoiseConfig(p_irrelevant=0.5))
        rng = np.random.default_rng(9)
        goal = UserGoal(target=0, known_values={0: 0})
        kinds = [sim.respond(goal, Action.request(0), rng)[1]["kind"]
                 for _ in range(800)]
        rate = kinds.count("off_topic") / len(kinds)
        assert 0.42 < rate < 0.58

    def test_substitution_swaps_values(self):
        sim = tiny_sim(noise=NoiseConfig(p_substitute=1.0))
        rng = np.random.default_rng(10)
        goal = UserGoal(target=2, known_values={0: 2})  # genre drama
        drama_toks = set(tokenize("drama"))
        for _ in range(20):
            text, meta = sim.respond(goal, Action.request(0), rng)
            # meta reports the intended value; the text mentions another one
            assert meta["value"] == 2
            assert not drama_toks <= set(tokenize(text))

    def test_corruption_drops_tokens_but_never_all(self):
        sim = tiny_sim(noise=NoiseConfig(p_corrupt=1.0))
        rng = np.random.default_rng(11)
        goal = UserGoal(target=0, known_values={0: 0})  # "dark comedy"
        full = set(tokenize("dark comedy"))
        saw_partial = False
        for _ in range(40):
            text, _ = sim.respond(goal, Action.request(0), rng)
            overlap = full & set(tokenize(text))
            assert overlap  # at least one token survives
            saw_partial = saw_partial or (overlap < full)
        assert saw_partial

    def test_zero_noise_is_clean(self):
        sim = tiny_sim()
        rng = np.random.default_rng(12)
        goal = UserGoal(target=0, known_values={0: 0, 1: 0})
        for _ in range(30):
            _, meta = sim.respond(goal, Action.request(0), rng)
            assert meta["kind"] == "value"


class TestAgentRendering:
    def test_request_names_the_slot(self):
        sim = tiny_sim()
        rng = np.random.default_rng(13)
        text = sim.render_agent_action(Action.request(1), rng)
        assert "release year" in text

    def test_inform_lists_entities(self):
        sim = tiny_sim()
        rng = np.random.default_rng(14)
        text = sim.render_agent_action(Action.inform([0, 2]), rng)
        assert "the winter harbor" in text and "ember garden" in text


class TestTemplatePack:
    def test_bundled_pack_loads(self):
        pack = load_templates()
        assert len(pack["user"]["provide_value"]) >= 3
        assert len(pack["agent"]["request"]) >= 3

    def test_moderate_noise_values(self):
        assert MODERATE_NOISE.p_corrupt == 0.15
        assert MODERATE_NOISE.p_substitute == 0.05
        assert MODERATE_NOISE.p_irrelevant == 0.1
