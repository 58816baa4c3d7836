import io

import numpy as np
import pytest

from kbdial.beliefs import BeliefState
from kbdial.kb import (KbSplitSpec, KbTable, MISSING, N_RESULT_BINS,
                       generate_synthetic, hard_kb_lookup, load_csv, load_kb,
                       result_bin, split_spec)

CSV = """name,genre,release_year
the winter harbor,drama,1994
echo of crown,comedy,X
ember garden,drama,2001
shadow meridian,X,1994
"""


def tiny_kb():
    return load_csv(CSV)


class TestLoadCsv:
    def test_shapes_and_names(self):
        kb = tiny_kb()
        assert kb.slots == ("genre", "release_year")
        assert kb.n_rows == 4 and kb.n_slots == 2
        assert kb.entity_names[0] == "the winter harbor"

    def test_missing_cells(self):
        kb = tiny_kb()
        assert kb.value_ids[1, 1] == MISSING
        assert kb.value_ids[3, 0] == MISSING
        assert kb.missing_counts.tolist() == [1, 1]

    def test_vocab_and_priors(self):
        kb = tiny_kb()
        j = kb.slots.index("genre")
        assert set(kb.vocabs[j]) == {"drama", "comedy"}
        drama = kb.vocabs[j].index("drama")
        assert kb.counts[j][drama] == 2.0
        np.testing.assert_allclose(kb.priors[j].sum(), 1.0)
        np.testing.assert_allclose(kb.priors[j][drama], 2.0 / 3.0)

    def test_values_normalized(self):
        kb = load_csv("genre\n Drama \ndrama\n")
        assert kb.vocabs[0] == ("drama",)
        assert kb.value_id(0, "DRAMA") == 0
        assert kb.value_id(0, "noir") is None

    def test_round_trip(self):
        kb = tiny_kb()
        again = load_csv(kb.to_csv())
        assert again.slots == kb.slots
        np.testing.assert_array_equal(again.value_ids, kb.value_ids)
        assert again.entity_names == kb.entity_names

    def test_rejects_bad_tables(self):
        with pytest.raises(ValueError):
            load_csv(io.StringIO(""))
        with pytest.raises(ValueError):
            load_csv("genre\n")
        with pytest.raises(ValueError):
            load_csv("genre,release_year\ndrama\n")
        with pytest.raises(ValueError):
            load_csv(io.StringIO("name\nonly-names\n"))


class TestCachedArrays:
    def test_row_coefficients_formula(self):
        kb = tiny_kb()
        for j in range(kb.n_slots):
            coef = kb.row_coefficients(j)
            frac = 1.0 - kb.missing_counts[j] / kb.n_rows
            for i in range(kb.n_rows):
                vid = kb.value_ids[i, j]
                if vid == MISSING:
                    assert coef[i] == 0.0
                else:
                    assert coef[i] == pytest.approx(frac / kb.counts[j][vid])

    def test_scatter_matches_coefficients(self):
        rng = np.random.default_rng(4)
        kb = tiny_kb()
        for j in range(kb.n_slots):
            p = rng.dirichlet(np.ones(kb.vocab_size(j)))
            via_matrix = kb.scatter_matrix(j) @ p
            direct = np.zeros(kb.n_rows)
            for i in range(kb.n_rows):
                vid = kb.value_ids[i, j]
                if vid != MISSING:
                    direct[i] = kb.row_coefficients(j)[i] * p[vid]
            np.testing.assert_allclose(via_matrix, direct)

    def test_value_indicator_columns(self):
        kb = tiny_kb()
        for j in range(kb.n_slots):
            ind = kb.value_indicator(j)
            assert ind.shape == (kb.vocab_size(j), kb.n_rows)
            col_sums = ind.sum(axis=0)
            np.testing.assert_array_equal(
                col_sums, (kb.value_ids[:, j] != MISSING).astype(float))


class TestGenerateSynthetic:
    def test_shapes_and_missing_budget(self):
        for seed in range(5):
            spec = KbSplitSpec(n_rows=60, n_slots=6, max_vocab=12,
                               missing_fraction=0.2, seed=seed)
            kb = generate_synthetic(spec)
            assert kb.n_rows == 60 and kb.n_slots == 6
            assert (kb.missing_counts == 12).all()
            for j in range(kb.n_slots):
                assert 2 <= kb.vocab_size(j) <= 12

    def test_truth_consistent_with_observed(self):
        kb = generate_synthetic(KbSplitSpec(80, 6, 10, 0.25, seed=3))
        obs = kb.value_ids != MISSING
        np.testing.assert_array_equal(kb.value_ids[obs], kb.truth_ids[obs])

    def test_deterministic_in_seed(self):
        a = generate_synthetic(KbSplitSpec(40, 6, 8, 0.1, seed=9))
        b = generate_synthetic(KbSplitSpec(40, 6, 8, 0.1, seed=9))
        np.testing.assert_array_equal(a.value_ids, b.value_ids)
        assert a.vocabs == b.vocabs and a.entity_names == b.entity_names

    def test_value_frequencies_skewed(self):
        # the most common value should clearly beat the uniform share
        kb = generate_synthetic(KbSplitSpec(500, 6, 40, 0.0, seed=2))
        tops = [kb.counts[j].max() / kb.counts[j].sum()
                for j in range(kb.n_slots) if kb.vocab_size(j) >= 30]
        assert tops and np.mean(tops) > 1.6 / 40

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            KbSplitSpec(0, 6, 10, 0.1, seed=0)
        with pytest.raises(ValueError):
            KbSplitSpec(10, 6, 1, 0.1, seed=0)
        with pytest.raises(ValueError):
            KbSplitSpec(10, 6, 10, 1.0, seed=0)


class TestNamedSplits:
    def test_split_spec_parses_seed_suffix(self):
        spec = split_spec("medium@7")
        assert spec.seed == 7 and spec.n_rows == 428

    def test_load_kb_named(self):
        kb = load_kb("small@1")
        assert kb.n_rows == 277 and kb.n_slots == 6
        assert max(kb.vocab_size(j) for j in range(6)) == 17

    def test_unknown_split(self):
        with pytest.raises(ValueError):
            load_kb("gigantic@3")


class TestHardLookup:
    def kb(self):
        return load_csv(CSV)

    def uniform_beliefs(self, kb):
        return BeliefState([p.copy() for p in kb.priors],
                           np.ones(kb.n_slots))

    def test_unconstrained_returns_everything(self):
        kb = self.kb()
        rows, onehot = hard_kb_lookup(kb, self.uniform_beliefs(kb))
        assert rows.tolist() == [0, 1, 2, 3]
        assert onehot[min(4, N_RESULT_BINS - 1)] == 1.0

    def test_pinned_slot_filters_with_missing_wildcard(self):
        kb = self.kb()
        beliefs = self.uniform_beliefs(kb)
        j = kb.slots.index("genre")
        drama = kb.vocabs[j].index("drama")
        d = np.zeros(kb.vocab_size(j))
        d[drama] = 1.0
        beliefs.dists[j] = d
        rows, _ = hard_kb_lookup(kb, beliefs)
        # drama rows plus the row whose genre cell is missing
        assert rows.tolist() == [0, 2, 3]

    def test_dont_know_slot_never_constrains(self):
        kb = self.kb()
        beliefs = self.uniform_beliefs(kb)
        j = kb.slots.index("genre")
        d = np.zeros(kb.vocab_size(j))
        d[kb.vocabs[j].index("comedy")] = 1.0
        beliefs.dists[j] = d
        beliefs.know[j] = 0.0
        rows, _ = hard_kb_lookup(kb, beliefs)
        assert rows.tolist() == [0, 1, 2, 3]

    def test_prior_level_beliefs_do_not_constrain(self):
        # a belief that merely mirrors the prior has no evidence to query on
        kb = generate_synthetic(KbSplitSpec(50, 6, 8, 0.1, seed=5))
        rows, _ = hard_kb_lookup(kb, self.uniform_beliefs(kb))
        assert len(rows) == kb.n_rows


class TestResultBin:
    def test_one_hot_bins(self):
        assert result_bin(0).argmax() == 0
        assert result_bin(3).argmax() == 3
        assert result_bin(N_RESULT_BINS - 1).argmax() == N_RESULT_BINS - 1
        assert result_bin(999).argmax() == N_RESULT_BINS - 1
        for c in range(8):
            assert result_bin(c).sum() == 1.0
