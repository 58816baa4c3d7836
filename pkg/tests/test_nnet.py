import os

import numpy as np
import pytest

from kbdial import nnet
from kbdial.nnet import (ModelConfig, Node, ParamStore, RmsProp, backward,
                         finite_diff_check, load_checkpoint, no_grad,
                         save_checkpoint, sgd_step)


def scalar_loss(node):
    return nnet.nsum(node)


class TestBackwardBasics:
    def test_add_mul_chain(self):
        store = ParamStore(np.random.default_rng(0))
        store.ensure("a", (3, 2))
        store.ensure("b", (3, 2))

        def build():
            a, b = store.node("a"), store.node("b")
            return scalar_loss(nnet.mul(nnet.add(a, b), a))

        assert finite_diff_check(build, store) < 1e-6

    def test_broadcasting_gradients(self):
        store = ParamStore(np.random.default_rng(1))
        store.ensure("w", (4, 1))
        store.ensure("b", (1, 1))

        def build():
            w, b = store.node("w"), store.node("b")
            x = nnet.constant(np.arange(12.0).reshape(4, 3) / 10.0)
            return scalar_loss(nnet.mul(nnet.add(x, b), w))

        assert finite_diff_check(build, store) < 1e-6

    def test_matmul_and_nonlinearities(self):
        rng = np.random.default_rng(2)
        store = ParamStore(rng)
        store.ensure("W", (3, 5))
        x = rng.normal(size=(5, 4))

        def build():
            z = store.node("W") @ nnet.constant(x)
            return scalar_loss(nnet.add(nnet.tanh(z),
                                        nnet.mul(nnet.sigmoid(z), nnet.exp(
                                            nnet.mul(z, nnet.constant(0.1))))))

        assert finite_diff_check(build, store) < 1e-6

    def test_div_log_sum(self):
        store = ParamStore(np.random.default_rng(3))
        store.ensure("p", (6, 2))
        store.values["p"] = np.abs(store.values["p"]) + 0.5

        def build():
            p = store.node("p")
            norm = nnet.div(p, nnet.nsum(p, axis=0, keepdims=True))
            return scalar_loss(nnet.mul(nnet.constant(-1.0), nnet.log(norm)))

        assert finite_diff_check(build, store) < 1e-6

    def test_grad_accumulates_over_reuse(self):
        store = ParamStore(np.random.default_rng(4))
        store.ensure("v", (3, 1))

        def build():
            v = store.node("v")
            return scalar_loss(nnet.add(nnet.mul(v, v), v))

        grads = backward(build())
        expected = 2.0 * store.values["v"] + 1.0
        np.testing.assert_allclose(grads["v"], expected, rtol=1e-12)


class TestStructuralOps:
    def test_concat_rows_and_slice_cols(self):
        store = ParamStore(np.random.default_rng(5))
        store.ensure("a", (2, 4))
        store.ensure("b", (3, 4))

        def build():
            cat = nnet.concat_rows([store.node("a"), store.node("b")])
            left = nnet.slice_cols(cat, 0, 2)
            return scalar_loss(nnet.mul(left, left))

        assert finite_diff_check(build, store) < 1e-6

    def test_pick_columns(self):
        store = ParamStore(np.random.default_rng(6))
        store.ensure("p", (4, 3))
        store.values["p"] = np.abs(store.values["p"]) + 0.2

        def build():
            picked = nnet.pick_columns(store.node("p"), [2, 0, 3])
            return scalar_loss(nnet.log(picked))

        assert finite_diff_check(build, store) < 1e-6

    def test_take_rows(self):
        store = ParamStore(np.random.default_rng(7))
        store.ensure("m", (5, 2))

        def build():
            return scalar_loss(nnet.mul(nnet.take_rows(store.node("m"),
                                                       [0, 2, 2]),
                                        nnet.constant(1.5)))

        assert finite_diff_check(build, store) < 1e-6

    def test_softmax_cols_is_stochastic(self):
        rng = np.random.default_rng(8)
        z = nnet.constant(rng.normal(scale=30.0, size=(7, 5)))
        p = nnet.softmax_cols(z).value
        np.testing.assert_allclose(p.sum(axis=0), np.ones(5), atol=1e-12)
        assert (p > 0).all()


class TestRecurrentCell:
    def test_gru_unroll_gradients(self):
        rng = np.random.default_rng(9)
        store = ParamStore(rng)
        nnet.init_gru_params(store, "g", 4, 6)
        xs = [rng.normal(size=(4, 3)) for _ in range(3)]

        def build():
            params = nnet.gru_params(store, "g")
            h = nnet.constant(np.zeros((6, 3)))
            for x in xs:
                h = nnet.gru_step(nnet.constant(x), h, params)
            return scalar_loss(nnet.mul(h, h))

        assert finite_diff_check(build, store) < 1e-5

    def test_affine_heads(self):
        rng = np.random.default_rng(10)
        store = ParamStore(rng)
        store.ensure("W", (5, 6))
        store.ensure("b", (5, 1))
        store.ensure("wq", (1, 6))
        store.ensure("bq", (1, 1))
        h = rng.normal(size=(6, 2))

        def build():
            probs = nnet.affine_softmax(nnet.constant(h), store.node("W"),
                                        store.node("b"))
            q = nnet.affine_sigmoid(nnet.constant(h), store.node("wq"),
                                    store.node("bq"))
            return scalar_loss(nnet.add(nnet.log(probs), nnet.log(q)))

        assert finite_diff_check(build, store) < 1e-6


class TestNoGrad:
    def test_no_parents_recorded(self):
        store = ParamStore(np.random.default_rng(11))
        store.ensure("w", (2, 2))
        with no_grad():
            out = nnet.mul(store.node("w"), store.node("w"))
        assert out.parents == ()
        grads = backward(scalar_loss(out))
        assert "w" not in grads


class TestOptimizers:
    def test_sgd_descends(self):
        store = ParamStore(np.random.default_rng(12))
        store.ensure("w", (2, 1))
        before = store.values["w"].copy()
        sgd_step(store, {"w": np.ones((2, 1))}, lr=0.1)
        np.testing.assert_allclose(store.values["w"], before - 0.1)

    def test_rmsprop_reduces_quadratic(self):
        store = ParamStore(np.random.default_rng(13))
        store.ensure("w", (4, 1))
        store.values["w"] += 1.0
        opt = RmsProp(lr=0.05)
        losses = []
        for _ in range(60):
            w = store.node("w")
            loss = scalar_loss(nnet.mul(w, w))
            losses.append(loss.item())
            opt.step(store, backward(loss))
        assert losses[-1] < 0.05 * losses[0]


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        store = ParamStore(np.random.default_rng(14))
        store.ensure("layer.W", (3, 4))
        store.ensure("layer.b", (3, 1))
        path = os.path.join(tmp_path, "model.json")
        save_checkpoint(path, store, {"hidden_size": 50},
                        extras={"variant": "rl-soft"})
        loaded, config, extras = load_checkpoint(path)
        assert config == {"hidden_size": 50}
        assert extras == {"variant": "rl-soft"}
        for name in store.names():
            np.testing.assert_array_equal(loaded.values[name],
                                          store.values[name])

    def test_rejects_unknown_version(self, tmp_path):
        path = os.path.join(tmp_path, "bad.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write('{"format_version": 99, "params": {}}')
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestModelConfig:
    def test_round_trip(self):
        cfg = ModelConfig(hidden_size=32, tracker_hidden_size=64)
        again = ModelConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(hidden_size=0)
        with pytest.raises(ValueError):
            ModelConfig(lr_il=0.0)
