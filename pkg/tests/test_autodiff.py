import numpy as np
import pytest

from tground import autodiff as ad
from helpers import gradcheck


def param(rng, shape, name="p"):
    return ad.Parameter(rng.uniform(-1, 1, size=shape), name=name)


class TestForwardOps:
    def test_softmax_symmetry(self):
        out = ad.softmax(ad.constant([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(3)
        out = ad.softmax(ad.constant(rng.normal(size=(4, 7))), axis=1)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)

    def test_l2_normalize_345(self):
        out = ad.l2_normalize(ad.constant([3.0, 4.0]))
        np.testing.assert_allclose(out.data, [0.6, 0.8], atol=1e-6)

    def test_l2_normalize_unit_norm(self):
        rng = np.random.default_rng(4)
        out = ad.l2_normalize(ad.constant(rng.normal(size=(5, 9))), axis=1)
        np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0,
                                   atol=1e-6)

    def test_distance_identity(self):
        x = ad.constant([1.0, -2.0, 3.5])
        assert ad.euclidean_distance(x, x).item() < 1e-5

    def test_distance_symmetric_nonnegative(self):
        rng = np.random.default_rng(5)
        a = ad.constant(rng.normal(size=6))
        b = ad.constant(rng.normal(size=6))
        dab = ad.euclidean_distance(a, b).item()
        dba = ad.euclidean_distance(b, a).item()
        assert dab == pytest.approx(dba) and dab >= 0

    def test_shape_mismatch_names_op_and_shapes(self):
        with pytest.raises(ValueError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(7)
            x = ad.constant(rng.uniform(-1, 1, size=(3, 4)))
            w = ad.constant(rng.uniform(-1, 1, size=(4, 2)))
            return ad.softmax(ad.tanh(ad.matmul(x, w)), axis=1).data
        assert np.array_equal(run(), run())


class TestBackward:
    def test_dot_gradient(self):
        x = ad.Parameter(np.array([1.0, 2.0]), name="x")
        with ad.Tape() as tape:
            loss = ad.sum_(ad.mul(x, x))
            ad.backward(tape, loss)
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_sigmoid_gradient_at_zero(self):
        x = ad.Parameter(np.array([0.0]), name="x")
        with ad.Tape() as tape:
            loss = ad.sum_(ad.sigmoid(x))
            ad.backward(tape, loss)
        np.testing.assert_allclose(x.grad, [0.25])

    def test_non_scalar_loss_rejected(self):
        x = ad.Parameter(np.ones(3), name="x")
        with ad.Tape() as tape:
            y = ad.mul(x, x)
            with pytest.raises(ValueError, match="scalar"):
                ad.backward(tape, y)

    def test_unreached_parameter_gets_zero_gradient(self):
        x = ad.Parameter(np.ones(2), name="x")
        unused = ad.Parameter(np.ones(2), name="unused")
        with ad.Tape() as tape:
            loss = ad.sum_(ad.mul(x, x))
            ad.backward(tape, loss)
        assert np.array_equal(unused.grad, np.zeros(2))

    def test_three_layer_network_finite_differences(self):
        rng = np.random.default_rng(11)
        w1, w2, w3 = (param(rng, (4, 5), "w1"), param(rng, (5, 3), "w2"),
                      param(rng, (3, 1), "w3"))
        x = ad.constant(rng.uniform(-1, 1, size=(2, 4)))

        def loss():
            h1 = ad.tanh(ad.matmul(x, w1))
            h2 = ad.sigmoid(ad.matmul(h1, w2))
            return ad.sum_(ad.matmul(h2, w3))

        gradcheck(loss, [w1, w2, w3])


class TestPrimitiveGradients:
    """Every primitive against central finite differences at 64-bit."""

    @pytest.mark.parametrize("seed", range(3))
    def test_elementwise_and_reductions(self, seed):
        rng = np.random.default_rng(100 + seed)
        x = param(rng, (3, 4), "x")
        y = param(rng, (3, 4), "y")
        cases = [
            lambda: ad.sum_(ad.add(x, y)),
            lambda: ad.sum_(ad.sub(x, y)),
            lambda: ad.sum_(ad.mul(x, y)),
            lambda: ad.sum_(ad.scale(x, 1.7)),
            lambda: ad.sum_(ad.sigmoid(x)),
            lambda: ad.sum_(ad.mul(ad.tanh(x), y)),
            lambda: ad.sum_(ad.mean(x, axis=1)),
            lambda: ad.mean(ad.mul(x, y)),
            lambda: ad.sum_(ad.mul(ad.softmax(x, axis=1), y)),
            lambda: ad.sum_(ad.mul(ad.l2_normalize(x, axis=1), y)),
            lambda: ad.sum_(ad.transpose(ad.mul(x, y))),
            lambda: ad.sum_(ad.reshape(ad.mul(x, y), (4, 3))),
            lambda: ad.sum_(ad.concat([x, y], axis=1)),
            lambda: ad.sum_(ad.mul(ad.concat([x, y], axis=0),
                                   ad.concat([y, x], axis=0))),
        ]
        for build in cases:
            gradcheck(build, [x, y])

    @pytest.mark.parametrize("seed", range(3))
    def test_kinked_ops_away_from_kinks(self, seed):
        # relu/max are checked at inputs bounded away from the kink
        rng = np.random.default_rng(200 + seed)
        data = rng.uniform(-1, 1, size=(3, 4))
        data[np.abs(data) < 0.05] = 0.1
        x = ad.Parameter(data, name="x")
        gradcheck(lambda: ad.sum_(ad.relu(x)), [x])
        gradcheck(lambda: ad.sum_(ad.maximum(x, 0.0)), [x])
        gradcheck(lambda: ad.sum_(ad.maximum(x, 0.3)), [x])

    @pytest.mark.parametrize("seed", range(3))
    def test_matmul_and_gather(self, seed):
        rng = np.random.default_rng(300 + seed)
        a = param(rng, (3, 4), "a")
        b = param(rng, (4, 2), "b")
        gradcheck(lambda: ad.sum_(ad.matmul(a, b)), [a, b])
        gradcheck(lambda: ad.sum_(ad.take_rows(a, [0, 2, 2])), [a])
        gradcheck(lambda: ad.take(ad.reshape(ad.matmul(a, b), (-1,)), 3), [a, b])
        gradcheck(lambda: ad.sum_(ad.broadcast_rows(ad.take_rows(a, [1]), 5)),
                  [a])

    @pytest.mark.parametrize("seed", range(3))
    def test_distances(self, seed):
        rng = np.random.default_rng(400 + seed)
        a = param(rng, (3, 5), "a")
        b = param(rng, (4, 5), "b")
        v = param(rng, (5,), "v")
        w = param(rng, (5,), "w")
        gradcheck(lambda: ad.sum_(ad.pairwise_distance(a, b)), [a, b])
        gradcheck(lambda: ad.euclidean_distance(v, w), [v, w])

    def test_bias_broadcast_gradient(self):
        rng = np.random.default_rng(500)
        x = param(rng, (3, 4), "x")
        bias = param(rng, (1, 4), "bias")
        gradcheck(lambda: ad.sum_(ad.sigmoid(ad.add(x, bias))), [x, bias])


class TestSgd:
    def test_basic_step(self):
        p = ad.Parameter(np.array([1.0]), name="p")
        p.grad[:] = 0.5
        ad.sgd_step([p], 0, ad.SgdConfig(lr=0.1))
        np.testing.assert_allclose(p.data, [0.95])
        assert np.array_equal(p.grad, [0.0])

    def test_decay_schedule(self):
        cfg = ad.SgdConfig(lr=0.05, decay=0.1, decay_every=33)
        assert cfg.rate(0) == pytest.approx(0.05)
        assert cfg.rate(32) == pytest.approx(0.05)
        assert cfg.rate(33) == pytest.approx(0.005)
        assert cfg.rate(66) == pytest.approx(0.0005)

    def test_lr_multiplier_scales_step(self):
        p1 = ad.Parameter(np.array([1.0]), name="a", lr_scale=1.0)
        p10 = ad.Parameter(np.array([1.0]), name="b", lr_scale=10.0)
        p1.grad[:] = 0.2
        p10.grad[:] = 0.2
        ad.sgd_step([p1, p10], 0, ad.SgdConfig(lr=0.01))
        step1 = 1.0 - p1.data[0]
        step10 = 1.0 - p10.data[0]
        assert step10 == pytest.approx(10 * step1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ad.SgdConfig(lr=0)
        with pytest.raises(ValueError):
            ad.SgdConfig(decay=1.5)
        with pytest.raises(ValueError):
            ad.SgdConfig(decay_every=0)
        with pytest.raises(ValueError):
            ad.Parameter(np.ones(1), lr_scale=0)


class TestCheckpoint:
    def test_bit_exact_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        params = {
            "layer.w": ad.Parameter(rng.normal(size=(3, 4)).astype(np.float32)),
            "layer.b": ad.Parameter(rng.normal(size=(1, 4)).astype(np.float64)),
        }
        path = tmp_path / "ckpt.npz"
        ad.save_checkpoint(path, params)
        loaded = ad.load_checkpoint(path)
        for name, p in params.items():
            assert np.array_equal(loaded[name], p.data)
            assert loaded[name].dtype == p.data.dtype
