import numpy as np
import pytest

from dageq.eqnet import (
    ArchConfig,
    EqLayerParams,
    EqModel,
    FcModel,
    eq_layer_backward,
    eq_layer_forward,
    fc_backward,
    fc_forward,
    fc_logits,
    init_fc,
    init_params,
    model_backward,
    model_forward,
    model_logits,
    num_params,
    parameters,
)
from dageq.featurize import CorrelationFeature
from dageq.util import sigmoid

from conftest import fd_grad, max_rel_err


def single_channel_layer(w1=0.0, w2=0.0, w3=0.0, w4=0.0, b=0.0):
    return EqLayerParams(
        w1=np.array([[w1]]),
        w2=np.array([[w2]]),
        w3=np.array([[w3]]),
        w4=np.array([[w4]]),
        b=np.array([b]),
    )


def random_layer(rng, c_in, c_out):
    return EqLayerParams(
        *(rng.normal(0, 1, (c_out, c_in)) for _ in range(4)), rng.normal(0, 1, c_out)
    )


def random_model(rng, dims, alpha=0.01, pooling="mean"):
    layers = [random_layer(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
    return EqModel(layers, alpha=alpha, pooling=pooling)


def random_rho(rng, d):
    """A valid correlation-like matrix: symmetric, unit diagonal, in [-1, 1]."""
    a = rng.uniform(-1, 1, (d, d))
    rho = np.clip((a + a.T) / 2, -1, 1)
    np.fill_diagonal(rho, 1.0)
    return rho


class TestLayerForward:
    def test_identity_configuration(self, rng):
        x = rng.normal(0, 1, (1, 4, 4))
        layer = single_channel_layer(w1=1.0)
        for mode in ("mean", "sum"):
            assert np.array_equal(eq_layer_forward(x, layer, mode), x)

    def test_pool_all_on_identity_matrix(self):
        # grand sum of I2 is 2, broadcast everywhere
        y = eq_layer_forward(np.eye(2)[None], single_channel_layer(w4=1.0), "sum")
        assert np.array_equal(y, np.full((1, 2, 2), 2.0))

    def test_pool_rows_broadcasts_column_means(self):
        x = np.array([[1.0, 3.0], [5.0, 7.0]])[None]
        y = eq_layer_forward(x, single_channel_layer(w2=1.0), "mean")
        assert np.array_equal(y[0], np.array([[3.0, 5.0], [3.0, 5.0]]))

    def test_pool_cols_broadcasts_row_means(self):
        x = np.array([[1.0, 3.0], [5.0, 7.0]])[None]
        y = eq_layer_forward(x, single_channel_layer(w3=1.0), "mean")
        assert np.array_equal(y[0], np.array([[2.0, 2.0], [6.0, 6.0]]))

    def test_bias_only(self):
        y = eq_layer_forward(np.zeros((1, 3, 3)), single_channel_layer(b=0.25), "mean")
        assert np.array_equal(y, np.full((1, 3, 3), 0.25))

    def test_mean_and_sum_modes_differ_by_d(self, rng):
        x = rng.normal(0, 1, (1, 5, 5))
        layer = single_channel_layer(w2=1.0)
        mean = eq_layer_forward(x, layer, "mean")
        total = eq_layer_forward(x, layer, "sum")
        assert np.allclose(total, 5.0 * mean)

    def test_channel_mixing_sums_inputs(self, rng):
        # two input channels with unit w1 weights: output is their sum
        x = rng.normal(0, 1, (2, 3, 3))
        layer = EqLayerParams(
            w1=np.ones((1, 2)), w2=np.zeros((1, 2)), w3=np.zeros((1, 2)),
            w4=np.zeros((1, 2)), b=np.zeros(1),
        )
        assert np.allclose(eq_layer_forward(x, layer, "mean"), x.sum(0, keepdims=True))

    def test_batched_matches_loop(self, rng):
        layer = random_layer(rng, 3, 2)
        xb = rng.normal(0, 1, (5, 3, 4, 4))
        batched = eq_layer_forward(xb, layer, "mean")
        for i in range(5):
            assert np.allclose(batched[i], eq_layer_forward(xb[i], layer, "mean"))

    def test_shape_errors(self, rng):
        layer = random_layer(rng, 3, 2)
        with pytest.raises(ValueError, match="channels"):
            eq_layer_forward(rng.normal(0, 1, (2, 4, 4)), layer)
        with pytest.raises(ValueError, match="square"):
            eq_layer_forward(rng.normal(0, 1, (3, 4, 5)), layer)


class TestLayerBackward:
    def test_w1_only_adjoint(self, rng):
        layer = single_channel_layer(w1=1.7)
        x = rng.normal(0, 1, (1, 4, 4))
        gy = rng.normal(0, 1, (1, 4, 4))
        gx, _ = eq_layer_backward(gy, x, layer, "mean")
        assert np.allclose(gx, 1.7 * gy)

    def test_zero_grad_y_gives_zero_grads(self, rng):
        layer = random_layer(rng, 2, 3)
        x = rng.normal(0, 1, (2, 4, 4))
        gx, gp = eq_layer_backward(np.zeros((3, 4, 4)), x, layer, "mean")
        assert not gx.any()
        for arr in (gp.w1, gp.w2, gp.w3, gp.w4, gp.b):
            assert not arr.any()

    @pytest.mark.parametrize("pooling", ["mean", "sum"])
    def test_matches_finite_differences(self, rng, pooling):
        d, c_in, c_out = 4, 3, 2
        x = rng.normal(0, 1, (c_in, d, d))
        layer = random_layer(rng, c_in, c_out)
        gy = rng.normal(0, 1, (c_out, d, d))

        def scalar():
            return float((eq_layer_forward(x, layer, pooling) * gy).sum())

        gx, gp = eq_layer_backward(gy, x, layer, pooling)
        assert max_rel_err(gx, fd_grad(scalar, x)) < 1e-4
        for arr, grad in [
            (layer.w1, gp.w1), (layer.w2, gp.w2), (layer.w3, gp.w3),
            (layer.w4, gp.w4), (layer.b, gp.b),
        ]:
            assert max_rel_err(grad, fd_grad(scalar, arr)) < 1e-4

    def test_shape_mismatch_rejected(self, rng):
        layer = random_layer(rng, 2, 3)
        x = rng.normal(0, 1, (2, 4, 4))
        with pytest.raises(ValueError, match="channels"):
            eq_layer_backward(rng.normal(0, 1, (2, 4, 4)), x, layer)


class TestModelForward:
    def test_output_shape_and_range(self, rng):
        model = random_model(rng, [1, 6, 1])
        p = model_forward(random_rho(rng, 7), model)
        assert p.shape == (7, 7)
        assert p.min() > 0.0 and p.max() < 1.0

    def test_accepts_feature_object(self, rng):
        model = random_model(rng, [1, 4, 1])
        rho = random_rho(rng, 5)
        assert np.array_equal(
            model_forward(CorrelationFeature(rho), model), model_forward(rho, model)
        )

    @pytest.mark.parametrize("d", [1, 3, 10, 31])
    def test_variable_size(self, rng, d):
        model = random_model(rng, [1, 4, 1])
        assert model_forward(random_rho(rng, d), model).shape == (d, d)

    def test_equivariance(self, rng):
        for trial in range(20):
            d = int(rng.choice([3, 6, 11]))
            model = random_model(rng, [1, 8, 8, 1], pooling=str(rng.choice(["mean", "sum"])))
            rho = random_rho(rng, d)
            p = rng.permutation(d)
            lhs = model_forward(rho[np.ix_(p, p)], model)
            rhs = model_forward(rho, model)[np.ix_(p, p)]
            assert np.abs(lhs - rhs).max() <= 1e-6

    def test_deterministic(self, rng):
        model = random_model(rng, [1, 5, 1])
        rho = random_rho(rng, 6)
        assert np.array_equal(model_forward(rho, model), model_forward(rho, model))

    def test_batched_logits_match_single(self, rng):
        model = random_model(rng, [1, 5, 1])
        batch = np.stack([random_rho(rng, 6) for _ in range(4)])
        z, _ = model_logits(model, batch)
        for i in range(4):
            single = model_forward(batch[i], model)
            assert np.allclose(sigmoid(z[i]), single, atol=1e-12)

    def test_end_to_end_gradient(self, rng):
        # full model + BCE through sigmoid, checked against finite differences
        d = 4
        model = random_model(rng, [1, 4, 1], alpha=0.1)
        batch = np.stack([random_rho(rng, d) for _ in range(2)])
        y = (rng.random((2, d, d)) < 0.3).astype(np.float64)

        def scalar():
            z, _ = model_logits(model, batch)
            p = np.clip(sigmoid(z), 1e-12, 1 - 1e-12)
            return float(-(y * np.log(p) + (1 - y) * np.log1p(-p)).sum() / 2)

        z, cache = model_logits(model, batch)
        gz = (sigmoid(z) - y) / 2
        grads = model_backward(model, cache, gz)
        for param, grad in zip(parameters(model), grads):
            assert max_rel_err(grad, fd_grad(scalar, param)) < 1e-3


class TestInit:
    def test_default_architecture(self):
        model = init_params(ArchConfig(), np.random.default_rng(0))
        assert len(model.layers) == 6
        assert model.layers[0].c_in == 1 and model.layers[0].c_out == 300
        assert model.layers[-1].c_in == 300 and model.layers[-1].c_out == 1

    def test_desk_parameter_count(self):
        model = init_params(ArchConfig(layers=4, channels=64), np.random.default_rng(0))
        dims = [1, 64, 64, 64, 1]
        expected = sum(4 * a * b + b for a, b in zip(dims[:-1], dims[1:]))
        assert num_params(model) == expected == 33473

    def test_same_seed_identical(self):
        a = init_params(ArchConfig(layers=3, channels=8), np.random.default_rng(7))
        b = init_params(ArchConfig(layers=3, channels=8), np.random.default_rng(7))
        for pa, pb in zip(parameters(a), parameters(b)):
            assert np.array_equal(pa, pb)

    def test_biases_start_at_zero(self):
        model = init_params(ArchConfig(layers=2, channels=4), np.random.default_rng(1))
        for layer in model.layers:
            assert not layer.b.any()

    def test_invalid_arch_rejected(self):
        with pytest.raises(ValueError):
            ArchConfig(layers=0)
        with pytest.raises(ValueError):
            ArchConfig(channels=0)
        with pytest.raises(ValueError):
            EqModel([], alpha=0.01)


class TestFcBaseline:
    def test_output_shape_and_range(self, rng):
        model = init_fc(5, rng, n_layers=3, hidden=32)
        p = fc_forward(random_rho(rng, 5), model)
        assert p.shape == (5, 5)
        assert p.min() > 0.0 and p.max() < 1.0

    def test_zero_weight_model_outputs_sigmoid_bias(self, rng):
        model = init_fc(3, rng, n_layers=2, hidden=8)
        for w in model.weights:
            w[...] = 0.0
        model.biases[-1][...] = 0.4
        p = fc_forward(random_rho(rng, 3), model)
        assert np.allclose(p, 1.0 / (1.0 + np.exp(-0.4)))

    def test_wrong_size_rejected(self, rng):
        model = init_fc(5, rng, n_layers=2, hidden=8)
        with pytest.raises(ValueError, match="fixed to d=5"):
            fc_forward(random_rho(rng, 6), model)

    def test_not_permutation_equivariant(self, rng):
        # a generic FC model must violate the equivariance identity for some P
        model = init_fc(4, rng, n_layers=3, hidden=16)
        violated = False
        for _ in range(10):
            rho = random_rho(rng, 4)
            p = rng.permutation(4)
            if (p == np.arange(4)).all():
                continue
            lhs = fc_forward(rho[np.ix_(p, p)], model)
            rhs = fc_forward(rho, model)[np.ix_(p, p)]
            if np.abs(lhs - rhs).max() > 1e-6:
                violated = True
                break
        assert violated

    def test_gradient_matches_finite_differences(self, rng):
        model = init_fc(3, rng, n_layers=2, hidden=6)
        batch = np.stack([random_rho(rng, 3) for _ in range(2)])
        y = (rng.random((2, 9)) < 0.3).astype(np.float64)

        def scalar():
            z, _ = fc_logits(model, batch)
            p = np.clip(sigmoid(z), 1e-12, 1 - 1e-12)
            return float(-(y * np.log(p) + (1 - y) * np.log1p(-p)).sum() / 2)

        z, cache = fc_logits(model, batch)
        gz = (sigmoid(z) - y) / 2
        grads = fc_backward(model, cache, gz)
        for param, grad in zip(parameters(model), grads):
            assert max_rel_err(grad, fd_grad(scalar, param)) < 1e-3


class TestParameters:
    def test_live_references(self, rng):
        model = random_model(rng, [1, 3, 1])
        parameters(model)[0][0, 0] = 123.0
        assert model.layers[0].w1[0, 0] == 123.0

    def test_unsupported_type(self):
        with pytest.raises(TypeError):
            parameters(object())
