"""
Tests de la diferenciación automática
"""

import numpy as np
import pytest

from conftest import numeric_gradient
from src import autodiff as ad
from src.autodiff import ParameterSet, Tape, Tensor
from src.exceptions import DimensionError, NumericalError, ParameterError, StateError, ValidationError


def _param(array, name):
    return Tensor(np.asarray(array, dtype=np.float64), True, name, np.float64)


class TestGradients:

    def test_dense_tanh_bce_matches_finite_differences(self, rng):
        x = Tensor(rng.normal(size=(5, 4)), dtype=np.float64)
        y = np.array([[0], [1], [1], [0], [1]], dtype=np.float64)
        w1 = _param(rng.normal(size=(4, 3)), 'w1')
        b1 = _param(rng.normal(size=3), 'b1')
        w2 = _param(rng.normal(size=(3, 1)), 'w2')
        b2 = _param(rng.normal(size=1), 'b2')
        params = ParameterSet({'w1': w1, 'b1': b1, 'w2': w2, 'b2': b2})

        def forward():
            hidden = ad.activation(ad.dense(x, w1, b1), 'tanh')
            return ad.bce_with_logits(ad.dense(hidden, w2, b2), y)

        with Tape() as tape:
            loss = forward()
        ad.backward(tape, loss, params)

        for tensor in (w1, b1, w2, b2):
            expected = numeric_gradient(lambda: forward().item(), tensor.data)
            np.testing.assert_allclose(tensor.grad, expected, rtol=1e-5, atol=1e-8)

    @pytest.mark.parametrize('stride', [1, 2])
    def test_conv2d_matches_finite_differences(self, rng, stride):
        x = _param(rng.normal(size=(2, 2, 7, 7)), 'x')
        weight = _param(rng.normal(size=(3, 2, 3, 3)), 'weight')
        bias = _param(rng.normal(size=3), 'bias')

        def forward():
            return ad.tensor_sum(ad.activation(ad.conv2d(x, weight, bias, stride), 'tanh'))

        with Tape() as tape:
            loss = forward()
        ad.backward(tape, loss, ParameterSet({'x': x, 'weight': weight, 'bias': bias}))

        for tensor in (x, weight, bias):
            expected = numeric_gradient(lambda: forward().item(), tensor.data)
            np.testing.assert_allclose(tensor.grad, expected, rtol=1e-5, atol=1e-7)

    def test_maxpool_routes_gradient_to_first_maximum_on_ties(self):
        x = _param(np.ones((1, 1, 2, 2)), 'x')
        with Tape() as tape:
            loss = ad.tensor_sum(ad.maxpool2d(x, 2, 1))
        ad.backward(tape, loss, ParameterSet({'x': x}))
        np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_overlapping_pool_windows_accumulate(self):
        x = _param(np.array([[[[0.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 0.0]]]]), 'x')
        with Tape() as tape:
            loss = ad.tensor_sum(ad.maxpool2d(x, 2, 1))
        ad.backward(tape, loss, ParameterSet({'x': x}))
        assert x.grad[0, 0, 1, 1] == 4.0
        assert x.grad.sum() == 4.0


LAYER_CASES = [(i, (1 + i % 2, 1 + i % 3, 4 + i % 3, 4 + (i // 3) % 3)) for i in range(20)]


def _layer_forward(kind, x, extra, seed):
    """Capa `kind` seguida de tanh y media, para que el gradiente no sea constante"""
    if kind == 'conv2d':
        out = ad.conv2d(x, extra['weight'], extra['bias'], 1 + seed % 2)
    elif kind == 'maxpool2d':
        out = ad.maxpool2d(x, 2, 1 + seed % 2)
    elif kind in ('relu', 'sigmoid', 'tanh'):
        out = ad.activation(x, kind)
    elif kind == 'dropout':
        out = ad.dropout(x, 0.3, True, np.random.default_rng(seed))
    elif kind == 'reshape':
        out = ad.reshape(x, (x.shape[0], x.shape[1], -1))
    elif kind == 'flatten':
        out = ad.flatten(x)
    elif kind == 'dense':
        out = ad.dense(ad.flatten(x), extra['weight'], extra['bias'])
    else:
        out = ad.scale(x, 1.5)
    return ad.mean(ad.activation(out, 'tanh'))


def _layer_params(kind, shape, gen):
    if kind == 'conv2d':
        return {'weight': _param(gen.normal(size=(2, shape[1], 2, 2)), 'weight'), 'bias': _param(gen.normal(size=2), 'bias')}
    if kind == 'dense':
        features = int(np.prod(shape[1:]))
        return {'weight': _param(gen.normal(size=(features, 3)), 'weight'), 'bias': _param(gen.normal(size=3), 'bias')}
    return {}


class TestLayerGradients:

    @pytest.mark.parametrize('seed,shape', LAYER_CASES)
    @pytest.mark.parametrize(
        'kind', ['conv2d', 'maxpool2d', 'relu', 'sigmoid', 'tanh', 'dropout', 'reshape', 'flatten', 'dense', 'scale']
    )
    def test_layer_matches_finite_differences(self, kind, seed, shape):
        gen = np.random.default_rng(seed)
        x = _param(gen.normal(size=shape), 'x')
        extra = _layer_params(kind, shape, gen)
        tensors = {'x': x, **extra}

        with Tape() as tape:
            loss = _layer_forward(kind, x, extra, seed)
        ad.backward(tape, loss, ParameterSet(tensors))

        for name, tensor in tensors.items():
            expected = numeric_gradient(lambda: _layer_forward(kind, x, extra, seed).item(), tensor.data)
            np.testing.assert_allclose(tensor.grad, expected, rtol=1e-4, atol=1e-7, err_msg=f"{kind}:{name}")

    @pytest.mark.parametrize('seed', range(5))
    def test_conv2d_without_bias_is_linear(self, seed):
        gen = np.random.default_rng(seed)
        x = gen.normal(size=(2, 3, 6, 6))
        weight = Tensor(gen.normal(size=(4, 3, 3, 3)), dtype=np.float64)
        bias = Tensor(np.zeros(4), dtype=np.float64)
        factor = float(gen.uniform(-3, 3))
        scaled = ad.conv2d(Tensor(factor * x, dtype=np.float64), weight, bias).data
        plain = ad.conv2d(Tensor(x, dtype=np.float64), weight, bias).data
        np.testing.assert_allclose(scaled, factor * plain, rtol=1e-10, atol=1e-12)


class TestShapes:

    def test_conv_output_size_uses_valid_padding(self):
        x = Tensor(np.zeros((1, 1, 128, 128), dtype=np.float32))
        weight = Tensor(np.zeros((8, 1, 4, 4), dtype=np.float32))
        bias = Tensor(np.zeros(8, dtype=np.float32))
        assert ad.conv2d(x, weight, bias, stride=2).shape == (1, 8, 63, 63)

    def test_channel_mismatch_is_a_dimension_error(self):
        x = Tensor(np.zeros((1, 2, 8, 8)))
        weight = Tensor(np.zeros((4, 1, 3, 3)))
        with pytest.raises(DimensionError):
            ad.conv2d(x, weight, Tensor(np.zeros(4)))

    def test_kernel_larger_than_input(self):
        with pytest.raises(DimensionError):
            ad.maxpool2d(Tensor(np.zeros((1, 1, 1, 1))), 2, 1)

    def test_invalid_stride(self):
        x = Tensor(np.zeros((1, 1, 4, 4)))
        with pytest.raises(ParameterError):
            ad.conv2d(x, Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros(1)), stride=0)

    def test_item_requires_scalar(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros(3)).item()


class TestLoss:

    def test_bce_is_stable_for_extreme_logits(self):
        confident = ad.bce_with_logits(Tensor(np.array([[1000.0]])), [[1]])
        wrong = ad.bce_with_logits(Tensor(np.array([[-1000.0]])), [[1]])
        assert confident.item() == pytest.approx(0.0, abs=1e-12)
        assert wrong.item() == pytest.approx(1000.0)

    def test_bce_at_zero_logit(self):
        loss = ad.bce_with_logits(Tensor(np.zeros((4, 1))), [0, 1, 0, 1])
        assert loss.item() == pytest.approx(np.log(2.0))

    def test_bce_rejects_non_binary_labels(self):
        with pytest.raises(ValidationError):
            ad.bce_with_logits(Tensor(np.zeros((2, 1))), [0, 2])

    def test_bce_rejects_label_count_mismatch(self):
        with pytest.raises(DimensionError):
            ad.bce_with_logits(Tensor(np.zeros((2, 1))), [0, 1, 1])

    def test_sigmoid_saturates_without_overflow(self):
        with np.errstate(over='raise'):
            values = ad.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_allclose(values, [0.0, 0.5, 1.0])


class TestDropout:

    def test_eval_mode_is_identity(self):
        x = Tensor(np.ones((3, 4)))
        assert ad.dropout(x, 0.5, training=False) is x

    def test_training_mask_is_inverted(self, rng):
        x = Tensor(np.ones((50, 40)))
        out = ad.dropout(x, 0.5, training=True, rng=rng)
        assert set(np.unique(out.data)) <= {0.0, 2.0}
        assert 0.4 < np.mean(out.data == 0.0) < 0.6

    def test_inverted_scaling_preserves_the_expectation(self):
        x = Tensor(np.ones(1))
        gen = np.random.default_rng(2024)
        outputs = [ad.dropout(x, 0.5, True, gen).data[0] for _ in range(10_000)]
        assert np.mean(outputs) == pytest.approx(1.0, abs=0.02)

    def test_same_seed_same_mask(self):
        x = Tensor(np.ones((10, 10)))
        a = ad.dropout(x, 0.5, True, np.random.default_rng(0))
        b = ad.dropout(x, 0.5, True, np.random.default_rng(0))
        np.testing.assert_array_equal(a.data, b.data)

    @pytest.mark.parametrize('p', [-0.1, 1.0])
    def test_probability_out_of_range(self, p):
        with pytest.raises(ParameterError):
            ad.dropout(Tensor(np.ones(2)), p, True, np.random.default_rng(0))

    def test_training_requires_generator(self):
        with pytest.raises(ParameterError):
            ad.dropout(Tensor(np.ones(2)), 0.5, True)


class TestTape:

    def test_double_backward_is_rejected(self):
        w = _param([[1.0]], 'w')
        b = _param([0.0], 'b')
        params = ParameterSet({'w': w, 'b': b})
        with Tape() as tape:
            loss = ad.bce_with_logits(ad.dense(Tensor(np.ones((1, 1))), w, b), [[1]])
        ad.backward(tape, loss, params)
        with pytest.raises(StateError):
            ad.backward(tape, loss, params)

    def test_loss_independent_of_params_gives_zero_gradients(self):
        w = _param([[1.0, 2.0]], 'w')
        params = ParameterSet({'w': w})
        with Tape() as tape:
            loss = ad.tensor_sum(Tensor(np.ones(3)))
        ad.backward(tape, loss, params)
        np.testing.assert_array_equal(w.grad, np.zeros((1, 2)))

    def test_gradients_are_not_accumulated_between_passes(self):
        w = _param([[0.5]], 'w')
        b = _param([0.0], 'b')
        params = ParameterSet({'w': w, 'b': b})
        grads = []
        for _ in range(2):
            with Tape() as tape:
                loss = ad.bce_with_logits(ad.dense(Tensor(np.ones((1, 1))), w, b), [[0]])
            ad.backward(tape, loss, params)
            grads.append(w.grad.copy())
        np.testing.assert_array_equal(grads[0], grads[1])

    def test_non_finite_forward_is_a_numerical_error(self):
        w = _param([[1.0]], 'w')
        with pytest.raises(NumericalError):
            ad.dense(Tensor(np.array([[np.nan]])), w, _param([0.0], 'b'))

    def test_no_tape_means_no_graph(self):
        w = _param([[1.0]], 'w')
        out = ad.dense(Tensor(np.ones((1, 1))), w, _param([0.0], 'b'))
        assert out.is_leaf
        assert not ad.is_recording(out)


class TestParameters:

    def test_glorot_bounds(self, rng):
        values = ad.glorot_uniform((2304, 5), rng)
        limit = np.sqrt(6.0 / (2304 + 5))
        assert values.dtype == np.float32
        assert np.all(np.abs(values) <= limit)

    def test_glorot_conv_fans(self, rng):
        values = ad.glorot_uniform((8, 1, 4, 4), rng, np.float64)
        assert np.all(np.abs(values) <= np.sqrt(6.0 / (16 + 128)))

    def test_parameter_set_requires_gradients(self):
        with pytest.raises(StateError):
            ParameterSet({'frozen': Tensor(np.zeros(2))})

    def test_count_and_order(self):
        params = ParameterSet({'a': _param(np.zeros((2, 3)), 'a'), 'b': _param(np.zeros(4), 'b')})
        assert params.count() == 10
        assert params.names() == ['a', 'b']
