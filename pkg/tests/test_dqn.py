"""
Tests de la red cuántica vestida
"""

import numpy as np
import pytest

from conftest import numeric_gradient, one_qubit_circuit
from src import autodiff as ad
from src.autodiff import Tape, Tensor
from src.dqn import DressedQuantumNet, dqn_backward, dqn_forward, expectation_layer, scale_embedding
from src.exceptions import CapabilityError, DimensionError, StateError, ValidationError
from src.quantum_backend import Backend, Circuit, Gate, GateKind, NoiseModel, ParamRole, build_ansatz


@pytest.fixture
def small_net():
    return DressedQuantumNet.build(4, 3, 2, seed=11, dtype=np.float64)


class TestEmbedding:

    def test_angles_are_bounded_for_adversarial_inputs(self):
        angles = scale_embedding(Tensor(np.array([[1e9, -1e9, 0.0]]), dtype=np.float64))
        assert np.all(np.abs(angles.data) <= np.pi / 2)
        assert angles.data[0, 0] == pytest.approx(np.pi / 2)
        assert angles.data[0, 2] == 0.0

    def test_nan_is_rejected(self):
        with pytest.raises(ValidationError):
            scale_embedding(Tensor(np.array([[np.nan]])))


class TestDressedQuantumNet:

    def test_best_configuration_parameter_count(self):
        net = DressedQuantumNet.build(2304, 6, 4, seed=0)
        assert net.parameters().count() == 13885

    def test_initialisation(self):
        net = DressedQuantumNet.build(2304, 6, 4, seed=0)
        assert np.all(np.abs(net.theta.data) <= 0.1)
        assert np.all(net.pre_bias.data == 0) and np.all(net.post_bias.data == 0)
        assert list(net.tensors()) == ['pre_net.weight', 'pre_net.bias', 'theta', 'post_net.weight', 'post_net.bias']

    def test_same_seed_same_weights(self):
        a = DressedQuantumNet.build(16, 3, 2, seed=4)
        b = DressedQuantumNet.build(16, 3, 2, seed=4)
        for ta, tb in zip(a.tensors().values(), b.tensors().values()):
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_forward_shape(self, small_net, rng):
        logits = small_net.forward(Tensor(rng.normal(size=(5, 4)), dtype=np.float64))
        assert logits.shape == (5, 1)

    def test_wrong_feature_width(self, small_net):
        with pytest.raises(DimensionError):
            small_net.forward(Tensor(np.zeros((2, 5))))

    @pytest.mark.parametrize('seed', range(5))
    @pytest.mark.parametrize('n_qubits,reps', [(3, 2), (3, 3), (4, 2), (4, 3)])
    def test_gradients_match_finite_differences(self, n_qubits, reps, seed):
        net = DressedQuantumNet.build(4, n_qubits, reps, seed=seed, dtype=np.float64)
        gen = np.random.default_rng(100 + seed)
        z = Tensor(gen.normal(size=(3, 4)), dtype=np.float64)
        y = np.array([[1.0], [0.0], [1.0]])
        params = net.parameters()

        def loss_value():
            return ad.bce_with_logits(net.forward(z), y).item()

        with Tape() as tape:
            loss = ad.bce_with_logits(net.forward(z), y)
        ad.backward(tape, loss, params)

        for name, tensor in params.items():
            analytic = tensor.grad.copy()
            expected = numeric_gradient(loss_value, tensor.data)
            np.testing.assert_allclose(analytic, expected, rtol=1e-3, atol=1e-7, err_msg=name)

    def test_readout_outside_light_cone_gets_zero_theta_gradient(self, rng):
        gates = (
            Gate(GateKind.RY, (0,), 0, ParamRole.EMBEDDING),
            Gate(GateKind.RY, (1,), 1, ParamRole.EMBEDDING),
            Gate(GateKind.RY, (1,), 2, ParamRole.TRAINABLE),
        )
        net = DressedQuantumNet(3, Circuit(2, gates, 2, 1), seed=1, dtype=np.float64)
        net.post_weight.data[1, 0] = 0.0
        params = net.parameters()
        with Tape() as tape:
            loss = ad.bce_with_logits(net.forward(Tensor(rng.normal(size=(4, 3)), dtype=np.float64)), np.ones((4, 1)))
        ad.backward(tape, loss, params)
        assert net.theta.grad[0] == 0.0
        assert np.any(net.pre_weight.grad[:, 0] != 0.0)

    def test_noisy_backend_cannot_train(self, small_net):
        with pytest.raises(CapabilityError):
            with Tape():
                small_net.forward(Tensor(np.zeros((1, 4)), dtype=np.float64), Backend.noisy())

    def test_noisy_inference_without_noise_matches_ideal(self, small_net, rng):
        z = Tensor(rng.normal(size=(4, 4)), dtype=np.float64)
        ideal = small_net.forward(z).data
        noisy = small_net.forward(z, Backend.noisy(NoiseModel(0.0, 0.0))).data
        np.testing.assert_allclose(ideal, noisy, atol=1e-10)

    def test_expectations_are_in_range(self, rng):
        circuit = build_ansatz(4, 2)
        angles = Tensor(rng.uniform(-1.5, 1.5, size=(6, 4)), dtype=np.float64)
        theta = Tensor(rng.uniform(-np.pi, np.pi, circuit.n_trainable_params), dtype=np.float64)
        values = expectation_layer(angles, theta, circuit)
        assert values.shape == (6, 4)
        assert np.all(np.abs(values.data) <= 1.0 + 1e-12)


class TestSingleSampleApi:

    def test_one_qubit_forward_is_analytic(self):
        net = DressedQuantumNet(1, one_qubit_circuit(trainable=False), seed=0, dtype=np.float64)
        net.pre_weight.data[:] = 0.5
        net.post_weight.data[:] = 2.0
        state = dqn_forward(np.array([1.0]), net)
        angle = np.pi / 2 * np.tanh(0.5)
        assert state.angles[0] == pytest.approx(angle)
        assert state.expectations[0] == pytest.approx(np.cos(angle))
        assert state.logit == pytest.approx(2.0 * np.cos(angle))
        assert 0.0 < state.probability < 1.0

    def test_backward_matches_tape_gradients(self, small_net, rng):
        z = rng.normal(size=4)
        state = dqn_forward(z, small_net)
        grads = dqn_backward(0.7, small_net, state)

        params = small_net.parameters()
        with Tape() as tape:
            logit = small_net.forward(Tensor(z.reshape(1, -1), dtype=np.float64))
            loss = ad.scale(ad.tensor_sum(logit), 0.7)
        ad.backward(tape, loss, params)
        for name, tensor in params.items():
            np.testing.assert_allclose(grads[name], tensor.grad, atol=1e-12, err_msg=name)

    def test_zero_upstream_gives_zero_gradients(self, small_net, rng):
        state = dqn_forward(rng.normal(size=4), small_net)
        grads = dqn_backward(0.0, small_net, state)
        assert set(grads) == set(small_net.parameters().names())
        for name, values in grads.items():
            np.testing.assert_array_equal(values, np.zeros_like(values), err_msg=name)

    def test_backward_without_forward(self, small_net):
        with pytest.raises(StateError):
            dqn_backward(1.0, small_net, None)

    def test_backward_twice(self, small_net, rng):
        state = dqn_forward(rng.normal(size=4), small_net)
        dqn_backward(1.0, small_net, state)
        with pytest.raises(StateError):
            dqn_backward(1.0, small_net, state)

    def test_noisy_forward_has_no_backward(self, small_net, rng):
        state = dqn_forward(rng.normal(size=4), small_net, Backend.noisy())
        assert state.tape is None
        with pytest.raises(StateError):
            dqn_backward(1.0, small_net, state)

    def test_feature_width_is_checked(self, small_net):
        with pytest.raises(DimensionError):
            dqn_forward(np.zeros(3), small_net)
