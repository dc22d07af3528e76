"""
Tests del simulador: statevector, gradientes adjuntos y canales despolarizantes
"""

import numpy as np
import pytest

from src.exceptions import CapabilityError, CapacityError, ConfigurationError, ValidationError
from src.quantum_backend import (
    Backend,
    Circuit,
    Gate,
    GateKind,
    NoiseModel,
    ParamRole,
    StateVector,
    adjoint_gradients,
    apply_gate,
    backend_expectations,
    build_ansatz,
    expect_z,
    expect_z_dm,
    expectation_deviation_bound,
    expectations,
    expectations_and_gradients,
    noisy_expectations,
    oracle_gradients,
    run_circuit,
    simulate_noisy,
    z_observables,
)

EMB = ParamRole.EMBEDDING
TRAIN = ParamRole.TRAINABLE


def _random_params(circuit: Circuit, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-np.pi, np.pi, circuit.n_params)


class TestAnsatz:

    def test_best_configuration_layout(self):
        circuit = build_ansatz(6, 4)
        assert circuit.n_embedding_params == 6
        assert circuit.n_trainable_params == 48
        assert len(circuit.gates) == 6 + 4 * 18
        assert circuit.gate_counts() == (30, 48)

    def test_embedding_precedes_trainable_slots(self):
        circuit = build_ansatz(3, 2)
        embedding = [g for g in circuit.gates if g.param_role is EMB]
        assert [g.param_slot for g in embedding] == [0, 1, 2]
        assert all(g.kind is GateKind.RY for g in embedding)
        trainable_slots = sorted(g.param_slot for g in circuit.gates if g.param_role is TRAIN)
        assert trainable_slots == list(range(3, 15))

    def test_rings_wrap_around(self):
        circuit = build_ansatz(4, 2)
        cnots = [g.wires for g in circuit.gates if g.kind is GateKind.CNOT][:4]
        assert cnots == [(0, 1), (1, 2), (2, 3), (3, 0)]

    @pytest.mark.parametrize('n_qubits,reps', [(2, 2), (11, 2), (6, 1), (6, 5)])
    def test_out_of_range_is_a_configuration_error(self, n_qubits, reps):
        with pytest.raises(ConfigurationError):
            build_ansatz(n_qubits, reps)

    def test_dict_form_rebuilds_the_circuit(self):
        circuit = build_ansatz(3, 2)
        assert Circuit.from_dict(circuit.to_dict()) == circuit


class TestGates:

    def test_unknown_gate_kind(self):
        with pytest.raises(CapabilityError):
            Gate('H', (0,))

    def test_parametric_gate_needs_slot(self):
        with pytest.raises(ValidationError):
            Gate(GateKind.RY, (0,))

    def test_two_qubit_gate_needs_distinct_wires(self):
        with pytest.raises(ValidationError):
            Gate(GateKind.CNOT, (1, 1))

    def test_wire_outside_register(self):
        with pytest.raises(ValidationError):
            Circuit(2, (Gate(GateKind.RY, (2,), 0, EMB),), 1, 0)

    def test_slot_role_mismatch(self):
        with pytest.raises(ValidationError):
            Circuit(1, (Gate(GateKind.RY, (0,), 0, TRAIN),), 1, 1)


class TestStatevector:

    def test_ry_expectation_is_cosine(self):
        circuit = Circuit(1, (Gate(GateKind.RY, (0,), 0, EMB),), 1, 0)
        for theta in np.linspace(-np.pi, np.pi, 7):
            assert expectations(circuit, [theta], z_observables(1))[0] == pytest.approx(np.cos(theta), abs=1e-12)

    def test_qubit_zero_is_most_significant(self):
        state = apply_gate(StateVector.zero_state(2), Gate(GateKind.RY, (0,), 0, EMB), np.array([np.pi]))
        np.testing.assert_allclose(np.abs(state.amplitudes) ** 2, [0, 0, 1, 0], atol=1e-12)

    def test_cnot_flips_target_when_control_set(self):
        circuit = Circuit(2, (Gate(GateKind.RY, (0,), 0, EMB), Gate(GateKind.CNOT, (0, 1))), 1, 0)
        state = run_circuit(circuit, [np.pi])
        assert expect_z(state, 0) == pytest.approx(-1.0)
        assert expect_z(state, 1) == pytest.approx(-1.0)

    def test_cry_acts_only_when_control_set(self):
        gates = (
            Gate(GateKind.RY, (0,), 0, EMB),
            Gate(GateKind.CRY, (0, 1), 1, TRAIN),
        )
        circuit = Circuit(2, gates, 1, 1)
        off = expectations(circuit, [0.0, 0.7], z_observables(2))
        on = expectations(circuit, [np.pi, 0.7], z_observables(2))
        assert off[1] == pytest.approx(1.0)
        assert on[1] == pytest.approx(np.cos(0.7))

    def test_hadamard_decomposition_gives_zero_expectation(self):
        gates = (Gate(GateKind.RY, (0,), 0, EMB), Gate(GateKind.RZ, (0,), 1, TRAIN))
        circuit = Circuit(1, gates, 1, 1)
        assert expectations(circuit, [np.pi / 2, np.pi], z_observables(1))[0] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize('seed', range(5))
    def test_norm_is_preserved(self, seed):
        circuit = build_ansatz(5, 3)
        assert run_circuit(circuit, _random_params(circuit, seed)).norm() == pytest.approx(1.0, abs=1e-12)

    def test_parameter_count_is_checked(self):
        with pytest.raises(ValidationError):
            run_circuit(build_ansatz(3, 2), np.zeros(3))

    def test_non_finite_parameters_are_rejected(self):
        circuit = build_ansatz(3, 2)
        params = np.zeros(circuit.n_params)
        params[4] = np.nan
        with pytest.raises(ValidationError):
            expectations_and_gradients(circuit, params, z_observables(3))


class TestAdjointGradients:

    @pytest.mark.parametrize('seed', range(10))
    @pytest.mark.parametrize('n_qubits,reps', [(3, 2), (4, 3), (6, 4)])
    def test_matches_oracle(self, n_qubits, reps, seed):
        circuit = build_ansatz(n_qubits, reps)
        params = _random_params(circuit, seed)
        observables = z_observables(n_qubits)
        adjoint = adjoint_gradients(circuit, params, observables)
        oracle = oracle_gradients(circuit, params, observables)
        cry_slots = sorted({g.param_slot for g in circuit.gates if g.kind is GateKind.CRY})
        shift_slots = [s for s in range(circuit.n_params) if s not in cry_slots]
        np.testing.assert_allclose(adjoint[:, shift_slots], oracle[:, shift_slots], atol=1e-8)
        np.testing.assert_allclose(adjoint[:, cry_slots], oracle[:, cry_slots], atol=1e-5)

    def test_values_match_forward(self):
        circuit = build_ansatz(4, 2)
        params = _random_params(circuit, 9)
        values, jacobian = expectations_and_gradients(circuit, params, z_observables(4))
        np.testing.assert_allclose(values, expectations(circuit, params, z_observables(4)), atol=1e-12)
        assert jacobian.shape == (4, circuit.n_params)

    def test_single_rotation_gradient_is_minus_sine(self):
        circuit = Circuit(1, (Gate(GateKind.RY, (0,), 0, EMB),), 1, 0)
        for theta in (-2.0, 0.3, 1.1):
            grad = adjoint_gradients(circuit, [theta], z_observables(1))
            assert grad[0, 0] == pytest.approx(-np.sin(theta), abs=1e-12)

    def test_rz_only_circuit_has_zero_gradient_on_zero_state(self):
        circuit = Circuit(1, (Gate(GateKind.RY, (0,), 0, EMB), Gate(GateKind.RZ, (0,), 1, TRAIN)), 1, 1)
        grad = adjoint_gradients(circuit, [0.4, 1.3], z_observables(1))
        assert grad[0, 1] == pytest.approx(0.0, abs=1e-12)

    @staticmethod
    def _separable_circuit() -> Circuit:
        """RY de embedding en ambos qubits y RY(θ) solo en el qubit 1, sin entrelazador"""
        gates = (
            Gate(GateKind.RY, (0,), 0, EMB),
            Gate(GateKind.RY, (1,), 1, EMB),
            Gate(GateKind.RY, (1,), 2, TRAIN),
        )
        return Circuit(2, gates, 2, 1)

    def test_light_cone_of_each_wire(self):
        circuit = self._separable_circuit()
        assert circuit.light_cone(0) == {0}
        assert circuit.light_cone(1) == {1, 2}
        assert build_ansatz(3, 2).light_cone(0) == set(range(build_ansatz(3, 2).n_params))

    @pytest.mark.parametrize('seed', range(5))
    def test_slot_outside_light_cone_has_exactly_zero_gradient(self, seed):
        circuit = self._separable_circuit()
        params = _random_params(circuit, seed)
        grad = adjoint_gradients(circuit, params, z_observables(2))
        assert grad[0, 1] == 0.0 and grad[0, 2] == 0.0
        assert grad[1, 0] == 0.0
        assert grad[1, 2] == pytest.approx(oracle_gradients(circuit, params, z_observables(2))[1, 2], abs=1e-8)


class TestNoisy:

    @pytest.mark.parametrize('index', range(20))
    def test_zero_noise_matches_ideal(self, index):
        n_qubits = 3 + index % 6
        circuit = build_ansatz(n_qubits, 2 + index % 3)
        params = _random_params(circuit, index)
        np.testing.assert_allclose(
            noisy_expectations(circuit, params, z_observables(n_qubits), NoiseModel(0.0, 0.0)),
            expectations(circuit, params, z_observables(n_qubits)),
            atol=1e-10,
        )

    @pytest.mark.parametrize('index', range(20))
    def test_density_matrix_stays_physical_after_every_gate(self, index):
        circuit = build_ansatz(3 + index % 2, 2 + index % 3)
        rho = simulate_noisy(circuit, _random_params(circuit, index), NoiseModel.forte1(), check_invariants=True)
        assert rho.trace() == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize('p', [0.0, 2.67e-4, 0.5, 1.0])
    @pytest.mark.parametrize('theta', [0.0, np.pi / 4, np.pi / 2])
    def test_single_gate_contraction_is_exact(self, theta, p):
        circuit = Circuit(1, (Gate(GateKind.RY, (0,), 0, EMB),), 1, 0)
        noise = NoiseModel(p, 0.0)
        value = expect_z_dm(simulate_noisy(circuit, [theta], noise), 0)
        assert value == pytest.approx((1 - p) * np.cos(theta), abs=1e-12)
        assert abs(value - np.cos(theta)) <= expectation_deviation_bound(circuit, noise) + 1e-12

    @pytest.mark.parametrize('seed', range(8))
    def test_deviation_respects_guaranteed_bound(self, seed):
        circuit = build_ansatz(3, 2)
        noise = NoiseModel(0.01, 0.05)
        params = _random_params(circuit, seed)
        deviation = np.abs(
            noisy_expectations(circuit, params, z_observables(3), noise)
            - expectations(circuit, params, z_observables(3))
        )
        assert np.all(deviation <= expectation_deviation_bound(circuit, noise, guaranteed=True) + 1e-9)

    def test_bound_formula(self):
        circuit = build_ansatz(6, 4)
        noise = NoiseModel.forte1()
        q = (1 - 2.67e-4) ** 30 * (1 - 4.94e-3) ** 48
        assert expectation_deviation_bound(circuit, noise) == pytest.approx(1 - q)
        assert expectation_deviation_bound(circuit, noise, guaranteed=True) == pytest.approx(2 * (1 - q))

    def test_noisy_limit(self):
        circuit = Circuit(11, (), 0, 0)
        with pytest.raises(CapacityError):
            simulate_noisy(circuit, np.zeros(0), NoiseModel.forte1())

    def test_rates_are_validated(self):
        with pytest.raises(ValidationError):
            NoiseModel(1.5, 0.0)

    def test_backend_dispatch(self):
        circuit = build_ansatz(3, 2)
        params = _random_params(circuit, 6)
        ideal = backend_expectations(circuit, params, z_observables(3), Backend())
        noisy = backend_expectations(circuit, params, z_observables(3), Backend.noisy(NoiseModel(0.0, 0.0)))
        np.testing.assert_allclose(ideal, noisy, atol=1e-10)
        assert Backend.noisy().noise == NoiseModel.forte1()

    def test_unknown_backend(self):
        with pytest.raises(ConfigurationError):
            Backend('hardware')
