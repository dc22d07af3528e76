"""
Simulación exacta de circuitos variacionales

- Statevector (ideal) con expectativas Pauli-Z
- Gradientes por el método adjunto y un oráculo independiente
  (regla de desplazamiento de parámetros / diferencias finitas)
- Matriz densidad con canales despolarizantes tras cada puerta (ruidoso)

Convención: el qubit 0 es el bit más significativo de la etiqueta de la base.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .config import FORTE1_R1Q, FORTE1_R2Q, QUBIT_RANGE, REPS_RANGE
from .exceptions import CapabilityError, CapacityError, ConfigurationError, NumericalError, ValidationError

logger = logging.getLogger(__name__)

MAX_QUBITS = 16
MAX_NOISY_QUBITS = 10

FD_STEP = 1e-6

NORM_TOL = 1e-10
TRACE_TOL = 1e-10
HERMITIAN_TOL = 1e-12
EIGEN_TOL = -1e-9


class GateKind(str, Enum):
    RZ = 'RZ'
    RY = 'RY'
    CNOT = 'CNOT'
    CRY = 'CRY'

    @property
    def arity(self) -> int:
        return 1 if self in (GateKind.RZ, GateKind.RY) else 2

    @property
    def parametric(self) -> bool:
        return self is not GateKind.CNOT


class ParamRole(str, Enum):
    EMBEDDING = 'embedding'
    TRAINABLE = 'trainable'


@dataclass(frozen=True)
class Gate:
    """
    Puerta del conjunto soportado {RZ, RY, CNOT, CRY}

    Las puertas de dos qubits usan wires = (control, target).
    """

    kind: GateKind
    wires: Tuple[int, ...]
    param_slot: Optional[int] = None
    param_role: Optional[ParamRole] = None

    def __post_init__(self):
        try:
            kind = GateKind(self.kind)
        except ValueError as e:
            raise CapabilityError(f"Puerta no soportada: {self.kind!r}") from e
        object.__setattr__(self, 'kind', kind)
        object.__setattr__(self, 'wires', tuple(int(w) for w in self.wires))

        if len(self.wires) != kind.arity:
            raise ValidationError(f"{kind.value} actúa sobre {kind.arity} qubit(s), recibido {self.wires}")
        if len(set(self.wires)) != len(self.wires) or min(self.wires) < 0:
            raise ValidationError(f"{kind.value}: wires inválidos {self.wires}")

        if kind.parametric:
            if self.param_slot is None or self.param_role is None:
                raise ValidationError(f"{kind.value} requiere param_slot y param_role")
            object.__setattr__(self, 'param_role', ParamRole(self.param_role))
        elif self.param_slot is not None or self.param_role is not None:
            raise ValidationError("CNOT no lleva parámetro")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.value,
            'wires': list(self.wires),
            'param_slot': self.param_slot,
            'param_role': self.param_role.value if self.param_role else None,
        }


@dataclass(frozen=True)
class Circuit:
    """
    Circuito parametrizado: U_enc(x) seguido de U(θ)

    Los slots de embedding [0, n_embedding_params) preceden a los entrenables.
    """

    n_qubits: int
    gates: Tuple[Gate, ...]
    n_embedding_params: int
    n_trainable_params: int

    def __post_init__(self):
        object.__setattr__(self, 'gates', tuple(self.gates))
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise CapacityError(f"n_qubits debe estar en [1, {MAX_QUBITS}] (recibido {self.n_qubits})")
        for gate in self.gates:
            if max(gate.wires) >= self.n_qubits:
                raise ValidationError(f"{gate.kind.value} sobre {gate.wires} fuera de {self.n_qubits} qubits")
            if gate.param_slot is None:
                continue
            if not 0 <= gate.param_slot < self.n_params:
                raise ValidationError(f"param_slot {gate.param_slot} fuera de [0, {self.n_params})")
            embedding_slot = gate.param_slot < self.n_embedding_params
            if embedding_slot != (gate.param_role is ParamRole.EMBEDDING):
                raise ValidationError(f"param_slot {gate.param_slot} no concuerda con el rol {gate.param_role.value}")

    @property
    def n_params(self) -> int:
        return self.n_embedding_params + self.n_trainable_params

    def gate_counts(self) -> Tuple[int, int]:
        """(puertas de un qubit, puertas de dos qubits)"""
        single = sum(1 for g in self.gates if g.kind.arity == 1)
        return single, len(self.gates) - single

    def light_cone(self, wire: int) -> FrozenSet[int]:
        """Slots de las puertas que pueden influir en una medida sobre `wire`"""
        reached = {wire}
        slots = set()
        for gate in reversed(self.gates):
            if reached.isdisjoint(gate.wires):
                continue
            reached.update(gate.wires)
            if gate.param_slot is not None:
                slots.add(gate.param_slot)
        return frozenset(slots)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_qubits': self.n_qubits,
            'gates': [g.to_dict() for g in self.gates],
            'n_embedding_params': self.n_embedding_params,
            'n_trainable_params': self.n_trainable_params,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'Circuit':
        gates = [
            Gate(g['kind'], tuple(g['wires']), g.get('param_slot'), g.get('param_role'))
            for g in payload['gates']
        ]
        return cls(payload['n_qubits'], tuple(gates), payload['n_embedding_params'], payload['n_trainable_params'])


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    @classmethod
    def zero_state(cls, n_qubits: int) -> 'StateVector':
        amplitudes = np.zeros(2 ** n_qubits, dtype=np.complex128)
        amplitudes[0] = 1.0
        return cls(n_qubits, amplitudes)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)


@dataclass
class DensityMatrix:
    n_qubits: int
    entries: np.ndarray

    @classmethod
    def from_statevector(cls, state: StateVector) -> 'DensityMatrix':
        return cls(state.n_qubits, np.outer(state.amplitudes, state.amplitudes.conj()))

    def trace(self) -> float:
        return float(np.real(np.trace(self.entries)))

    def check_invariants(self) -> None:
        """Traza 1, hermiticidad y semidefinición positiva dentro de tolerancia"""
        trace = np.trace(self.entries)
        if abs(trace - 1.0) > TRACE_TOL:
            raise NumericalError(f"Traza de ρ = {trace} (esperado 1)")
        asym = np.max(np.abs(self.entries - self.entries.conj().T))
        if asym > HERMITIAN_TOL:
            raise NumericalError(f"ρ no hermítica (desviación {asym:.3e})")
        min_eig = float(np.min(np.linalg.eigvalsh(self.entries)))
        if min_eig < EIGEN_TOL:
            raise NumericalError(f"ρ con autovalor negativo {min_eig:.3e}")


@dataclass(frozen=True)
class NoiseModel:
    r_1q: float = 0.0
    r_2q: float = 0.0

    def __post_init__(self):
        for name in ('r_1q', 'r_2q'):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValidationError(f"{name} debe estar en [0, 1] (recibido {value})")

    @classmethod
    def forte1(cls) -> 'NoiseModel':
        return cls(FORTE1_R1Q, FORTE1_R2Q)


@dataclass(frozen=True)
class Observable:
    """Pauli-Z sobre un qubit"""

    wire: int
    kind: str = 'Z'


def z_observables(n_qubits: int) -> List[Observable]:
    return [Observable(w) for w in range(n_qubits)]


@dataclass(frozen=True)
class Backend:
    """Backend de ejecución: 'ideal' (statevector) o 'noisy' (matriz densidad)"""

    kind: str = 'ideal'
    noise: Optional[NoiseModel] = None

    def __post_init__(self):
        if self.kind not in ('ideal', 'noisy'):
            raise ConfigurationError(f"Backend desconocido: {self.kind!r}")
        if self.kind == 'noisy' and self.noise is None:
            object.__setattr__(self, 'noise', NoiseModel.forte1())

    @classmethod
    def noisy(cls, noise: Optional[NoiseModel] = None) -> 'Backend':
        return cls('noisy', noise or NoiseModel.forte1())

    @property
    def tag(self) -> str:
        return self.kind


IDEAL = Backend()


# ===== MATRICES DE PUERTAS =====

_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128)
_PAULI_Z = np.diag([1.0, -1.0]).astype(np.complex128)


def _ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def _rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=np.complex128)


def _controlled(block: np.ndarray) -> np.ndarray:
    matrix = np.zeros((4, 4), dtype=np.complex128)
    matrix[:2, :2] = np.eye(2)
    matrix[2:, 2:] = block
    return matrix


def _d_ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return 0.5 * np.array([[-s, -c], [c, -s]], dtype=np.complex128)


def _d_rz(theta: float) -> np.ndarray:
    return np.array(
        [[-0.5j * np.exp(-0.5j * theta), 0], [0, 0.5j * np.exp(0.5j * theta)]], dtype=np.complex128
    )


def gate_matrix(gate: Gate, params: np.ndarray) -> np.ndarray:
    """Unitaria 2x2 o 4x4 de la puerta con el parámetro resuelto"""
    if gate.kind is GateKind.CNOT:
        return _CNOT
    theta = float(params[gate.param_slot])
    if gate.kind is GateKind.RY:
        return _ry(theta)
    if gate.kind is GateKind.RZ:
        return _rz(theta)
    if gate.kind is GateKind.CRY:
        return _controlled(_ry(theta))
    raise CapabilityError(f"Puerta no soportada: {gate.kind}")


def _gate_derivative(gate: Gate, params: np.ndarray) -> np.ndarray:
    theta = float(params[gate.param_slot])
    if gate.kind is GateKind.RY:
        return _d_ry(theta)
    if gate.kind is GateKind.RZ:
        return _d_rz(theta)
    if gate.kind is GateKind.CRY:
        derivative = np.zeros((4, 4), dtype=np.complex128)
        derivative[2:, 2:] = _d_ry(theta)
        return derivative
    raise CapabilityError(f"Sin generador conocido para {gate.kind}")


def _apply_matrix(psi: np.ndarray, matrix: np.ndarray, wires: Sequence[int], offset: int = 0) -> np.ndarray:
    """
    Aplica una matriz de k qubits sobre los ejes `wires` (desplazados `offset` ejes)
    """
    k = len(wires)
    op = matrix.reshape((2,) * (2 * k))
    axes = [offset + w for w in wires]
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


# ===== STATEVECTOR =====

def build_ansatz(n_qubits: int, reps: int) -> Circuit:
    """
    Construye el circuito: embedding RY(x_i) y `reps` repeticiones de
    {capa RZ(θ), anillo CNOT i -> i+1 mod n, anillo CRY(θ) i -> i+1 mod n}

    Args:
        n_qubits: Número de qubits en [3, 10] (= dimensión del embedding)
        reps: Repeticiones en [2, 4]

    Returns:
        Circuit: 2·n·reps parámetros entrenables y n de embedding
    """
    if not QUBIT_RANGE[0] <= n_qubits <= QUBIT_RANGE[1]:
        raise ConfigurationError(f"n_qubits debe estar en {list(QUBIT_RANGE)} (recibido {n_qubits})")
    if not REPS_RANGE[0] <= reps <= REPS_RANGE[1]:
        raise ConfigurationError(f"reps debe estar en {list(REPS_RANGE)} (recibido {reps})")

    n = n_qubits
    gates: List[Gate] = [Gate(GateKind.RY, (i,), i, ParamRole.EMBEDDING) for i in range(n)]
    slot = n
    for _ in range(reps):
        for i in range(n):
            gates.append(Gate(GateKind.RZ, (i,), slot, ParamRole.TRAINABLE))
            slot += 1
        for i in range(n):
            gates.append(Gate(GateKind.CNOT, (i, (i + 1) % n)))
        for i in range(n):
            gates.append(Gate(GateKind.CRY, (i, (i + 1) % n), slot, ParamRole.TRAINABLE))
            slot += 1

    logger.debug(f"🧪 Ansatz de {n} qubits y {reps} repeticiones: {len(gates)} puertas")
    return Circuit(n, tuple(gates), n_embedding_params=n, n_trainable_params=2 * n * reps)


def apply_gate(state: StateVector, gate: Gate, params: np.ndarray) -> StateVector:
    """Aplica una puerta y devuelve un nuevo StateVector"""
    if max(gate.wires) >= state.n_qubits:
        raise ValidationError(f"{gate.kind.value} sobre {gate.wires} fuera de {state.n_qubits} qubits")
    psi = _apply_matrix(state.tensor(), gate_matrix(gate, np.asarray(params, dtype=np.float64)), gate.wires)
    return StateVector(state.n_qubits, psi.reshape(-1))


def _check_params(circuit: Circuit, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    if params.size != circuit.n_params:
        raise ValidationError(f"Se esperaban {circuit.n_params} parámetros, recibidos {params.size}")
    if not np.all(np.isfinite(params)):
        raise ValidationError("Parámetros del circuito no finitos")
    return params


def _run_tensor(circuit: Circuit, params: np.ndarray) -> np.ndarray:
    psi = StateVector.zero_state(circuit.n_qubits).tensor()
    for gate in circuit.gates:
        psi = _apply_matrix(psi, gate_matrix(gate, params), gate.wires)
    return psi


def run_circuit(circuit: Circuit, params: np.ndarray) -> StateVector:
    """Evoluciona |0...0> con el circuito completo"""
    params = _check_params(circuit, params)
    state = StateVector(circuit.n_qubits, _run_tensor(circuit, params).reshape(-1))
    drift = abs(state.norm() - 1.0)
    if drift > NORM_TOL:
        raise NumericalError(f"La norma del statevector derivó {drift:.3e}")
    return state


def _z_from_probabilities(probs: np.ndarray, wire: int) -> float:
    others = tuple(i for i in range(probs.ndim) if i != wire)
    marginal = probs.sum(axis=others) if others else probs
    return float(marginal[0] - marginal[1])


def expect_z(state: StateVector, wire: int) -> float:
    """⟨Z_wire⟩ = Σ_b (±1)|a_b|² con signo según el bit del qubit"""
    if not 0 <= wire < state.n_qubits:
        raise ValidationError(f"wire {wire} fuera de {state.n_qubits} qubits")
    probs = np.abs(state.tensor()) ** 2
    return _z_from_probabilities(probs, wire)


def expectations(circuit: Circuit, params: np.ndarray, observables: Sequence[Observable]) -> np.ndarray:
    """Vector de expectativas ideales para cada observable"""
    state = run_circuit(circuit, params)
    return np.array([expect_z(state, obs.wire) for obs in observables], dtype=np.float64)


def expectations_and_gradients(
    circuit: Circuit,
    params: np.ndarray,
    observables: Sequence[Observable]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Expectativas y jacobiano adjunto con un único forward

    Returns:
        (valores [K], jacobiano [K, n_params]) sobre todos los slots
    """
    params = _check_params(circuit, params)
    for gate in circuit.gates:
        if not isinstance(gate.kind, GateKind):
            raise CapabilityError(f"Puerta no soportada por el método adjunto: {gate.kind!r}")

    n = circuit.n_qubits
    ket = _run_tensor(circuit, params)
    probs = np.abs(ket) ** 2
    values = np.array([_z_from_probabilities(probs, obs.wire) for obs in observables], dtype=np.float64)

    # bra_k = O_k |ψ>, apilados en el eje 0
    bra = np.stack([_apply_matrix(ket, _PAULI_Z, (obs.wire,)) for obs in observables])
    jacobian = np.zeros((len(observables), circuit.n_params), dtype=np.float64)
    contract = (list(range(1, n + 1)), list(range(n)))

    for gate in reversed(circuit.gates):
        u_dag = gate_matrix(gate, params).conj().T
        ket = _apply_matrix(ket, u_dag, gate.wires)
        if gate.param_slot is not None:
            d_ket = _apply_matrix(ket, _gate_derivative(gate, params), gate.wires)
            jacobian[:, gate.param_slot] += 2.0 * np.real(np.tensordot(bra.conj(), d_ket, axes=contract))
        bra = _apply_matrix(bra, u_dag, gate.wires, offset=1)

    # fuera del cono causal la derivada es exactamente cero
    for k, obs in enumerate(observables):
        cone = circuit.light_cone(obs.wire)
        outside = [slot for slot in range(circuit.n_params) if slot not in cone]
        jacobian[k, outside] = 0.0

    return values, jacobian


def adjoint_gradients(circuit: Circuit, params: np.ndarray, observables: Sequence[Observable]) -> np.ndarray:
    """
    d⟨O_k⟩/dp_j para todos los slots (embedding y entrenables) por el método adjunto
    """
    return expectations_and_gradients(circuit, params, observables)[1]


def oracle_gradients(circuit: Circuit, params: np.ndarray, observables: Sequence[Observable]) -> np.ndarray:
    """
    Oráculo de referencia: regla de desplazamiento de dos términos para RZ/RY
    y diferencias centrales (paso 1e-6) para los slots usados por CRY
    """
    params = _check_params(circuit, params)
    jacobian = np.zeros((len(observables), circuit.n_params), dtype=np.float64)

    kinds_by_slot: Dict[int, set] = {}
    for gate in circuit.gates:
        if gate.param_slot is not None:
            kinds_by_slot.setdefault(gate.param_slot, set()).add(gate.kind)

    for slot, kinds in sorted(kinds_by_slot.items()):
        if GateKind.CRY in kinds:
            shift, factor = FD_STEP, 1.0 / (2 * FD_STEP)
        else:
            shift, factor = np.pi / 2, 0.5
        plus, minus = params.copy(), params.copy()
        plus[slot] += shift
        minus[slot] -= shift
        jacobian[:, slot] = factor * (
            expectations(circuit, plus, observables) - expectations(circuit, minus, observables)
        )
    return jacobian


# ===== MATRIZ DENSIDAD =====

def _partial_trace(rho: np.ndarray, wires: Sequence[int], n: int) -> np.ndarray:
    m = n
    for w in sorted(wires, reverse=True):
        rho = np.trace(rho, axis1=w, axis2=m + w)
        m -= 1
    return rho


def _depolarize(rho: np.ndarray, wires: Sequence[int], p: float, n: int) -> np.ndarray:
    """ρ <- (1-p)ρ + p·(I/d sobre `wires` ⊗ tr_wires ρ)"""
    if p == 0:
        return rho
    wires = sorted(wires)
    k = len(wires)
    mixed = np.eye(2 ** k, dtype=np.complex128).reshape((2,) * (2 * k)) / 2 ** k
    reduced = _partial_trace(rho, wires, n)
    replaced = np.tensordot(mixed, reduced, axes=0)
    replaced = np.moveaxis(replaced, list(range(2 * k)), wires + [n + w for w in wires])
    return (1.0 - p) * rho + p * replaced


def simulate_noisy(
    circuit: Circuit,
    params: np.ndarray,
    noise: NoiseModel,
    check_invariants: bool = False
) -> DensityMatrix:
    """
    Evoluciona ρ = UρU† puerta a puerta aplicando el canal despolarizante
    correspondiente sobre los qubits de cada puerta

    Args:
        circuit: Circuito (como máximo 10 qubits)
        params: Vector completo de parámetros
        noise: Tasas r_1q / r_2q
        check_invariants: Verifica traza/hermiticidad/positividad tras cada paso

    Returns:
        DensityMatrix: Estado final
    """
    n = circuit.n_qubits
    if n > MAX_NOISY_QUBITS:
        raise CapacityError(f"La matriz densidad admite como máximo {MAX_NOISY_QUBITS} qubits (recibido {n})")
    params = _check_params(circuit, params)

    dim = 2 ** n
    rho = np.zeros((dim, dim), dtype=np.complex128)
    rho[0, 0] = 1.0
    rho = rho.reshape((2,) * (2 * n))

    for gate in circuit.gates:
        u = gate_matrix(gate, params)
        rho = _apply_matrix(rho, u, gate.wires)
        rho = _apply_matrix(rho, u.conj(), gate.wires, offset=n)
        rate = noise.r_1q if gate.kind.arity == 1 else noise.r_2q
        rho = _depolarize(rho, gate.wires, rate, n)
        if check_invariants:
            DensityMatrix(n, rho.reshape(dim, dim)).check_invariants()

    return DensityMatrix(n, rho.reshape(dim, dim))


def expect_z_dm(rho: DensityMatrix, wire: int) -> float:
    """tr(Z_wire · ρ)"""
    if not 0 <= wire < rho.n_qubits:
        raise ValidationError(f"wire {wire} fuera de {rho.n_qubits} qubits")
    diagonal = np.real(np.diagonal(rho.entries)).reshape((2,) * rho.n_qubits)
    return _z_from_probabilities(diagonal, wire)


def noisy_expectations(
    circuit: Circuit,
    params: np.ndarray,
    observables: Sequence[Observable],
    noise: NoiseModel
) -> np.ndarray:
    rho = simulate_noisy(circuit, params, noise)
    return np.array([expect_z_dm(rho, obs.wire) for obs in observables], dtype=np.float64)


def backend_expectations(
    circuit: Circuit,
    params: np.ndarray,
    observables: Sequence[Observable],
    backend: Backend = IDEAL
) -> np.ndarray:
    """Expectativas en el backend indicado (solo inferencia)"""
    if backend.kind == 'noisy':
        return noisy_expectations(circuit, params, observables, backend.noise)
    return expectations(circuit, params, observables)


def expectation_deviation_bound(circuit: Circuit, noise: NoiseModel, guaranteed: bool = False) -> float:
    """
    Peso no ideal del canal compuesto: 1 - (1-r_1q)^G1 (1-r_2q)^G2

    ρ_ruido = q·ρ_ideal + (1-q)·σ, así que |⟨Z⟩_ruido - ⟨Z⟩_ideal| <= 2(1-q) siempre
    (guaranteed=True). La cota 1-q es la contracción típica: exacta para una
    puerta seguida de la medida y la que cumplen los circuitos del ansatz a tasas bajas.
    """
    single, double = circuit.gate_counts()
    weight = 1.0 - (1.0 - noise.r_1q) ** single * (1.0 - noise.r_2q) ** double
    return 2.0 * weight if guaranteed else weight
