"""
Red cuántica "vestida" (DQN): pre-net -> tanh·π/2 -> circuito variacional -> post-net

El circuito se evalúa muestra a muestra; los gradientes cuánticos (método adjunto)
se encadenan en la cinta clásica mediante la capa de expectativas.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tape, Tensor
from .exceptions import CapabilityError, DimensionError, StateError, ValidationError
from .quantum_backend import (
    IDEAL,
    Backend,
    Circuit,
    backend_expectations,
    build_ansatz,
    expectations_and_gradients,
    z_observables,
)

logger = logging.getLogger(__name__)

HALF_PI = np.pi / 2
THETA_INIT_RANGE = 0.1


def scale_embedding(prenet_out: Tensor) -> Tensor:
    """
    Ángulos de embedding = (π/2)·tanh(x), acotados a [-π/2, π/2]

    Args:
        prenet_out: Salida de la pre-net [N, n]

    Returns:
        Tensor: Ángulos con la derivada (π/2)(1 - tanh²) registrada en la cinta
    """
    if not np.all(np.isfinite(prenet_out.data)):
        raise ValidationError("scale_embedding: entrada no finita")
    return ad.scale(ad.activation(prenet_out, 'tanh'), HALF_PI)


def expectation_layer(angles: Tensor, theta: Tensor, circuit: Circuit, backend: Backend = IDEAL) -> Tensor:
    """
    ⟨Z_0⟩ … ⟨Z_{n-1}⟩ por muestra, con backward a través del jacobiano adjunto

    Args:
        angles: Ángulos de embedding [N, n_embedding_params]
        theta: Parámetros entrenables [n_trainable_params]
        circuit: Circuito con embedding + ansatz
        backend: ideal (diferenciable) o noisy (solo inferencia)

    Returns:
        Tensor: Expectativas [N, n_qubits]
    """
    if angles.data.ndim != 2 or angles.shape[1] != circuit.n_embedding_params:
        raise DimensionError(f"Ángulos {angles.shape} incompatibles con {circuit.n_embedding_params} slots de embedding")
    if theta.shape != (circuit.n_trainable_params,):
        raise DimensionError(f"theta {theta.shape} incompatible con {circuit.n_trainable_params} parámetros")

    observables = z_observables(circuit.n_qubits)
    needs_grad = ad.is_recording(angles, theta)
    if needs_grad and backend.kind != 'ideal':
        raise CapabilityError("El backend ruidoso es solo de inferencia: no calcula gradientes")

    n_samples = angles.shape[0]
    theta64 = theta.data.astype(np.float64)
    values = np.empty((n_samples, len(observables)), dtype=np.float64)
    jacobians = np.empty((n_samples, len(observables), circuit.n_params), dtype=np.float64) if needs_grad else None

    for s in range(n_samples):
        params = np.concatenate([angles.data[s].astype(np.float64), theta64])
        if needs_grad:
            values[s], jacobians[s] = expectations_and_gradients(circuit, params, observables)
        else:
            values[s] = backend_expectations(circuit, params, observables, backend)

    n_emb = circuit.n_embedding_params

    def backward_fn(g: np.ndarray):
        g64 = g.astype(np.float64)
        d_angles = np.einsum('sk,skp->sp', g64, jacobians[:, :, :n_emb])
        # reducción en orden fijo de muestras
        d_theta = np.zeros(circuit.n_trainable_params, dtype=np.float64)
        for s in range(n_samples):
            d_theta += g64[s] @ jacobians[s, :, n_emb:]
        return d_angles, d_theta

    return ad.record('expectation_layer', values.astype(theta.dtype), (angles, theta), backward_fn)


class DressedQuantumNet:
    """
    Cabeza DQN: pre-net densa D -> n, circuito variacional y post-net n -> 1
    """

    def __init__(
        self,
        in_features: int,
        circuit: Circuit,
        seed: int = 0,
        dtype=np.float32,
        n_qubits: Optional[int] = None,
        reps: Optional[int] = None
    ):
        """
        Inicializa pesos Glorot (sesgos a cero) y θ ~ U[-0.1, 0.1]

        Args:
            in_features: Dimensión de las características congeladas
            circuit: Circuito (embedding de n_qubits ángulos + ansatz)
            seed: Semilla de inicialización
            dtype: float32 (entrenamiento) o float64 (comprobación de gradientes)
        """
        if circuit.n_embedding_params != circuit.n_qubits:
            raise DimensionError("El embedding debe tener un ángulo por qubit")

        rng = np.random.default_rng(seed)
        n = circuit.n_qubits
        self.in_features = in_features
        self.circuit = circuit
        self.n_qubits = n_qubits
        self.reps = reps
        self.pre_weight = Tensor(ad.glorot_uniform((in_features, n), rng, dtype), True, 'pre_net.weight')
        self.pre_bias = Tensor(np.zeros(n, dtype=dtype), True, 'pre_net.bias')
        self.theta = Tensor(
            rng.uniform(-THETA_INIT_RANGE, THETA_INIT_RANGE, circuit.n_trainable_params).astype(dtype),
            True,
            'theta'
        )
        self.post_weight = Tensor(ad.glorot_uniform((n, 1), rng, dtype), True, 'post_net.weight')
        self.post_bias = Tensor(np.zeros(1, dtype=dtype), True, 'post_net.bias')

    @classmethod
    def build(cls, in_features: int, n_qubits: int, reps: int, seed: int = 0, dtype=np.float32) -> 'DressedQuantumNet':
        return cls(in_features, build_ansatz(n_qubits, reps), seed, dtype, n_qubits=n_qubits, reps=reps)

    def tensors(self) -> 'OrderedDict[str, Tensor]':
        items = [self.pre_weight, self.pre_bias, self.theta, self.post_weight, self.post_bias]
        return OrderedDict((t.name, t) for t in items)

    def parameters(self) -> ParameterSet:
        return ParameterSet(self.tensors())

    def forward(self, z: Tensor, backend: Backend = IDEAL) -> Tensor:
        """
        Logits [N, 1] a partir de características [N, D]
        """
        if z.data.ndim != 2 or z.shape[1] != self.in_features:
            raise DimensionError(f"DQN: entrada {z.shape} incompatible con {self.in_features} características")
        hidden = ad.dense(z, self.pre_weight, self.pre_bias)
        angles = scale_embedding(hidden)
        values = expectation_layer(angles, self.theta, self.circuit, backend)
        return ad.dense(values, self.post_weight, self.post_bias)

    __call__ = forward

    def describe(self) -> Dict[str, object]:
        return {
            'in_features': self.in_features,
            'n_qubits': self.circuit.n_qubits,
            'reps': self.reps,
            'n_trainable_params': self.circuit.n_trainable_params,
        }


@dataclass
class DqnForwardState:
    """Estado cacheado de un forward de una muestra"""

    logit: float
    angles: np.ndarray
    expectations: np.ndarray
    tape: Optional[Tape]
    output: Optional[Tensor]

    @property
    def probability(self) -> float:
        return float(ad.sigmoid(np.float64(self.logit)))


def dqn_forward(z: np.ndarray, net: DressedQuantumNet, backend: Backend = IDEAL) -> DqnForwardState:
    """
    Forward de una muestra; con backend ideal deja la cinta lista para dqn_backward

    Args:
        z: Vector de características [D]
        net: Red DQN
        backend: ideal | noisy(NoiseModel)

    Returns:
        DqnForwardState: logit, ángulos, expectativas y cinta
    """
    z = np.asarray(z).reshape(1, -1)
    if z.shape[1] != net.in_features:
        raise DimensionError(f"z de dimensión {z.shape[1]} y pre-net de entrada {net.in_features}")
    inputs = Tensor(z, dtype=net.theta.dtype)

    tape: Optional[Tape] = None
    if backend.kind == 'ideal':
        with Tape() as tape:
            hidden = ad.dense(inputs, net.pre_weight, net.pre_bias)
            angles = scale_embedding(hidden)
            values = expectation_layer(angles, net.theta, net.circuit, backend)
            output = ad.dense(values, net.post_weight, net.post_bias)
    else:
        logger.debug(f"Forward sin cinta en backend {backend.tag}")
        hidden = ad.dense(inputs, net.pre_weight.detach(), net.pre_bias.detach())
        angles = scale_embedding(hidden)
        values = expectation_layer(angles, net.theta.detach(), net.circuit, backend)
        output = ad.dense(values, net.post_weight.detach(), net.post_bias.detach())

    return DqnForwardState(
        logit=output.item(),
        angles=angles.data[0].copy(),
        expectations=values.data[0].copy(),
        tape=tape,
        output=output if tape is not None else None,
    )


def dqn_backward(upstream: float, net: DressedQuantumNet, state: Optional[DqnForwardState]) -> Dict[str, np.ndarray]:
    """
    Gradientes de pre-net, θ y post-net dado dLoss/dlogit

    Returns:
        Dict[str, np.ndarray]: Gradiente por nombre de parámetro
    """
    if state is None or state.tape is None or state.output is None:
        raise StateError("dqn_backward requiere un forward ideal previo")
    if state.tape.consumed:
        raise StateError("El forward cacheado ya se usó en un backward")

    params = net.parameters()
    ad.backward(state.tape, state.output, params, upstream=np.full((1, 1), upstream, dtype=np.float64))
    return {name: tensor.grad.copy() for name, tensor in params.items()}
