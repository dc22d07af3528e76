"""
Fixtures compartidas de la suite
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.data import ImageSample, synth_generate  # noqa: E402
from src.models import build_baseline  # noqa: E402
from src.quantum_backend import Circuit, Gate, GateKind, ParamRole  # noqa: E402


def numeric_gradient(loss_fn, array: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Diferencias centrales de loss_fn() respecto a cada entrada de `array` (modificado in situ)"""
    grad = np.zeros_like(array, dtype=np.float64)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + eps
        plus = loss_fn()
        array[index] = original - eps
        minus = loss_fn()
        array[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad


def make_samples(patient_labels, per_patient: int = 1):
    """Muestras con píxeles constantes; patient_labels = {patient_id: label}"""
    samples = []
    for patient_id, label in patient_labels.items():
        for _ in range(per_patient):
            pixels = np.full((128, 128), 0.1 * label, dtype=np.float32)
            samples.append(ImageSample(pixels, label, patient_id))
    return samples


def one_qubit_circuit(trainable: bool = True) -> Circuit:
    """RY(ángulo de embedding) seguido, opcionalmente, de RY(θ) en un qubit"""
    gates = [Gate(GateKind.RY, (0,), 0, ParamRole.EMBEDDING)]
    if trainable:
        gates.append(Gate(GateKind.RY, (0,), 1, ParamRole.TRAINABLE))
    return Circuit(1, tuple(gates), 1, 1 if trainable else 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def frozen():
    """Pila convolucional aleatoria congelada (no entrenada)"""
    return build_baseline(seed=7).freeze()


@pytest.fixture(scope='session')
def synth_samples():
    """10 pacientes × 2 imágenes (8 pacientes además de 1 y 2, clases equilibradas)"""
    return synth_generate(10, 2, seed=3, signal_strength=0.8)


@pytest.fixture
def separable_features():
    """Características [32, 2304] linealmente separables y etiquetas equilibradas"""
    gen = np.random.default_rng(5)
    labels = np.array([0.0, 1.0] * 16)
    features = gen.normal(0.0, 0.1, size=(32, 2304)).astype(np.float32)
    features[:, :64] += np.where(labels[:, None] == 1, 0.5, -0.5).astype(np.float32)
    return features, labels
