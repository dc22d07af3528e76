"""
Modelos clásicos y de transferencia

- BaselineCnn: CNN de referencia (4 convoluciones + denso 2304 -> 5 -> 1)
- FrozenFeatures: pila convolucional congelada que produce z = f_cl(x)
- TransferModel: características congeladas + cabeza CTL (densa) o QTL (DQN)
"""

import logging
from collections import OrderedDict
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tensor
from .config import FEATURE_DIM, IMAGE_SIZE, MODEL_KINDS
from .dqn import DressedQuantumNet
from .exceptions import ConfigurationError, DimensionError
from .quantum_backend import IDEAL, Backend

logger = logging.getLogger(__name__)

# (c_in, c_out, kernel, stride, maxpool posterior)
CONV_LAYOUT: Tuple[Tuple[int, int, int, int, bool], ...] = (
    (1, 8, 4, 2, True),
    (8, 16, 8, 2, True),
    (16, 32, 8, 2, True),
    (32, 64, 4, 1, False),
)
POOL_KERNEL = 2
POOL_STRIDE = 1
HIDDEN_UNITS = 5
DROPOUT_P = 0.5

ConvLayers = List[Tuple[Tensor, Tensor]]


def shape_chain(size: int = IMAGE_SIZE) -> List[int]:
    """
    Propagación simbólica del lado espacial por la pila convolucional (padding válido)

    Returns:
        List[int]: [entrada, conv1, pool1, conv2, pool2, conv3, pool3, conv4]
    """
    chain = [size]
    for _, _, kernel, stride, pool in CONV_LAYOUT:
        size = (size - kernel) // stride + 1
        chain.append(size)
        if pool:
            size = (size - POOL_KERNEL) // POOL_STRIDE + 1
            chain.append(size)
    return chain


def conv_parameter_count() -> int:
    return sum(c_out * c_in * k * k + c_out for c_in, c_out, k, _, _ in CONV_LAYOUT)


def _as_images(x: Union[Tensor, np.ndarray], dtype) -> Tensor:
    tensor = x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)
    if tensor.data.ndim != 4 or tensor.shape[1:] != (1, IMAGE_SIZE, IMAGE_SIZE):
        raise DimensionError(
            f"Se esperaban imágenes [N, 1, {IMAGE_SIZE}, {IMAGE_SIZE}], recibido {tensor.shape}"
        )
    return tensor


def _init_conv_layers(rng: np.random.Generator, dtype, prefix: str, requires_grad: bool) -> ConvLayers:
    layers: ConvLayers = []
    for i, (c_in, c_out, kernel, _, _) in enumerate(CONV_LAYOUT, start=1):
        weight = ad.glorot_uniform((c_out, c_in, kernel, kernel), rng, dtype)
        layers.append((
            Tensor(weight, requires_grad, f'{prefix}conv{i}.weight'),
            Tensor(np.zeros(c_out, dtype=dtype), requires_grad, f'{prefix}conv{i}.bias'),
        ))
    return layers


def _conv_forward(x: Tensor, layers: ConvLayers) -> Tensor:
    h = x
    for (weight, bias), (_, _, _, stride, pool) in zip(layers, CONV_LAYOUT):
        h = ad.activation(ad.conv2d(h, weight, bias, stride), 'relu')
        if pool:
            h = ad.maxpool2d(h, POOL_KERNEL, POOL_STRIDE)
    return ad.flatten(h)


class DenseHead:
    """
    Cabeza densa: D -> 5 (ReLU, dropout 0.5) -> 1 logit
    """

    def __init__(
        self,
        in_features: int = FEATURE_DIM,
        seed: int = 0,
        dtype=np.float32,
        prefix: str = 'head',
        rng: Optional[np.random.Generator] = None
    ):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.in_features = in_features
        self.hidden_weight = Tensor(
            ad.glorot_uniform((in_features, HIDDEN_UNITS), rng, dtype), True, f'{prefix}.dense1.weight'
        )
        self.hidden_bias = Tensor(np.zeros(HIDDEN_UNITS, dtype=dtype), True, f'{prefix}.dense1.bias')
        self.out_weight = Tensor(ad.glorot_uniform((HIDDEN_UNITS, 1), rng, dtype), True, f'{prefix}.dense2.weight')
        self.out_bias = Tensor(np.zeros(1, dtype=dtype), True, f'{prefix}.dense2.bias')

    def tensors(self) -> 'OrderedDict[str, Tensor]':
        items = [self.hidden_weight, self.hidden_bias, self.out_weight, self.out_bias]
        return OrderedDict((t.name, t) for t in items)

    def forward(self, z: Tensor, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        if z.data.ndim != 2 or z.shape[1] != self.in_features:
            raise DimensionError(f"Cabeza densa: entrada {z.shape} incompatible con {self.in_features}")
        hidden = ad.activation(ad.dense(z, self.hidden_weight, self.hidden_bias), 'relu')
        hidden = ad.dropout(hidden, DROPOUT_P, training, rng)
        return ad.dense(hidden, self.out_weight, self.out_bias)

    def copy_from(self, other: 'DenseHead') -> None:
        """Copia los pesos de otra cabeza (caso de control CTL == baseline)"""
        for mine, theirs in zip(self.tensors().values(), other.tensors().values()):
            mine.data = theirs.data.astype(mine.dtype, copy=True)


class BaselineCnn:
    """
    CNN de referencia entrenada de extremo a extremo
    """

    kind = 'baseline'

    def __init__(self, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.conv_layers = _init_conv_layers(rng, dtype, prefix='', requires_grad=True)
        self.head = DenseHead(FEATURE_DIM, dtype=dtype, prefix='dense', rng=rng)
        self._params: Optional[ParameterSet] = None

    def encode(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        return _as_images(x, self.dtype)

    def features(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        return _conv_forward(_as_images(x, self.dtype), self.conv_layers)

    def logits(
        self,
        inputs: Tensor,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        backend: Backend = IDEAL
    ) -> Tensor:
        return self.head.forward(self.features(inputs), training, rng)

    def forward(self, x, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        return self.logits(self.encode(x), training, rng)

    def tensors(self) -> 'OrderedDict[str, Tensor]':
        out: 'OrderedDict[str, Tensor]' = OrderedDict()
        for weight, bias in self.conv_layers:
            out[weight.name] = weight
            out[bias.name] = bias
        out.update(self.head.tensors())
        return out

    def parameters(self) -> ParameterSet:
        if self._params is None:
            self._params = ParameterSet(self.tensors())
        return self._params

    def freeze(self) -> 'FrozenFeatures':
        return FrozenFeatures.from_baseline(self)

    def metadata(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'seed': self.seed}


def build_baseline(seed: int = 0, dtype=np.float32) -> BaselineCnn:
    """CNN de referencia con pesos Glorot y sesgos a cero"""
    model = BaselineCnn(seed, dtype)
    logger.debug(f"🧪 Baseline creado (semilla {seed}, {model.parameters().count()} parámetros entrenables)")
    return model


class FrozenFeatures:
    """
    Pila convolucional sin gradiente (requires_grad = False en todos sus tensores)
    """

    output_dim = FEATURE_DIM

    def __init__(self, layers: Sequence[Tuple[np.ndarray, np.ndarray]], dtype=np.float32):
        if len(layers) != len(CONV_LAYOUT):
            raise DimensionError(f"Se esperaban {len(CONV_LAYOUT)} capas convolucionales, recibidas {len(layers)}")
        self.dtype = np.dtype(dtype)
        self.layers: ConvLayers = []
        for i, ((weight, bias), (c_in, c_out, k, _, _)) in enumerate(zip(layers, CONV_LAYOUT), start=1):
            if np.shape(weight) != (c_out, c_in, k, k) or np.shape(bias) != (c_out,):
                raise DimensionError(f"conv{i}: forma {np.shape(weight)} no coincide con la arquitectura")
            self.layers.append((
                Tensor(weight, False, f'features.conv{i}.weight', dtype),
                Tensor(bias, False, f'features.conv{i}.bias', dtype),
            ))

    @classmethod
    def from_baseline(cls, baseline: BaselineCnn) -> 'FrozenFeatures':
        return cls([(w.data, b.data) for w, b in baseline.conv_layers], baseline.dtype)

    def tensors(self) -> 'OrderedDict[str, Tensor]':
        out: 'OrderedDict[str, Tensor]' = OrderedDict()
        for weight, bias in self.layers:
            out[weight.name] = weight
            out[bias.name] = bias
        return out

    def __call__(self, x) -> Tensor:
        return feature_extract(x, self)


def feature_extract(x: Union[Tensor, np.ndarray], frozen: FrozenFeatures) -> Tensor:
    """
    z = f_cl(x): aplanado de la última activación convolucional

    Args:
        x: Imágenes [N, 1, 128, 128] normalizadas a [0, 1]
        frozen: Pila congelada

    Returns:
        Tensor: [N, 2304] sin enlace a la cinta
    """
    images = _as_images(x, frozen.dtype)
    return _conv_forward(images.detach(), frozen.layers).detach()


class TransferModel:
    """
    Modelo de transferencia: características congeladas + cabeza entrenable
    """

    def __init__(self, kind: str, frozen: FrozenFeatures, head: Union[DenseHead, DressedQuantumNet], seed: int = 0):
        if kind not in ('ctl', 'qtl'):
            raise ConfigurationError(f"TransferModel solo admite 'ctl' o 'qtl' (recibido {kind!r})")
        self.kind = kind
        self.frozen = frozen
        self.head = head
        self.seed = seed
        self.dtype = frozen.dtype
        self._params: Optional[ParameterSet] = None

    def encode(self, x) -> Tensor:
        return feature_extract(x, self.frozen)

    def logits(
        self,
        inputs: Tensor,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        backend: Backend = IDEAL
    ) -> Tensor:
        if self.kind == 'qtl':
            return self.head.forward(inputs, backend)
        return self.head.forward(inputs, training, rng)

    def forward(self, x, training: bool = False, rng=None, backend: Backend = IDEAL) -> Tensor:
        return self.logits(self.encode(x), training, rng, backend)

    def tensors(self) -> 'OrderedDict[str, Tensor]':
        out = self.frozen.tensors()
        out.update(self.head.tensors())
        return out

    def parameters(self) -> ParameterSet:
        if self._params is None:
            self._params = ParameterSet(self.head.tensors())
        return self._params

    @property
    def n_qubits(self) -> Optional[int]:
        return self.head.circuit.n_qubits if self.kind == 'qtl' else None

    @property
    def reps(self) -> Optional[int]:
        return self.head.reps if self.kind == 'qtl' else None

    def metadata(self) -> Dict[str, Any]:
        meta: Dict[str, Any] = {'kind': self.kind, 'seed': self.seed}
        if self.kind == 'qtl':
            meta.update({'n_qubits': self.n_qubits, 'reps': self.reps})
        return meta


def make_ctl_head(frozen: FrozenFeatures, seed: int = 0, copy_from: Optional[BaselineCnn] = None) -> TransferModel:
    """
    Cabeza CTL: denso 2304 -> 5 (dropout 0.5) -> 1 reinicializado con Glorot

    Args:
        frozen: Características congeladas del baseline
        seed: Semilla de inicialización (un reinicio por semilla)
        copy_from: Si se indica, copia la cabeza densa del baseline en lugar de reinicializar
    """
    head = DenseHead(FEATURE_DIM, seed=seed, dtype=frozen.dtype)
    if copy_from is not None:
        head.copy_from(copy_from.head)
    return TransferModel('ctl', frozen, head, seed)


def make_ctl_restarts(frozen: FrozenFeatures, seeds: Sequence[int]) -> List[TransferModel]:
    return [make_ctl_head(frozen, seed) for seed in seeds]


def make_qtl_model(frozen: FrozenFeatures, n_qubits: int, reps: int, seed: int = 0) -> TransferModel:
    """
    Modelo híbrido: características congeladas + DQN (pre-net, θ, post-net)
    """
    head = DressedQuantumNet.build(FEATURE_DIM, n_qubits, reps, seed, frozen.dtype)
    return TransferModel('qtl', frozen, head, seed)


Model = Union[BaselineCnn, TransferModel]


def _random_frozen(seed: int, dtype) -> FrozenFeatures:
    return BaselineCnn(seed, dtype).freeze()


def build_model(
    kind: str,
    frozen: Optional[FrozenFeatures] = None,
    n_qubits: int = 6,
    reps: int = 4,
    seed: int = 0,
    dtype=np.float32
) -> Model:
    """
    Registro de modelos por tipo

    Args:
        kind: 'baseline' | 'ctl' | 'qtl'
        frozen: Características congeladas (obligatorias en la práctica para ctl/qtl;
            si faltan se usa una pila aleatoria, útil solo para reconstruir desde checkpoint)
    """
    if kind not in MODEL_KINDS:
        raise ConfigurationError(f"Tipo de modelo desconocido: {kind!r} (opciones: {MODEL_KINDS})")
    if kind == 'baseline':
        return build_baseline(seed, dtype)
    frozen = frozen if frozen is not None else _random_frozen(seed, dtype)
    if kind == 'ctl':
        return make_ctl_head(frozen, seed)
    return make_qtl_model(frozen, n_qubits, reps, seed)


def model_from_state(metadata: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> Model:
    """
    Reconstruye un modelo a partir de metadatos y tensores de un checkpoint

    Raises:
        ConfigurationError: metadatos desconocidos
        DimensionError: nombres o formas que no encajan con la arquitectura
    """
    kind = metadata.get('kind')
    model = build_model(
        kind,
        n_qubits=metadata.get('n_qubits', 6),
        reps=metadata.get('reps', 4),
        seed=metadata.get('seed', 0),
    )
    expected = model.tensors()
    if list(expected) != list(tensors):
        raise DimensionError(f"Tensores del checkpoint {list(tensors)} no coinciden con el modelo {kind}")
    for name, tensor in expected.items():
        values = np.asarray(tensors[name])
        if values.shape != tensor.shape:
            raise DimensionError(f"{name}: forma {values.shape} distinta de {tensor.shape}")
        tensor.data = values.astype(tensor.dtype, copy=True)
    return model
