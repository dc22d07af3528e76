"""
Diferenciación automática en modo inverso sobre tensores densos

Implementa únicamente las capas que necesitan los modelos del proyecto:
conv2d, maxpool2d, dense, activaciones, dropout y BCE con logits.
Los pesos se almacenan en 32 bits; las reducciones acumulan en 64 bits.
"""

import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DimensionError, NumericalError, ParameterError, StateError, ValidationError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence, float]

ACTIVATIONS = ('relu', 'tanh', 'sigmoid')

# Muestras procesadas a la vez en conv2d (limita la memoria de las ventanas en 64 bits)
_CONV_CHUNK = 16

_local = threading.local()


class Tensor:
    """
    Array real con forma fija y hueco para el gradiente
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[np.dtype] = None
    ):
        array = np.array(data, dtype=dtype, copy=True) if dtype is not None else np.array(data, copy=True)
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float32)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._tape: Optional['Tape'] = None
        self._node: Optional[int] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(f"item() requiere un tensor escalar, forma {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> 'Tensor':
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


@dataclass
class _Node:
    index: int
    op: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward_fn: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tape:
    """
    Registro ordenado de operaciones para el backward

    Uso:
        with Tape() as tape:
            loss = bce_with_logits(model(x), y)
        backward(tape, loss, params)
    """

    def __init__(self):
        self.nodes: List[_Node] = []
        self._consumed = False

    @property
    def consumed(self) -> bool:
        return self._consumed

    def __enter__(self) -> 'Tape':
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def _tape_stack() -> List[Tape]:
    if not hasattr(_local, 'stack'):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional[Tape]:
    """Devuelve la cinta activa en este hilo (o None)"""
    stack = _tape_stack()
    return stack[-1] if stack else None


def is_recording(*inputs: Tensor) -> bool:
    """True si hay una cinta activa y alguna entrada participa en el grafo"""
    return active_tape() is not None and any(t.requires_grad for t in inputs)


def record(
    op: str,
    out: np.ndarray,
    inputs: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]
) -> Tensor:
    """
    Envuelve el resultado de una operación y la registra en la cinta activa

    Args:
        op: Nombre de la operación (para diagnósticos)
        out: Resultado del forward
        inputs: Tensores de entrada, en el orden que devuelve backward_fn
        backward_fn: Función g -> gradientes por entrada (None si no aplica)

    Returns:
        Tensor: Salida, enlazada a la cinta si alguna entrada requiere gradiente
    """
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"{op} produjo valores no finitos")

    result = Tensor.__new__(Tensor)
    result.data = out
    result.grad = None
    result.name = None
    result._tape = None
    result._node = None
    result.requires_grad = False

    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        if tape.consumed:
            raise StateError("La cinta ya fue consumida por un backward; abre una nueva")
        result.requires_grad = True
        result._tape = tape
        result._node = len(tape.nodes)
        tape.nodes.append(_Node(result._node, op, result, tuple(inputs), backward_fn))
    return result


def backward(
    tape: Tape,
    loss: Tensor,
    params: Optional['ParameterSet'] = None,
    upstream: Optional[np.ndarray] = None
) -> None:
    """
    Recorre la cinta en orden topológico inverso y rellena los gradientes

    Args:
        tape: Cinta sobre la que se ejecutó el forward
        loss: Tensor escalar producido en esa cinta
        params: Parámetros que deben recibir gradiente (cero si no participan)
        upstream: Gradiente semilla; por defecto 1 (requiere loss escalar)
    """
    if tape.consumed:
        raise StateError("Doble backward sobre la misma cinta sin un nuevo forward")

    if params is not None:
        params.zero_grad()

    if loss._tape is not tape or loss._node is None:
        # La pérdida no depende de ningún parámetro: todos los gradientes son cero
        if loss._tape is not None:
            raise StateError("La pérdida no se produjo en esta cinta")
        logger.debug("La pérdida no depende de ningún parámetro; gradientes a cero")
        tape._consumed = True
        return

    if upstream is None:
        if loss.size != 1:
            raise DimensionError(f"backward requiere una pérdida escalar, forma {loss.shape}")
        seed = np.ones_like(loss.data, dtype=np.float64)
    else:
        seed = np.asarray(upstream, dtype=np.float64).reshape(loss.shape)

    # Las hojas reciben exactamente d(loss)/d(hoja) de esta pasada
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and t.is_leaf:
                t.zero_grad()

    grads: Dict[int, np.ndarray] = {loss._node: seed}
    for node in reversed(tape.nodes[:loss._node + 1]):
        g = grads.pop(node.index, None)
        if g is None:
            continue
        input_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, input_grads):
            if gi is None or not t.requires_grad:
                continue
            if t.is_leaf:
                t.grad = t.grad + gi.astype(t.data.dtype, copy=False)
            elif t._node in grads:
                grads[t._node] = grads[t._node] + gi
            else:
                grads[t._node] = gi

    for node in tape.nodes:
        for t in node.inputs:
            if t.is_leaf and t.grad is not None and not np.all(np.isfinite(t.grad)):
                raise NumericalError(f"Gradiente no finito en {t.name or node.op}")

    tape._consumed = True


class ParameterSet:
    """
    Mapa nombre -> Tensor entrenable, con el estado de Adam asociado
    """

    def __init__(self, params: Mapping[str, Tensor]):
        self._params: 'OrderedDict[str, Tensor]' = OrderedDict()
        for name, tensor in params.items():
            if not tensor.requires_grad:
                raise StateError(f"El parámetro {name} no requiere gradiente")
            self._params[name] = tensor
        self.first_moment: Dict[str, np.ndarray] = {
            name: np.zeros(t.shape, dtype=np.float64) for name, t in self._params.items()
        }
        self.second_moment: Dict[str, np.ndarray] = {
            name: np.zeros(t.shape, dtype=np.float64) for name, t in self._params.items()
        }
        self.step = 0

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def names(self) -> List[str]:
        return list(self._params)

    def count(self) -> int:
        """Número total de escalares entrenables"""
        return int(sum(t.size for t in self._params.values()))

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}


# ===== INICIALIZACIÓN =====

def glorot_uniform(shape: Tuple[int, ...], rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """
    Inicialización Glorot uniforme para pesos densos (D, U) y convolucionales (C_out, C_in, kH, kW)
    """
    if len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 4:
        receptive = shape[2] * shape[3]
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    else:
        raise DimensionError(f"glorot_uniform no soporta la forma {shape}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ===== OPERACIONES =====

def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    view = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return view[:, :, ::stride, ::stride]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """
    Correlación cruzada 2D con padding válido

    Args:
        x: Entrada [N, C_in, H, W]
        weight: Filtros [C_out, C_in, kH, kW]
        bias: Sesgos [C_out]
        stride: Paso (entero positivo)

    Returns:
        Tensor: [N, C_out, floor((H-kH)/stride)+1, floor((W-kW)/stride)+1]
    """
    if stride < 1:
        raise ParameterError(f"stride debe ser positivo (recibido {stride})")
    if x.data.ndim != 4 or weight.data.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"conv2d: entrada {x.shape} incompatible con pesos {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"conv2d: sesgo {bias.shape} incompatible con pesos {weight.shape}")

    n, c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    if h < kh or w < kw:
        raise DimensionError(f"conv2d: entrada {x.shape} menor que el kernel {weight.shape}")
    h_out = (h - kh) // stride + 1
    w_out = (w - kw) // stride + 1

    w64 = weight.data.astype(np.float64)
    out = np.empty((n, c_out, h_out, w_out), dtype=np.float64)
    for start in range(0, n, _CONV_CHUNK):
        win = _windows(x.data[start:start + _CONV_CHUNK], kh, kw, stride).astype(np.float64)
        acc = np.tensordot(win, w64, axes=([1, 4, 5], [1, 2, 3]))
        out[start:start + _CONV_CHUNK] = acc.transpose(0, 3, 1, 2)
    out += bias.data.astype(np.float64)[None, :, None, None]

    x_data = x.data

    def backward_fn(g: np.ndarray):
        g64 = g.astype(np.float64)
        db = g64.sum(axis=(0, 2, 3))
        dw = None
        if weight.requires_grad:
            dw = np.zeros((c_out, c_in, kh, kw), dtype=np.float64)
            for start in range(0, n, _CONV_CHUNK):
                win = _windows(x_data[start:start + _CONV_CHUNK], kh, kw, stride).astype(np.float64)
                dw += np.tensordot(g64[start:start + _CONV_CHUNK], win, axes=([0, 2, 3], [0, 2, 3]))
        dx = None
        if x.requires_grad:
            dx = np.zeros((n, c_in, h, w), dtype=np.float64)
            h_span = stride * (h_out - 1) + 1
            w_span = stride * (w_out - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    dx[:, :, i:i + h_span:stride, j:j + w_span:stride] += np.einsum(
                        'nohw,oc->nchw', g64, w64[:, :, i, j]
                    )
        return dx, dw, db

    return record('conv2d', out.astype(x.dtype), (x, weight, bias), backward_fn)


def maxpool2d(x: Tensor, kernel: int, stride: int) -> Tensor:
    """
    Max-pooling 2D; en empates el gradiente va al primer máximo en orden por filas
    """
    if kernel < 1 or stride < 1:
        raise ParameterError(f"maxpool2d: kernel y stride deben ser positivos ({kernel}, {stride})")
    if x.data.ndim != 4:
        raise DimensionError(f"maxpool2d: se esperaba [N, C, H, W], recibido {x.shape}")
    n, c, h, w = x.shape
    if h < kernel or w < kernel:
        raise DimensionError(f"maxpool2d: kernel {kernel}x{kernel} mayor que la entrada {x.shape}")

    h_out = (h - kernel) // stride + 1
    w_out = (w - kernel) // stride + 1
    win = _windows(x.data, kernel, kernel, stride).reshape(n, c, h_out, w_out, kernel * kernel)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward_fn(g: np.ndarray):
        di, dj = np.divmod(arg, kernel)
        rows = np.arange(h_out)[None, None, :, None] * stride + di
        cols = np.arange(w_out)[None, None, None, :] * stride + dj
        nn = np.arange(n)[:, None, None, None]
        cc = np.arange(c)[None, :, None, None]
        flat = ((nn * c + cc) * h + rows) * w + cols
        dx = np.bincount(
            flat.ravel(), weights=g.astype(np.float64).ravel(), minlength=n * c * h * w
        )
        return (dx.reshape(n, c, h, w),)

    return record('maxpool2d', np.ascontiguousarray(out), (x,), backward_fn)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    Capa afín: x · W + b con x [N, D], W [D, U], b [U]
    """
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"dense: entrada {x.shape} incompatible con pesos {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"dense: sesgo {bias.shape} incompatible con pesos {weight.shape}")

    x64 = x.data.astype(np.float64)
    w64 = weight.data.astype(np.float64)
    out = x64 @ w64 + bias.data.astype(np.float64)

    def backward_fn(g: np.ndarray):
        g64 = g.astype(np.float64)
        return g64 @ w64.T, x64.T @ g64, g64.sum(axis=0)

    return record('dense', out.astype(x.dtype), (x, weight, bias), backward_fn)


def sigmoid(values: np.ndarray) -> np.ndarray:
    """Sigmoide numéricamente estable"""
    return np.exp(-np.logaddexp(0.0, -values))


def activation(x: Tensor, kind: str) -> Tensor:
    """
    Activación elemento a elemento: relu, tanh o sigmoid
    """
    if kind not in ACTIVATIONS:
        raise ParameterError(f"Activación desconocida: {kind!r} (opciones: {ACTIVATIONS})")

    if kind == 'relu':
        mask = x.data > 0
        out = np.where(mask, x.data, 0).astype(x.dtype)

        def backward_fn(g):
            return (g * mask,)
    elif kind == 'tanh':
        out = np.tanh(x.data)

        def backward_fn(g):
            return (g * (1.0 - out.astype(np.float64) ** 2),)
    else:
        out = sigmoid(x.data).astype(x.dtype)

        def backward_fn(g):
            s = out.astype(np.float64)
            return (g * s * (1.0 - s),)

    return record(kind, out, (x,), backward_fn)


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Dropout invertido: en entrenamiento anula con probabilidad p y escala por 1/(1-p)
    """
    if not 0 <= p < 1:
        raise ParameterError(f"dropout: p debe estar en [0, 1) (recibido {p})")
    if not training or p == 0:
        return x
    if rng is None:
        raise ParameterError("dropout en entrenamiento requiere un generador con semilla")

    mask = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    out = x.data * mask

    def backward_fn(g):
        return (g * mask,)

    return record('dropout', out, (x,), backward_fn)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"reshape: {original} -> {shape} imposible") from e

    def backward_fn(g):
        return (g.reshape(original),)

    return record('reshape', out, (x,), backward_fn)


def flatten(x: Tensor) -> Tensor:
    """[N, ...] -> [N, prod(...)]"""
    return reshape(x, (x.shape[0], -1))


def scale(x: Tensor, factor: float) -> Tensor:
    out = (x.data.astype(np.float64) * factor).astype(x.dtype)

    def backward_fn(g):
        return (g * factor,)

    return record('scale', out, (x,), backward_fn)


def tensor_sum(x: Tensor) -> Tensor:
    """Suma de todos los elementos (acumulada en 64 bits)"""
    out = np.asarray(x.data.sum(dtype=np.float64))
    shape = x.shape

    def backward_fn(g):
        return (np.broadcast_to(np.asarray(g, dtype=np.float64), shape).copy(),)

    return record('sum', out, (x,), backward_fn)


def mean(x: Tensor) -> Tensor:
    return scale(tensor_sum(x), 1.0 / x.size)


def bce_with_logits(logit: Tensor, label: ArrayLike) -> Tensor:
    """
    Entropía cruzada binaria media sobre logits, en forma estable log-sum-exp

    Args:
        logit: Logits [N, 1]
        label: Etiquetas {0, 1} de la misma forma (array o Tensor)

    Returns:
        Tensor: Escalar en 64 bits
    """
    y = label.data if isinstance(label, Tensor) else np.asarray(label)
    y = y.astype(np.float64).reshape(logit.shape) if y.size == logit.size else None
    if y is None:
        raise DimensionError(f"bce_with_logits: etiquetas incompatibles con logits {logit.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("bce_with_logits: las etiquetas deben ser binarias {0, 1}")
    if logit.size == 0:
        raise DimensionError("bce_with_logits: lote vacío")

    z = logit.data.astype(np.float64)
    n = z.size
    losses = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = np.asarray(losses.sum() / n)

    def backward_fn(g):
        return (g * (sigmoid(z) - y) / n,)

    return record('bce_with_logits', out, (logit,), backward_fn)
