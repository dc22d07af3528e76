"""
Carga de datos, preprocesado, partición por paciente y generador sintético

Formato de intercambio: manifest.csv (path,patient_id,label) + imágenes PGM P5 de 8 bits.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config import IMAGE_SIZE
from .exceptions import ConfigurationError, DatasetLoadError, SplitError, ValidationError

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ['path', 'patient_id', 'label']
ALWAYS_TRAIN_PATIENTS = (1, 2)
LUMINANCE = np.array([0.299, 0.587, 0.114])

# Receta del generador sintético
SYNTH_BASE = 0.5
SYNTH_FIELD_SIGMA = 4.0
SYNTH_FIELD_AMPLITUDE = 0.08
SYNTH_PIXEL_NOISE = 0.03
SYNTH_PATIENT_JITTER = 0.01
SYNTH_ELLIPSE_AXES = (28.0, 20.0)


@dataclass
class ImageSample:
    """Imagen preprocesada 128x128 en [0, 1] con su etiqueta y paciente"""

    pixels: np.ndarray
    label: int
    patient_id: int
    path: Optional[str] = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValidationError(f"Etiqueta no binaria: {self.label}")
        if self.patient_id < 1:
            raise ValidationError(f"patient_id debe ser positivo: {self.patient_id}")


@dataclass
class SplitAssignment:
    """Índices de muestras de train/test; ningún paciente aparece en ambos lados"""

    train: List[int]
    test: List[int]
    seed: int
    train_patients: List[int] = field(default_factory=list)
    test_patients: List[int] = field(default_factory=list)


# ===== PGM =====

def _read_token(buffer: bytes, pos: int) -> Tuple[bytes, int]:
    length = len(buffer)
    while pos < length:
        if buffer[pos:pos + 1] == b'#':
            while pos < length and buffer[pos:pos + 1] not in (b'\n', b'\r'):
                pos += 1
        elif buffer[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < length and not buffer[pos:pos + 1].isspace() and buffer[pos:pos + 1] != b'#':
        pos += 1
    if start == pos:
        raise ValueError("cabecera PGM incompleta")
    return buffer[start:pos], pos


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """
    Lee un PGM binario (P5) de 8 bits

    Returns:
        np.ndarray: uint8 [H, W]
    """
    with open(path, 'rb') as fh:
        buffer = fh.read()

    magic, pos = _read_token(buffer, 0)
    if magic != b'P5':
        raise ValueError(f"magic {magic!r} no es P5")
    width_raw, pos = _read_token(buffer, pos)
    height_raw, pos = _read_token(buffer, pos)
    maxval_raw, pos = _read_token(buffer, pos)
    width, height, maxval = int(width_raw), int(height_raw), int(maxval_raw)
    if width < 1 or height < 1:
        raise ValueError(f"dimensiones inválidas {width}x{height}")
    if not 0 < maxval < 256:
        raise ValueError(f"maxval {maxval} no es de 8 bits")

    # un único carácter de espacio separa la cabecera de los datos
    pos += 1
    expected = width * height
    payload = buffer[pos:pos + expected]
    if len(payload) != expected:
        raise ValueError(f"se esperaban {expected} bytes de imagen, hay {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: Union[str, Path], pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise ValidationError(f"write_pgm requiere uint8 [H, W], recibido {pixels.dtype} {pixels.shape}")
    height, width = pixels.shape
    with open(path, 'wb') as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode('ascii'))
        fh.write(pixels.tobytes())


# ===== PREPROCESADO =====

def _axis_weights(n_in: int, n_out: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Interpolación bilineal con centros de píxel desplazados medio píxel"""
    image = np.asarray(image, dtype=np.float64)
    lo_r, hi_r, fr = _axis_weights(image.shape[0], out_h)
    lo_c, hi_c, fc = _axis_weights(image.shape[1], out_w)
    top = image[lo_r][:, lo_c] * (1.0 - fc) + image[lo_r][:, hi_c] * fc
    bottom = image[hi_r][:, lo_c] * (1.0 - fc) + image[hi_r][:, hi_c] * fc
    return top * (1.0 - fr)[:, None] + bottom * fr[:, None]


def preprocess(raw: np.ndarray) -> np.ndarray:
    """
    Escala de grises (luminancia), redimensionado bilineal a 128x128 y escalado 1/255

    Args:
        raw: Imagen [H, W] en escala de grises o [H, W, 3] RGB con valores 0..255

    Returns:
        np.ndarray: float32 [128, 128] en [0, 1]
    """
    image = np.asarray(raw, dtype=np.float64)
    if image.ndim == 3:
        if image.shape[2] != 3:
            raise ValidationError(f"Se esperaban 3 canales RGB, recibidos {image.shape[2]}")
        image = image @ LUMINANCE
    if image.ndim != 2 or image.shape[0] < 1 or image.shape[1] < 1:
        raise ValidationError(f"Imagen con dimensiones inválidas: {np.shape(raw)}")

    resized = bilinear_resize(image, IMAGE_SIZE, IMAGE_SIZE)
    return np.clip(resized / 255.0, 0.0, 1.0).astype(np.float32)


# ===== CARGA =====

def load_dataset(manifest_path: Union[str, Path]) -> List[ImageSample]:
    """
    Lee el manifiesto CSV y decodifica cada PGM en orden

    Args:
        manifest_path: CSV con cabecera path,patient_id,label (rutas relativas al manifiesto)

    Returns:
        List[ImageSample]: Una muestra por fila (rutas duplicadas incluidas)
    """
    manifest_path = Path(manifest_path)
    logger.info(f"📥 Cargando dataset desde {manifest_path}")

    try:
        frame = pd.read_csv(manifest_path, dtype={'path': str}, keep_default_na=False)
    except FileNotFoundError as e:
        raise DatasetLoadError(f"No existe el manifiesto: {manifest_path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DatasetLoadError(f"Manifiesto ilegible {manifest_path}: {e}") from e

    if list(frame.columns) != MANIFEST_COLUMNS:
        raise DatasetLoadError(f"Cabecera del manifiesto {list(frame.columns)} distinta de {MANIFEST_COLUMNS}")

    base = manifest_path.parent
    samples: List[ImageSample] = []
    for row_number, row in enumerate(frame.itertuples(index=False), start=1):
        where = f"{manifest_path}, fila {row_number}"
        try:
            label = int(row.label)
            patient_id = int(row.patient_id)
        except (TypeError, ValueError) as e:
            raise DatasetLoadError(f"{where}: patient_id/label no enteros") from e
        if label not in (0, 1) or str(row.label).strip() not in ('0', '1'):
            raise DatasetLoadError(f"{where}: etiqueta no binaria {row.label!r}")
        if patient_id < 1:
            raise DatasetLoadError(f"{where}: patient_id no positivo {patient_id}")

        image_path = base / row.path
        try:
            raw = read_pgm(image_path)
        except FileNotFoundError as e:
            raise DatasetLoadError(f"{where}: no existe {image_path}") from e
        except ValueError as e:
            raise DatasetLoadError(f"{where}: PGM inválido {image_path} ({e})") from e

        samples.append(ImageSample(preprocess(raw), label, patient_id, str(row.path)))

    logger.info(f"✅ {len(samples)} imágenes cargadas de {len({s.patient_id for s in samples})} pacientes")
    return samples


def to_arrays(samples: Sequence[ImageSample], dtype=np.float32) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apila las muestras

    Returns:
        (imágenes [N, 1, 128, 128], etiquetas [N])
    """
    if not samples:
        return np.zeros((0, 1, IMAGE_SIZE, IMAGE_SIZE), dtype=dtype), np.zeros(0, dtype=np.float64)
    images = np.stack([s.pixels for s in samples]).astype(dtype)[:, None, :, :]
    labels = np.array([s.label for s in samples], dtype=np.float64)
    return images, labels


def subset(samples: Sequence[ImageSample], indices: Sequence[int]) -> List[ImageSample]:
    return [samples[i] for i in indices]


# ===== PARTICIÓN =====

def _other_patients(dataset: Sequence[ImageSample]) -> List[int]:
    return sorted({s.patient_id for s in dataset} - set(ALWAYS_TRAIN_PATIENTS))


def _assignment(dataset: Sequence[ImageSample], test_patients: Sequence[int], seed: int) -> SplitAssignment:
    held_out = set(test_patients)
    train = [i for i, s in enumerate(dataset) if s.patient_id not in held_out]
    test = [i for i, s in enumerate(dataset) if s.patient_id in held_out]
    train_patients = sorted({dataset[i].patient_id for i in train})
    return SplitAssignment(train, test, seed, train_patients, sorted(held_out))


def split(dataset: Sequence[ImageSample], seed: int, test_fraction: float = 0.30) -> SplitAssignment:
    """
    Partición train/test por paciente

    Los pacientes 1 y 2 van siempre a train. Del resto se barajan los IDs y
    floor(test_fraction · m) (mínimo 1) pasan a test con todas sus imágenes.

    Args:
        dataset: Muestras
        seed: Semilla del barajado
        test_fraction: Fracción de pacientes en test

    Returns:
        SplitAssignment: Índices de train y test
    """
    if not dataset:
        raise SplitError("No se puede particionar un dataset vacío")
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction debe estar en (0, 1) (recibido {test_fraction})")

    others = _other_patients(dataset)
    if not others:
        raise SplitError("No hay pacientes además de los IDs 1 y 2")

    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(np.array(others, dtype=np.int64))
    n_test = max(1, int(np.floor(test_fraction * len(others) + 1e-9)))
    return _assignment(dataset, [int(p) for p in shuffled[:n_test]], seed)


def patient_folds(dataset: Sequence[ImageSample], k: int, seed: int) -> List[SplitAssignment]:
    """
    k folds agrupados por paciente y estratificados por clase

    Los pacientes de clase 0 y luego los de clase 1 (cada grupo barajado) se
    reparten en round-robin; los pacientes 1 y 2 están en todos los train.
    """
    if k < 2:
        raise ConfigurationError(f"k debe ser >= 2 (recibido {k})")
    others = _other_patients(dataset)
    if len(others) < k:
        raise ConfigurationError(f"Se necesitan al menos {k} pacientes además de 1 y 2 (hay {len(others)})")

    patient_label = {}
    for s in dataset:
        patient_label.setdefault(s.patient_id, s.label)

    rng = np.random.default_rng(seed)
    ordered: List[int] = []
    for label in (0, 1):
        group = np.array([p for p in others if patient_label[p] == label], dtype=np.int64)
        ordered.extend(int(p) for p in rng.permutation(group))

    folds: List[List[int]] = [[] for _ in range(k)]
    for i, patient in enumerate(ordered):
        folds[i % k].append(patient)
    return [_assignment(dataset, fold, seed) for fold in folds]


# ===== GENERADOR SINTÉTICO =====

def _smooth_field(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    """Ruido blanco filtrado con un gaussiano (en frecuencia) y normalizado a desviación 1"""
    noise = rng.standard_normal((size, size))
    freqs = np.fft.fftfreq(size)
    kernel = np.exp(-2.0 * (np.pi * sigma) ** 2 * (freqs[:, None] ** 2 + freqs[None, :] ** 2))
    smooth = np.real(np.fft.ifft2(np.fft.fft2(noise) * kernel))
    return smooth / (smooth.std() + 1e-12)


def _ellipse_mask(size: int) -> np.ndarray:
    centre = (size - 1) / 2.0
    rows, cols = np.mgrid[0:size, 0:size]
    a, b = SYNTH_ELLIPSE_AXES
    return ((rows - centre) / a) ** 2 + ((cols - centre) / b) ** 2 <= 1.0


def _patient_labels(n_patients: int, rng: np.random.Generator) -> List[int]:
    rest = n_patients - 2
    labels = np.array([0] * (rest // 2) + [1] * (rest - rest // 2), dtype=np.int64)
    return [0, 1] + [int(v) for v in rng.permutation(labels)]


def synth_generate(
    n_patients: int,
    images_per_patient: int,
    seed: int,
    signal_strength: float,
    out_dir: Optional[Union[str, Path]] = None
) -> List[ImageSample]:
    """
    Genera un dataset sintético de dos clases con estructura por paciente

    Cada imagen es un fondo 0.5 con un campo gaussiano suavizado, ruido por
    píxel, un brillo por paciente y una elipse central desplazada ±signal/2
    según la clase. El paciente 1 es de clase 0 y el 2 de clase 1.

    Args:
        n_patients: Pacientes (>= 4)
        images_per_patient: Imágenes por paciente
        seed: Semilla
        signal_strength: Amplitud de la señal plantada (0 = clases indistinguibles)
        out_dir: Si se indica, escribe manifest.csv e images/*.pgm

    Returns:
        List[ImageSample]: Muestras tal y como las devolvería load_dataset
    """
    if n_patients < 4:
        raise ConfigurationError(f"Se necesitan al menos 4 pacientes (recibido {n_patients})")
    if images_per_patient < 1:
        raise ConfigurationError(f"images_per_patient debe ser >= 1 (recibido {images_per_patient})")

    rng = np.random.default_rng(seed)
    labels = _patient_labels(n_patients, rng)
    mask = _ellipse_mask(IMAGE_SIZE)

    image_dir = None
    if out_dir is not None:
        image_dir = Path(out_dir) / 'images'
        image_dir.mkdir(parents=True, exist_ok=True)

    samples: List[ImageSample] = []
    rows = []
    total = n_patients * images_per_patient
    with tqdm(total=total, desc="Generando imágenes", disable=total < 200) as pbar:
        for patient_id, label in enumerate(labels, start=1):
            brightness = rng.normal(0.0, SYNTH_PATIENT_JITTER)
            offset = signal_strength / 2.0 if label == 1 else -signal_strength / 2.0
            for index in range(images_per_patient):
                image = SYNTH_BASE + brightness
                image = image + SYNTH_FIELD_AMPLITUDE * _smooth_field(rng, IMAGE_SIZE, SYNTH_FIELD_SIGMA)
                image = image + rng.normal(0.0, SYNTH_PIXEL_NOISE, size=(IMAGE_SIZE, IMAGE_SIZE))
                image = image + offset * mask
                raw = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)

                rel_path = f"images/p{patient_id:03d}_{index:03d}.pgm"
                if image_dir is not None:
                    write_pgm(image_dir / os.path.basename(rel_path), raw)
                rows.append((rel_path, patient_id, label))
                samples.append(ImageSample(preprocess(raw), label, patient_id, rel_path))
                pbar.update(1)

    if out_dir is not None:
        manifest = Path(out_dir) / 'manifest.csv'
        pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(manifest, index=False, lineterminator='\n')
        logger.info(f"✅ Dataset sintético escrito en {manifest} ({len(samples)} imágenes)")

    return samples
