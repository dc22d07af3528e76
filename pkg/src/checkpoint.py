"""
Formato binario de checkpoint QTLC

    magic "QTLC" | versión u32 LE | longitud de cabecera u32 LE | cabecera JSON UTF-8 | float32 LE

La cabecera es {"model": {...}, "tensors": [{"name", "shape", "dtype": "f32"}, ...]}
y los datos se concatenan en el mismo orden que la lista de tensores.
"""

import json
import logging
import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from .exceptions import ConfigurationError, CorruptCheckpointError, DimensionError
from .models import Model, model_from_state

logger = logging.getLogger(__name__)

MAGIC = b'QTLC'
FORMAT_VERSION = 1
PREFIX = struct.Struct('<4sII')
STORED_DTYPE = np.dtype('<f4')


def encode_checkpoint(tensors: Mapping[str, np.ndarray], metadata: Mapping[str, Any]) -> bytes:
    """Serializa tensores (en orden de inserción) y metadatos del modelo"""
    records = []
    blobs = []
    for name, values in tensors.items():
        array = np.asarray(values)
        if array.dtype != np.float32:
            logger.warning(f"⚠️ {name} es {array.dtype}; se guarda en float32 (el round trip no será exacto)")
        records.append({'name': name, 'shape': list(array.shape), 'dtype': 'f32'})
        blobs.append(np.ascontiguousarray(array, dtype=STORED_DTYPE).tobytes())

    header = json.dumps({'model': dict(metadata), 'tensors': records}, sort_keys=True, separators=(',', ':'))
    header_bytes = header.encode('utf-8')
    return PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + header_bytes + b''.join(blobs)


def decode_checkpoint(buffer: bytes) -> Tuple[Dict[str, Any], 'OrderedDict[str, np.ndarray]']:
    """
    Valida y decodifica un checkpoint

    Returns:
        (metadatos del modelo, tensores por nombre en orden de cabecera)

    Raises:
        CorruptCheckpointError: magic, versión, cabecera o tamaños inválidos
    """
    if len(buffer) < PREFIX.size:
        raise CorruptCheckpointError(f"Checkpoint truncado: {len(buffer)} bytes")
    magic, version, header_len = PREFIX.unpack_from(buffer, 0)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"Magic inválido {magic!r}")
    if version != FORMAT_VERSION:
        raise CorruptCheckpointError(f"Versión {version} no soportada (se espera {FORMAT_VERSION})")

    body_start = PREFIX.size + header_len
    if body_start > len(buffer):
        raise CorruptCheckpointError("Cabecera truncada")
    try:
        header = json.loads(buffer[PREFIX.size:body_start].decode('utf-8'))
        records = header['tensors']
        metadata = header['model']
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CorruptCheckpointError(f"Cabecera ilegible: {e}") from e

    tensors: 'OrderedDict[str, np.ndarray]' = OrderedDict()
    offset = body_start
    try:
        for record in records:
            if record['dtype'] != 'f32':
                raise CorruptCheckpointError(f"dtype {record['dtype']!r} no soportado en {record['name']}")
            shape = tuple(int(d) for d in record['shape'])
            if any(d < 0 for d in shape):
                raise CorruptCheckpointError(f"Forma negativa {shape} en {record['name']}")
            count = int(np.prod(shape, dtype=np.int64))
            nbytes = count * STORED_DTYPE.itemsize
            if offset + nbytes > len(buffer):
                raise CorruptCheckpointError(f"Datos truncados en {record['name']}")
            if count == 0:
                tensors[record['name']] = np.zeros(shape, dtype=np.float32)
            else:
                tensors[record['name']] = (
                    np.frombuffer(buffer, dtype=STORED_DTYPE, count=count, offset=offset).astype(np.float32).reshape(shape)
                )
            offset += nbytes
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptCheckpointError(f"Registro de tensor inválido: {e}") from e

    if offset != len(buffer):
        raise CorruptCheckpointError(f"Sobran {len(buffer) - offset} bytes tras los tensores")
    return metadata, tensors


def write_checkpoint(path: Union[str, Path], tensors: Mapping[str, np.ndarray], metadata: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_checkpoint(tensors, metadata)
    fd, tmp = tempfile.mkstemp(prefix=path.name, suffix='.tmp', dir=path.parent)
    with os.fdopen(fd, 'wb') as fh:
        fh.write(payload)
    os.replace(tmp, path)
    return path


def read_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Any], 'OrderedDict[str, np.ndarray]']:
    with open(path, 'rb') as fh:
        return decode_checkpoint(fh.read())


def save_checkpoint(model: Model, path: Union[str, Path]) -> Path:
    """Guarda todos los tensores del modelo (congelados incluidos) y sus metadatos"""
    tensors = OrderedDict((name, t.data) for name, t in model.tensors().items())
    written = write_checkpoint(path, tensors, model.metadata())
    logger.info(f"✅ Checkpoint guardado en {written} ({len(tensors)} tensores)")
    return written


def load_checkpoint(path: Union[str, Path]) -> Model:
    """
    Reconstruye el modelo de un checkpoint

    Raises:
        CorruptCheckpointError: fichero dañado o tensores que no encajan con el modelo
    """
    metadata, tensors = read_checkpoint(path)
    try:
        model = model_from_state(metadata, tensors)
    except (ConfigurationError, DimensionError) as e:
        raise CorruptCheckpointError(f"{path}: {e}") from e
    logger.info(f"📥 Checkpoint {path} cargado ({metadata.get('kind')})")
    return model
