"""Checkpoint binario del modello.

Layout: magic 'SDCK', versione u32, lunghezza intestazione u32, intestazione
JSON (layer, forma d'ingresso, nomi e forme dei tensori, prior_mask), poi i
tensori float64 little-endian nell'ordine dell'intestazione, infine CRC-32.
"""
import json
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from netcore.model import LayerSpec, Model, build_model, layer_specs_to_dicts
from utils.exceptions import ChecksumMismatch, FormatError, VersionMismatch
from utils.logger import logger

MAGIC = b'SDCK'
FORMAT_VERSION = 1
_PREFIX = struct.Struct('<4sII')
_CRC = struct.Struct('<I')


def serialize_model(model: Model) -> bytes:
    header = {
        'input_shape': list(model.input_shape),
        'layers': layer_specs_to_dicts(model),
        'params': [[name, list(value.shape)] for name, value in model.params.items()],
        'state': [[name, list(value.shape)] for name, value in model.state.items()],
        'prior_mask': model.prior_mask,
    }
    head = json.dumps(header, sort_keys=True).encode('utf-8')
    chunks = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)), head]
    for group in (model.params, model.state):
        chunks.extend(np.ascontiguousarray(v, dtype='<f8').tobytes() for v in group.values())
    body = b''.join(chunks)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def deserialize_model(blob: bytes) -> Model:
    if len(blob) < _PREFIX.size + _CRC.size:
        raise FormatError(f"checkpoint troppo corto ({len(blob)} byte)")
    (stored,) = _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(blob[:-_CRC.size]) & 0xFFFFFFFF != stored:
        raise ChecksumMismatch("CRC-32 del checkpoint non corrisponde")
    magic, version, head_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"magic {magic!r} non valido, atteso {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"versione checkpoint {version}, supportata {FORMAT_VERSION}")

    try:
        header = json.loads(blob[_PREFIX.size:_PREFIX.size + head_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"intestazione checkpoint illeggibile: {e}") from e

    model = build_model([LayerSpec(**spec) for spec in header['layers']], header['input_shape'])
    offset = _PREFIX.size + head_len
    end = len(blob) - _CRC.size
    for key, target in (('params', model.params), ('state', model.state)):
        for name, shape in header[key]:
            count = int(np.prod(shape)) if shape else 1
            if offset + 8 * count > end:
                raise FormatError(f"checkpoint troncato al tensore {name}")
            target[name] = np.frombuffer(blob, dtype='<f8', count=count, offset=offset).reshape(shape).astype(np.float64)
            offset += 8 * count
    if offset != end:
        raise FormatError(f"{end - offset} byte in eccesso nel checkpoint")
    model.prior_mask = {name: bool(flag) for name, flag in header['prior_mask'].items()}
    return model


def save_model(model: Model, path: Union[str, Path]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(serialize_model(model))
    logger.getChild('netcore').info(f"Checkpoint salvato in {path}")


def load_model(path: Union[str, Path]) -> Model:
    return deserialize_model(Path(path).read_bytes())
