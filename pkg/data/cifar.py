"""Lettore del formato binario CIFAR-10.

Ogni record è lungo 3073 byte: un byte di etichetta seguito da 3072 byte di
pixel, piani R, G, B da 32x32 in ordine di riga.
"""
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from data.dataset import LabeledDataset, normalized_pair
from utils.exceptions import FormatError, LabelOutOfRange, MalformedRecord
from utils.logger import logger

cifar_logger = logger.getChild('cifar')

NUM_CLASSES = 10
IMAGE_SHAPE = (3, 32, 32)
RECORD_SIZE = 1 + 3 * 32 * 32
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = 'test_batch.bin'


def parse_records(blob: bytes, path: str = '<memoria>') -> Tuple[np.ndarray, np.ndarray]:
    """Ritorna (etichette uint8, pixel uint8 di forma (n, 3, 32, 32))"""
    if len(blob) % RECORD_SIZE:
        offset = (len(blob) // RECORD_SIZE) * RECORD_SIZE
        raise MalformedRecord(path, offset, f"{len(blob) - offset} byte residui, record da {RECORD_SIZE}")
    raw = np.frombuffer(blob, dtype=np.uint8).reshape(-1, RECORD_SIZE)
    labels = raw[:, 0].copy()
    bad = np.flatnonzero(labels >= NUM_CLASSES)
    if bad.size:
        i = int(bad[0])
        raise LabelOutOfRange(f"{path}: etichetta {labels[i]} al record {i} (byte {i * RECORD_SIZE})")
    return labels, raw[:, 1:].reshape((-1,) + IMAGE_SHAPE).copy()


def encode_records(labels: np.ndarray, pixels: np.ndarray) -> bytes:
    """Inverso di parse_records"""
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(labels.shape[0], -1)
    return np.concatenate([labels, pixels], axis=1).tobytes()


def read_batch_file(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"file CIFAR-10 mancante: {path}")
    return parse_records(path.read_bytes(), str(path))


def load_cifar10(dir_path: Union[str, Path], limit: Optional[int] = None) -> Tuple[LabeledDataset, LabeledDataset]:
    """Carica train (5 batch) e test; con limit tiene solo i primi campioni di train"""
    dir_path = Path(dir_path)
    parts = [read_batch_file(dir_path / name) for name in TRAIN_FILES]
    train_labels = np.concatenate([labels for labels, _ in parts])
    train_pixels = np.concatenate([pixels for _, pixels in parts])
    test_labels, test_pixels = read_batch_file(dir_path / TEST_FILE)
    if limit is not None:
        train_labels, train_pixels = train_labels[:limit], train_pixels[:limit]

    train, test = normalized_pair(
        train_pixels.astype(np.float64) / 255.0, train_labels,
        test_pixels.astype(np.float64) / 255.0, test_labels, NUM_CLASSES,
    )
    cifar_logger.info(f"CIFAR-10 caricato da {dir_path}: {len(train)} train, {len(test)} test")
    return train, test
