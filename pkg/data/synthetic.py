"""Dati sintetici: prototipi gaussiani per classe + rumore scalato da difficulty."""
from typing import Sequence, Tuple

import numpy as np

from data.dataset import LabeledDataset, channel_stats, normalize, normalized_pair
from utils.exceptions import InvalidParameter
from utils.rng import stream


def _prototypes(num_classes: int, input_shape: Tuple[int, ...], seed: int) -> np.ndarray:
    return stream(seed, 'synthetic-prototypes').standard_normal((num_classes,) + tuple(input_shape))


def _draw(n: int, prototypes: np.ndarray, difficulty: float, seed: int, split: str) -> Tuple[np.ndarray, np.ndarray]:
    num_classes = prototypes.shape[0]
    # bilanciato per costruzione, poi mescolato
    labels = np.arange(n) % num_classes
    labels = labels[stream(seed, f"synthetic-order-{split}").permutation(n)]
    noise = stream(seed, f"synthetic-noise-{split}").standard_normal((n,) + prototypes.shape[1:])
    return prototypes[labels] + difficulty * noise, labels


def _check(n: int, num_classes: int, difficulty: float):
    if n < 1:
        raise InvalidParameter(f"n={n} deve essere >= 1")
    if num_classes < 2:
        raise InvalidParameter(f"num_classes={num_classes} deve essere >= 2")
    if difficulty < 0:
        raise InvalidParameter(f"difficulty={difficulty} deve essere >= 0")


def make_synthetic(n: int, num_classes: int, input_shape: Sequence[int] = (3, 8, 8), difficulty: float = 0.5,
                   seed: int = 0, split: str = 'train') -> LabeledDataset:
    _check(n, num_classes, difficulty)
    prototypes = _prototypes(num_classes, tuple(input_shape), seed)
    images, labels = _draw(n, prototypes, difficulty, seed, split)
    mean, std = channel_stats(images)
    return LabeledDataset(normalize(images, mean, std), labels, num_classes, split, mean, std)


def make_synthetic_splits(n_train: int, n_test: int, num_classes: int, input_shape: Sequence[int] = (3, 8, 8),
                          difficulty: float = 0.5, seed: int = 0) -> Tuple[LabeledDataset, LabeledDataset]:
    """Train e test con gli stessi prototipi; normalizzazione dal train"""
    _check(n_train, num_classes, difficulty)
    _check(n_test, num_classes, difficulty)
    prototypes = _prototypes(num_classes, tuple(input_shape), seed)
    train_images, train_labels = _draw(n_train, prototypes, difficulty, seed, 'train')
    test_images, test_labels = _draw(n_test, prototypes, difficulty, seed, 'test')
    return normalized_pair(train_images, train_labels, test_images, test_labels, num_classes)
