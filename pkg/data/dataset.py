"""Contenitore immutabile per immagini etichettate + normalizzazione per canale."""
import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from utils.exceptions import InvalidParameter, LabelOutOfRange, ShapeMismatch


@dataclass(frozen=True)
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = 'train'
    channel_mean: Optional[np.ndarray] = None
    channel_std: Optional[np.ndarray] = None

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise ShapeMismatch(f"immagini di forma {images.shape}, attesa (n, C, H, W)")
        if images.shape[0] < 1 or images.shape[0] != labels.shape[0]:
            raise ShapeMismatch(f"{images.shape[0]} immagini e {labels.shape[0]} etichette")
        if self.num_classes < 1:
            raise InvalidParameter(f"num_classes={self.num_classes}")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise LabelOutOfRange(f"etichette fuori da [0, {self.num_classes}): min={labels.min()} max={labels.max()}")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, 'images', images)
        object.__setattr__(self, 'labels', labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def one_hot(self, indices: Optional[np.ndarray] = None) -> np.ndarray:
        labels = self.labels if indices is None else self.labels[indices]
        out = np.zeros((labels.shape[0], self.num_classes))
        out[np.arange(labels.shape[0]), labels] = 1.0
        return out

    def subset(self, indices) -> 'LabeledDataset':
        idx = np.asarray(indices)
        return replace(self, images=self.images[idx], labels=self.labels[idx])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def channel_stats(images: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Media e deviazione standard (di popolazione) per canale"""
    mean = images.mean(axis=(0, 2, 3))
    std = images.std(axis=(0, 2, 3))
    return mean, np.where(std > 0.0, std, 1.0)


def normalize(images: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (images - mean[None, :, None, None]) / std[None, :, None, None]


def normalized_pair(train_images: np.ndarray, train_labels: np.ndarray, test_images: np.ndarray,
                    test_labels: np.ndarray, num_classes: int) -> Tuple[LabeledDataset, LabeledDataset]:
    """Statistiche dal solo train, applicate anche al test"""
    mean, std = channel_stats(train_images)
    train = LabeledDataset(normalize(train_images, mean, std), train_labels, num_classes, 'train', mean, std)
    test = LabeledDataset(normalize(test_images, mean, std), test_labels, num_classes, 'test', mean, std)
    return train, test


def export_csv(dataset: LabeledDataset, path: Union[str, Path]) -> None:
    """Una riga per campione: etichetta, poi i pixel appiattiti"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    flat = dataset.images.reshape(len(dataset), -1)
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        writer.writerow(['label'] + [f"p{i}" for i in range(flat.shape[1])])
        for label, row in zip(dataset.labels, flat):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])
