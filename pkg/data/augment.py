"""Aumentazioni: flip orizzontale, cutout, normalizzazione per canale.

Funzione pura di (batch, flags, seed, batch_index).
"""
from dataclasses import dataclass

import numpy as np

from utils.exceptions import InvalidParameter
from utils.rng import stream


@dataclass(frozen=True)
class AugmentFlags:
    flip: bool = False
    force_flip: bool = False
    cutout: bool = False
    cutout_size: int = 8
    channel_norm: bool = False

    def __post_init__(self):
        if self.cutout_size < 1:
            raise InvalidParameter(f"cutout_size={self.cutout_size} deve essere >= 1")

    @property
    def active(self) -> bool:
        return self.flip or self.force_flip or self.cutout or self.channel_norm


def augment(batch: np.ndarray, flags: AugmentFlags, seed: int, batch_index: int = 0) -> np.ndarray:
    out = np.array(batch, dtype=np.float64, copy=True)
    if not flags.active:
        return out
    n, _, h, w = out.shape
    rng = stream(seed, 'augment', batch_index)

    if flags.force_flip:
        out = out[..., ::-1].copy()
    elif flags.flip:
        chosen = rng.random(n) < 0.5
        out[chosen] = out[chosen][..., ::-1]

    if flags.cutout:
        side_h, side_w = min(flags.cutout_size, h), min(flags.cutout_size, w)
        fill = out.mean(axis=(0, 2, 3))
        tops = rng.integers(0, h - side_h + 1, size=n)
        lefts = rng.integers(0, w - side_w + 1, size=n)
        for i in range(n):
            out[i, :, tops[i]:tops[i] + side_h, lefts[i]:lefts[i] + side_w] = fill[:, None, None]

    if flags.channel_norm:
        mean = out.mean(axis=(0, 2, 3))
        std = out.std(axis=(0, 2, 3))
        std = np.where(std > 0.0, std, 1.0)
        out = (out - mean[None, :, None, None]) / std[None, :, None, None]
    return out
