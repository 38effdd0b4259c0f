"""Gerarchia dei generatori: seed radice -> stream con nome."""
import zlib

import numpy as np


def stream_seed(root_seed: int, name: str, *indices: int) -> np.random.SeedSequence:
    """SeedSequence deterministica per (seed, nome, indici)"""
    key = [int(root_seed) & 0xFFFFFFFF, zlib.crc32(name.encode('utf-8'))]
    key.extend(int(i) & 0xFFFFFFFF for i in indices)
    return np.random.SeedSequence(key)


def stream(root_seed: int, name: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(stream_seed(root_seed, name, *indices))
