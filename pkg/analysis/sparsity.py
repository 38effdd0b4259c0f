"""Sparsità dei pesi sotto prior."""
from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy.stats import kurtosis

from netcore.model import Model
from utils.exceptions import InvalidParameter


@dataclass(frozen=True)
class SparsityReport:
    threshold: float
    fraction: float
    count: int
    per_layer: Dict[str, float]
    layer_sizes: Dict[str, int]
    kurtosis: float


def weight_kurtosis(weights: np.ndarray) -> float:
    """Quarto momento standardizzato (3 per una gaussiana); nan se i pesi sono costanti"""
    if weights.size < 2 or np.std(weights) == 0.0:
        return float('nan')
    return float(kurtosis(weights, fisher=False, bias=True))


def sparsity(model: Model, tau: float) -> SparsityReport:
    """Frazione dei pesi con |w| <= tau, globale e per layer"""
    if not tau > 0:
        raise InvalidParameter(f"tau={tau} deve essere > 0")
    per_layer: Dict[str, float] = {}
    sizes: Dict[str, int] = {}
    small = 0
    for name in model.masked_names():
        w = model.params[name]
        hits = int(np.count_nonzero(np.abs(w) <= tau))
        per_layer[name] = hits / w.size
        sizes[name] = int(w.size)
        small += hits
    total = sum(sizes.values())
    weights = model.masked_weights()
    return SparsityReport(
        threshold=float(tau),
        fraction=small / total if total else 0.0,
        count=total,
        per_layer=per_layer,
        layer_sizes=sizes,
        kurtosis=weight_kurtosis(weights),
    )
