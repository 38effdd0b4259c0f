"""Stima di densità a nucleo gaussiano della distribuzione dei pesi."""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import norm

from netcore.model import Model
from utils.exceptions import EmptyModel, InvalidParameter
from utils.logger import logger

kde_logger = logger.getChild('kde')

_CHUNK_ELEMENTS = 2 ** 22
_MIN_POINTS = 512
_MAX_POINTS = 20001


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    @property
    def mass(self) -> float:
        return float(trapezoid(self.density, self.grid))


def _weights_of(source: Union[Model, np.ndarray]) -> np.ndarray:
    weights = source.masked_weights() if isinstance(source, Model) else np.ravel(np.asarray(source, dtype=np.float64))
    if weights.size == 0:
        raise EmptyModel("nessun peso sotto prior da stimare")
    return weights


def silverman_bandwidth(weights: np.ndarray) -> float:
    """Regola di Silverman: 0.9 min(sigma, IQR / 1.34) n^(-1/5)"""
    std = float(np.std(weights))
    q75, q25 = np.percentile(weights, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) or std
    if spread == 0.0:
        return 1e-3
    return 0.9 * spread * weights.size ** -0.2


def min_grid_bandwidth(weights: np.ndarray) -> float:
    """Banda minima per cui la griglia di default ha passo <= banda / 4 entro _MAX_POINTS punti"""
    return 4.0 * float(weights.max() - weights.min()) / (_MAX_POINTS - 41)


def default_grid(weights: np.ndarray, bandwidth: float) -> np.ndarray:
    lo, hi = weights.min() - 5.0 * bandwidth, weights.max() + 5.0 * bandwidth
    points = int(np.clip(np.ceil((hi - lo) / (bandwidth / 4.0)) + 1, _MIN_POINTS, _MAX_POINTS))
    return np.linspace(lo, hi, points)


def weight_kde(source: Union[Model, np.ndarray], bandwidth: Optional[float] = None,
               grid: Optional[Sequence[float]] = None) -> DensityCurve:
    weights = _weights_of(source)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(weights)
    if not bandwidth > 0:
        raise InvalidParameter(f"bandwidth={bandwidth} deve essere > 0")
    if grid is None:
        floor = min_grid_bandwidth(weights)
        if bandwidth < floor:
            kde_logger.info(f"Banda {bandwidth:.3g} alzata a {floor:.3g}: pesi concentrati su un intervallo ampio")
            bandwidth = floor
        grid = default_grid(weights, bandwidth)
    else:
        grid = np.asarray(grid, dtype=np.float64)

    density = np.zeros_like(grid)
    chunk_size = max(1, _CHUNK_ELEMENTS // max(grid.size, 1))
    for start in range(0, weights.size, chunk_size):
        chunk = weights[start:start + chunk_size]
        density += norm.pdf((grid[:, None] - chunk[None, :]) / bandwidth).sum(axis=1)
    density /= weights.size * bandwidth
    return DensityCurve(grid, density, float(bandwidth))


def weight_histogram(source: Union[Model, np.ndarray], bins: int = 50,
                     value_range: Optional[Tuple[float, float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Istogramma normalizzato (edges, densità)"""
    weights = _weights_of(source)
    density, edges = np.histogram(weights, bins=bins, range=value_range, density=True)
    return edges, density
