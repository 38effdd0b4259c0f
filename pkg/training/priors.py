"""Gradienti del log-prior usati dal trainer.

Ogni prior espone grad(theta), saturated(theta) e with_scale(c), come
DerivTable; il prior di Laplace è in forma chiusa e non usa tabelle.
"""
from dataclasses import dataclass, replace

import numpy as np

from utils.exceptions import InvalidParameter


@dataclass(frozen=True)
class LaplacePrior:
    """Prior L1 ("diamante rigido"): d/dtheta ln p = -sgn(theta) / gamma, 0 in theta = 0"""
    gamma: float
    prior_scale_c: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameter(f"gamma={self.gamma} deve essere > 0")
        if self.prior_scale_c < 0:
            raise InvalidParameter(f"prior_scale_c={self.prior_scale_c} deve essere >= 0")

    def with_scale(self, c: float) -> 'LaplacePrior':
        return replace(self, prior_scale_c=float(c))

    def grad(self, thetas: np.ndarray) -> np.ndarray:
        return -self.prior_scale_c * np.sign(thetas) / self.gamma

    def saturated(self, thetas: np.ndarray) -> int:
        return 0
