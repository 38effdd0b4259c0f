"""Geometria degli insiemi di vincolo ln h(t1) + ln h(t2) = kappa e problema giocattolo 2-D.

Gli insiemi di livello sono stellati rispetto all'origine: ogni contorno si
traccia per bisezione radiale (brentq) lungo raggi equispaziati.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from stable.density import DEFAULT_QUADRATURE, QuadratureConfig, StableParams, log_pdf
from utils.exceptions import EmptyLevelSet, InfeasibleBudget, InvalidParameter, RootNotBracketed
from utils.logger import logger

geometry_logger = logger.getChild('geometry')

_MAX_DOUBLINGS = 60
_XTOL = 1e-14


@dataclass(frozen=True)
class GeometryContour:
    params: StableParams
    kappa: float
    angles: np.ndarray
    points: np.ndarray  # (resolution + 1, 2), l'ultimo punto ripete il primo

    @property
    def radii(self) -> np.ndarray:
        return np.hypot(self.points[:-1, 0], self.points[:-1, 1])


@dataclass(frozen=True)
class QuadraticObjective:
    """(theta - centre)^T A (theta - centre)"""
    centre: Tuple[float, float]
    form: Tuple[Tuple[float, float], Tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))
    axis_radius: float = 1.5

    def __call__(self, theta: np.ndarray) -> float:
        d = np.asarray(theta, dtype=np.float64) - np.asarray(self.centre)
        return float(d @ np.asarray(self.form) @ d)


def canonical_toy_objective() -> QuadraticObjective:
    """Ellisse (qui cerchio) fuori asse; l'obiettivo originale non è noto"""
    return QuadraticObjective(centre=(1.0, 2.2))


def level_value(params: StableParams, theta1: float, theta2: float,
                quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    return log_pdf(params, theta1, quad) + log_pdf(params, theta2, quad)


def peak_level(params: StableParams, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """2 ln h(mu): il massimo della funzione di livello"""
    return 2.0 * log_pdf(params, params.mu, quad)


def kappa_for_axis_radius(params: StableParams, radius: float, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Livello il cui intercetto sull'asse theta1 cade a distanza `radius`"""
    if not radius > 0:
        raise InvalidParameter(f"radius={radius} deve essere > 0")
    return level_value(params, params.mu + radius, params.mu, quad)


def radius_on_ray(params: StableParams, kappa: float, angle: float,
                  quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Distanza dall'origine del contorno lungo la direzione `angle`"""
    c, s = math.cos(angle), math.sin(angle)
    mu = params.mu

    def gap(r: float) -> float:
        return level_value(params, mu + r * c, mu + r * s, quad) - kappa

    if gap(0.0) <= 0.0:
        raise EmptyLevelSet(f"kappa={kappa} non sotto il massimo {peak_level(params, quad)}")
    hi = 1.0
    for _ in range(_MAX_DOUBLINGS):
        if gap(hi) < 0.0:
            return brentq(gap, 0.0, hi, xtol=_XTOL)
        hi *= 2.0
    raise RootNotBracketed(f"nessun cambio di segno entro r={hi:g} all'angolo {angle:.4f}")


def constraint_contour(params: StableParams, kappa: float, resolution: int = 64,
                       quad: QuadratureConfig = DEFAULT_QUADRATURE) -> GeometryContour:
    if resolution < 3:
        raise InvalidParameter(f"resolution={resolution} deve essere >= 3")
    if kappa >= peak_level(params, quad):
        raise EmptyLevelSet(f"kappa={kappa} >= 2 ln h(0): insieme vuoto o degenere")
    angles = np.linspace(0.0, 2.0 * math.pi, resolution, endpoint=False)
    radii = np.array([radius_on_ray(params, kappa, a, quad) for a in angles])
    points = np.column_stack([params.mu + radii * np.cos(angles), params.mu + radii * np.sin(angles)])
    points = np.vstack([points, points[:1]])
    geometry_logger.debug(f"contorno alpha={params.alpha} kappa={kappa:.6g}: r in [{radii.min():.4g}, {radii.max():.4g}]")
    return GeometryContour(params, float(kappa), angles, points)


def diagonal_axis_ratio(params: StableParams, kappa: float, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """r(45 gradi) / r(0): 1 per il cerchio, < 1 per diamante e stella"""
    return radius_on_ray(params, kappa, math.pi / 4.0, quad) / radius_on_ray(params, kappa, 0.0, quad)


def toy_lse_solve(objective: QuadraticObjective, params: StableParams, kappa: Optional[float] = None,
                  resolution: int = 360, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> Tuple[float, float]:
    """Minimo dell'obiettivo con vincolo ln h(t1) + ln h(t2) >= kappa.

    Se il centro è ammissibile lo ritorna; altrimenti il minimo sta sul bordo,
    cercato con una scansione angolare e raffinato con minimize_scalar.
    """
    if kappa is None:
        kappa = kappa_for_axis_radius(params, objective.axis_radius, quad)
    if kappa >= peak_level(params, quad):
        raise InfeasibleBudget(f"kappa={kappa} >= 2 ln h(0): nessun punto ammissibile")
    centre = np.asarray(objective.centre, dtype=np.float64)
    if level_value(params, centre[0], centre[1], quad) >= kappa:
        return float(centre[0]), float(centre[1])

    def on_boundary(angle: float) -> np.ndarray:
        r = radius_on_ray(params, kappa, angle, quad)
        return np.array([params.mu + r * math.cos(angle), params.mu + r * math.sin(angle)])

    angles = np.linspace(0.0, 2.0 * math.pi, resolution, endpoint=False)
    costs = np.array([objective(on_boundary(a)) for a in angles])
    best = angles[int(np.argmin(costs))]
    step = 2.0 * math.pi / resolution
    res = minimize_scalar(lambda a: objective(on_boundary(a)), bounds=(best - step, best + step),
                          method='bounded', options={'xatol': 1e-10})
    theta = on_boundary(res.x if res.fun <= costs.min() else best)
    return float(theta[0]), float(theta[1])
