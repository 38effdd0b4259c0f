"""Densità alpha-stabili simmetriche (SαS).

La densità si ottiene invertendo la funzione caratteristica. Con beta = 0 la
parte immaginaria si cancella e resta una trasformata coseno unilatera:

    h(theta) = (1/pi) * int_0^inf exp(-(gamma*w)^alpha) cos(w (theta - mu)) dw

Alpha = 2 (gaussiana) e alpha = 1 (Cauchy) hanno forma chiusa; per gli altri
valori si integra a pannelli.
"""
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from utils.exceptions import InvalidParameter, NonSymmetric, QuadratureFailure
from utils.logger import logger
from utils.rng import stream

density_logger = logger.getChild('density')

LOG_PDF_FLOOR = 1e-300

_GAUSS_ORDER = 20
_NODES_HI, _WEIGHTS_HI = leggauss(_GAUSS_ORDER)
_NODES_LO, _WEIGHTS_LO = leggauss(_GAUSS_ORDER // 2)


@dataclass(frozen=True)
class StableParams:
    alpha: float
    beta: float = 0.0
    gamma: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0) or math.isnan(self.alpha):
            raise InvalidParameter(f"alpha={self.alpha} fuori da (0, 2]")
        if not (-1.0 <= self.beta <= 1.0):
            raise InvalidParameter(f"beta={self.beta} fuori da [-1, 1]")
        if not (self.gamma > 0.0) or math.isinf(self.gamma):
            raise InvalidParameter(f"gamma={self.gamma} deve essere > 0")
        if not math.isfinite(self.mu):
            raise InvalidParameter(f"mu={self.mu} non finito")

    @property
    def is_symmetric(self) -> bool:
        return self.beta == 0.0


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-9
    omega_max_cutoff: float = 1e-12
    max_panels: int = 10 ** 6
    # oltre questo numero di semiperiodi si passa all'integrazione per cicli
    # con estrapolazione (QUADPACK QAWF)
    accel_threshold: int = 20000
    max_cycles: int = 500

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise InvalidParameter(f"abs_tol={self.abs_tol} deve essere > 0")
        if not (0.0 < self.omega_max_cutoff < 1.0):
            raise InvalidParameter(f"omega_max_cutoff={self.omega_max_cutoff} fuori da (0, 1)")
        if self.max_panels < 1:
            raise InvalidParameter(f"max_panels={self.max_panels} deve essere >= 1")
        if self.accel_threshold < 1 or self.max_cycles < 3:
            raise InvalidParameter("accel_threshold >= 1 e max_cycles >= 3 richiesti")


DEFAULT_QUADRATURE = QuadratureConfig()


def characteristic_fn(params: StableParams, omega: float) -> complex:
    """Funzione caratteristica della legge stabile, incluso il ramo logaritmico alpha = 1"""
    if omega == 0:
        return complex(1.0, 0.0)
    alpha, beta, gamma, mu = params.alpha, params.beta, params.gamma, params.mu
    if alpha != 1.0:
        phi = math.tan(math.pi * alpha / 2.0)
    else:
        phi = -(2.0 / math.pi) * math.log(abs(omega))
    scale = abs(gamma * omega) ** alpha
    exponent = 1j * omega * mu - scale * (1.0 - 1j * beta * math.copysign(1.0, omega) * phi)
    return complex(np.exp(exponent))


def _require_symmetric(params: StableParams):
    if not params.is_symmetric:
        raise NonSymmetric(f"beta={params.beta}: solo densità simmetriche (beta = 0)")


def _gaussian_pdf(gamma: float, x: float) -> float:
    # deviazione standard gamma * sqrt(2)
    return math.exp(-x * x / (4.0 * gamma * gamma)) / (2.0 * gamma * math.sqrt(math.pi))


def _cauchy_pdf(gamma: float, x: float) -> float:
    return gamma / (math.pi * (gamma * gamma + x * x))


def truncation_point(alpha: float, gamma: float, quad: QuadratureConfig) -> float:
    """omega_max oltre cui l'inviluppo exp(-(gamma w)^alpha) è trascurabile.

    Si prende il massimo tra la soglia sull'inviluppo e il punto dove la coda
    integrata dell'inviluppo scende sotto abs_tol / 10.
    """
    z_env = -math.log(quad.omega_max_cutoff)
    s = 1.0 / alpha
    # coda: (1 / (pi alpha gamma)) * Gamma(s, z) <= abs_tol / 10
    target = quad.abs_tol * math.pi * alpha * gamma / (10.0 * special.gamma(s))
    z_tail = float(special.gammainccinv(s, min(target, 0.5))) if target < 1.0 else 0.0
    return max(z_env, z_tail) ** s / gamma


def _panel_breaks(x: float, omega_max: float, gamma: float) -> np.ndarray:
    scale = 1.0 / gamma
    grading = [scale * 2.0 ** -k for k in range(1, 52)]
    k = 0
    while scale * 2.0 ** k < omega_max:
        grading.append(scale * 2.0 ** k)
        k += 1
    breaks = [0.0, omega_max, *[g for g in grading if g < omega_max]]
    if x > 0.0:
        n_zeros = int(omega_max * x / math.pi + 0.5)
        breaks.extend((np.arange(n_zeros) + 0.5) * math.pi / x)
    return np.unique(np.asarray(breaks, dtype=np.float64))


def _gauss_panels(f, a: np.ndarray, b: np.ndarray, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    points = mid[:, None] + half[:, None] * nodes[None, :]
    return half * (f(points) @ weights)


def _adaptive_gauss(f, breaks: np.ndarray, tol: float, max_panels: int):
    """Gauss-Legendre a ordine fisso per pannello, bisezione dei pannelli che non convergono"""
    a, b = breaks[:-1], breaks[1:]
    span = breaks[-1] - breaks[0]
    total = 0.0
    error = 0.0
    used = 0
    while a.size:
        used += a.size
        if used > max_panels:
            raise QuadratureFailure(
                f"abs_tol non raggiunta entro max_panels={max_panels} (alpha/gamma troppo estremi?)"
            )
        hi = _gauss_panels(f, a, b, _NODES_HI, _WEIGHTS_HI)
        lo = _gauss_panels(f, a, b, _NODES_LO, _WEIGHTS_LO)
        err = np.abs(hi - lo)
        # soglia proporzionale alla larghezza, con pavimento di arrotondamento
        ok = err <= np.maximum(tol * (b - a) / span, 1e-14 * np.abs(hi))
        total += float(np.sum(hi[ok]))
        error += float(np.sum(err[ok]))
        mid = 0.5 * (a[~ok] + b[~ok])
        a, b = np.concatenate([a[~ok], mid]), np.concatenate([mid, b[~ok]])
    return total, error


def _cosine_transform(x: float, alpha: float, gamma: float, quad: QuadratureConfig) -> float:
    """(1/pi) int_0^inf exp(-(gamma w)^alpha) cos(w x) dw, x >= 0"""
    omega_max = truncation_point(alpha, gamma, quad)
    n_cycles = omega_max * x / math.pi

    def envelope(w):
        return np.exp(-(gamma * w) ** alpha)

    def panel_path():
        breaks = _panel_breaks(x, omega_max, gamma)
        if breaks.size - 1 > quad.max_panels:
            raise QuadratureFailure(
                f"{breaks.size - 1} semiperiodi superano max_panels={quad.max_panels} "
                f"(x={x}, alpha={alpha}, gamma={gamma})"
            )
        value, _ = _adaptive_gauss(
            lambda w: envelope(w) * np.cos(w * x), breaks, 0.5 * math.pi * quad.abs_tol, quad.max_panels
        )
        return value / math.pi

    if n_cycles <= quad.accel_threshold:
        return panel_path()

    # molti semiperiodi: integrazione per cicli tra gli zeri del coseno con
    # accelerazione epsilon della serie alternante dei contributi
    result = integrate.quad(
        envelope, 0.0, np.inf, weight='cos', wvar=x,
        epsabs=math.pi * quad.abs_tol, limlst=quad.max_cycles, limit=200, full_output=1,
    )
    value, abserr = result[0], result[1]
    if len(result) > 3 or abserr > math.pi * quad.abs_tol:
        density_logger.debug(
            f"QAWF non convergente (x={x}, alpha={alpha}, errore {abserr:.3g}): ripiego sui pannelli"
        )
        return panel_path()
    return value / math.pi


def pdf(params: StableParams, theta: float, quad: QuadratureConfig = DEFAULT_QUADRATURE,
        force_quadrature: bool = False) -> float:
    """Densità SαS h(theta); forme chiuse per alpha = 2 e alpha = 1"""
    _require_symmetric(params)
    x = abs(float(theta) - params.mu)
    if not force_quadrature:
        if params.alpha == 2.0:
            return _gaussian_pdf(params.gamma, x)
        if params.alpha == 1.0:
            return _cauchy_pdf(params.gamma, x)
    value = _cosine_transform(x, params.alpha, params.gamma, quad)
    # il rumore di quadratura può dare valori negativi di ordine abs_tol
    return max(value, 0.0)


def log_pdf(params: StableParams, theta: float, quad: QuadratureConfig = DEFAULT_QUADRATURE,
            force_quadrature: bool = False) -> float:
    value = pdf(params, theta, quad, force_quadrature)
    if value < LOG_PDF_FLOOR:
        return math.log(LOG_PDF_FLOOR)
    return math.log(value)


def pdf_grid(params: StableParams, thetas: Sequence[float], quad: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    return np.array([pdf(params, t, quad) for t in np.asarray(thetas, dtype=np.float64)])


def log_pdf_grid(params: StableParams, thetas: Sequence[float], quad: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    return np.array([log_pdf(params, t, quad) for t in np.asarray(thetas, dtype=np.float64)])


def tail_mass(params: StableParams, L: float, max_terms: int = 200) -> float:
    """P(|X - mu| > L) per una legge SαS.

    Serie di potenze della coda: convergente per alpha < 1, asintotica per
    alpha > 1 (troncata al termine più piccolo).
    """
    _require_symmetric(params)
    if L <= 0:
        return 1.0
    alpha, gamma = params.alpha, params.gamma
    if alpha == 2.0:
        return float(special.erfc(L / (2.0 * gamma)))
    if alpha == 1.0:
        return 1.0 - 2.0 / math.pi * math.atan(L / gamma)
    u = L / gamma
    total = 0.0
    previous = math.inf
    for k in range(1, max_terms + 1):
        log_mag = special.gammaln(k * alpha + 1.0) - special.gammaln(k + 1.0) - k * alpha * math.log(u)
        term = (-1) ** (k + 1) * math.exp(log_mag) * math.sin(k * math.pi * alpha / 2.0) / (k * alpha)
        magnitude = math.exp(log_mag) / (k * alpha)
        if alpha > 1.0 and magnitude > previous:
            break
        total += term
        previous = magnitude
        if magnitude < 1e-17 * max(abs(total), 1e-300):
            break
    return 2.0 * total / math.pi


def sample(params: StableParams, n: int, seed: int) -> np.ndarray:
    """n variabili SαS con la trasformazione di Chambers-Mallows-Stuck"""
    _require_symmetric(params)
    if n < 1:
        raise InvalidParameter(f"n={n} deve essere >= 1")
    rng = stream(seed, 'stable-sample')
    phi = (rng.uniform(size=n) - 0.5) * math.pi
    w = rng.exponential(size=n)
    alpha = params.alpha
    if alpha == 1.0:
        x = np.tan(phi)
    elif alpha == 2.0:
        x = 2.0 * np.sqrt(w) * np.sin(phi)
    else:
        x = (np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
             * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha))
    return params.mu + params.gamma * x
