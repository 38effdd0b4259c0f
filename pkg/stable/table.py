"""Tabella precalcolata della derivata del log-prior SαS.

La griglia copre [-epsilon, epsilon] con passo delta = epsilon / n_grid; la
chiave di theta è floor(theta / delta) saturata a [-n_grid, n_grid] e il valore
per la chiave k è la differenza centrata

    (p(theta_k + delta) - p(theta_k - delta)) / (2 delta p(theta_k)),  theta_k = k delta

che approssima (ln p)'(theta_k) con errore O(delta^2).
"""
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Callable, Union

import numpy as np

from stable.density import DEFAULT_QUADRATURE, QuadratureConfig, StableParams, pdf
from utils.exceptions import (ChecksumMismatch, DegenerateDensity, FormatError, InvalidParameter,
                              NonSymmetric, VersionMismatch)
from utils.logger import logger

table_logger = logger.getChild('table')

MAGIC = b'SDRT'
FORMAT_VERSION = 1
# magic, version, alpha, gamma, mu, epsilon, n_grid, c
_HEADER = struct.Struct('<4sI4dQd')
_CRC = struct.Struct('<I')


@dataclass(frozen=True)
class DerivTable:
    params: StableParams
    epsilon: float
    n_grid: int
    values: np.ndarray = field(repr=False)
    prior_scale_c: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidParameter(f"epsilon={self.epsilon} deve essere > 0")
        if self.n_grid < 1:
            raise InvalidParameter(f"n_grid={self.n_grid} deve essere >= 1")
        if self.prior_scale_c < 0:
            raise InvalidParameter(f"prior_scale_c={self.prior_scale_c} deve essere >= 0")
        values = np.ascontiguousarray(self.values, dtype='<f8')
        if values.shape != (2 * self.n_grid + 1,):
            raise InvalidParameter(
                f"values ha forma {values.shape}, attesa ({2 * self.n_grid + 1},)"
            )
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def delta(self) -> float:
        return self.epsilon / self.n_grid

    def value_at(self, key: int) -> float:
        """Valore grezzo (senza c) per una chiave in [-n_grid, n_grid]"""
        return float(self.values[key + self.n_grid])

    def with_scale(self, c: float) -> 'DerivTable':
        return replace(self, prior_scale_c=float(c))

    def keys(self, thetas: np.ndarray) -> np.ndarray:
        """Versione vettoriale di key_of"""
        keys = np.floor(np.asarray(thetas, dtype=np.float64) / self.delta)
        return np.clip(keys, -self.n_grid, self.n_grid).astype(np.int64)

    def grad(self, thetas: np.ndarray) -> np.ndarray:
        """c * T_V(T_K(theta)) elemento per elemento"""
        return self.prior_scale_c * self.values[self.keys(thetas) + self.n_grid]

    def saturated(self, thetas: np.ndarray) -> int:
        """Quanti theta cadono sulle chiavi di bordo"""
        return int(np.count_nonzero(np.abs(self.keys(thetas)) == self.n_grid))

    def __eq__(self, other):
        if not isinstance(other, DerivTable):
            return NotImplemented
        return (self.params == other.params and self.epsilon == other.epsilon
                and self.n_grid == other.n_grid and self.prior_scale_c == other.prior_scale_c
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True)
class TableHeader:
    version: int
    alpha: float
    gamma: float
    mu: float
    epsilon: float
    n_grid: int
    prior_scale_c: float

    @property
    def delta(self) -> float:
        return self.epsilon / self.n_grid


def build_table(params: StableParams, epsilon: float, n_grid: int,
                quad: QuadratureConfig = DEFAULT_QUADRATURE, prior_scale_c: float = 1.0) -> DerivTable:
    """Costruisce la tabella con differenze centrate sulla griglia theta_k = k delta"""
    if not params.is_symmetric:
        raise NonSymmetric(f"beta={params.beta}: la tabella richiede un prior simmetrico")
    if not epsilon > 0:
        raise InvalidParameter(f"epsilon={epsilon} deve essere > 0")
    if n_grid < 1:
        raise InvalidParameter(f"n_grid={n_grid} deve essere >= 1")

    delta = epsilon / n_grid
    table_logger.info(
        f"Costruzione tabella alpha={params.alpha} gamma={params.gamma} eps={epsilon} "
        f"N_g={n_grid} delta={delta:g}"
    )
    # punti condivisi: k = -N_g-1 .. N_g+1, ogni densità valutata una volta sola
    if params.mu == 0.0:
        half = np.array([pdf(params, k * delta, quad) for k in range(n_grid + 2)])
        density = np.concatenate([half[:0:-1], half])
    else:
        density = np.array([pdf(params, k * delta, quad) for k in range(-n_grid - 1, n_grid + 2)])

    centre = density[1:-1]
    if np.any(centre <= 0.0):
        bad = int(np.flatnonzero(centre <= 0.0)[0]) - n_grid
        raise DegenerateDensity(
            f"la densità va in underflow alla chiave {bad} (theta={bad * delta:g}): epsilon troppo grande"
        )
    # con la griglia specchiata la simmetria dispari è esatta: a - b == -(b - a)
    values = (density[2:] - density[:-2]) / (2.0 * delta * centre)
    table_logger.info(f"✅ Tabella pronta ({values.size} chiavi)")
    return DerivTable(params, float(epsilon), int(n_grid), values, float(prior_scale_c))


def analytic_log_pdf_derivative(params: StableParams) -> Callable[[np.ndarray], np.ndarray]:
    """d/dtheta ln h in forma chiusa (solo alpha = 2 e alpha = 1)"""
    gamma, mu = params.gamma, params.mu
    if params.alpha == 2.0:
        return lambda theta: -(np.asarray(theta) - mu) / (2.0 * gamma * gamma)
    if params.alpha == 1.0:
        return lambda theta: -2.0 * (np.asarray(theta) - mu) / (gamma * gamma + (np.asarray(theta) - mu) ** 2)
    raise InvalidParameter(f"alpha={params.alpha}: nessuna forma chiusa")


def closed_form_table(params: StableParams, epsilon: float, n_grid: int, prior_scale_c: float = 1.0) -> DerivTable:
    """Tabella con i valori analitici al posto delle differenze finite"""
    derivative = analytic_log_pdf_derivative(params)
    grid = np.arange(-n_grid, n_grid + 1) * (epsilon / n_grid)
    return DerivTable(params, float(epsilon), int(n_grid), derivative(grid).astype(np.float64), float(prior_scale_c))


def key_of(table: DerivTable, theta: float) -> int:
    key = math.floor(theta / table.delta)
    return max(-table.n_grid, min(table.n_grid, key))


def lookup_grad(table: DerivTable, theta: float) -> float:
    return table.prior_scale_c * table.value_at(key_of(table, theta))


def serialize_table(table: DerivTable) -> bytes:
    p = table.params
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, p.alpha, p.gamma, p.mu, table.epsilon,
                        table.n_grid, table.prior_scale_c)
    body = head + table.values.astype('<f8').tobytes()
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def _parse_header(blob: bytes) -> TableHeader:
    if len(blob) < _HEADER.size:
        raise FormatError(f"file tabella troppo corto ({len(blob)} byte)")
    magic, version, alpha, gamma, mu, epsilon, n_grid, c = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"magic {magic!r} non valido, atteso {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"versione formato {version}, supportata {FORMAT_VERSION}")
    return TableHeader(version, alpha, gamma, mu, epsilon, int(n_grid), c)


def deserialize_table(blob: bytes) -> DerivTable:
    """Il CRC si verifica prima di leggere magic e versione"""
    if len(blob) < _HEADER.size + _CRC.size:
        raise FormatError(f"file tabella troppo corto ({len(blob)} byte)")
    (stored,) = _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(blob[:-_CRC.size]) & 0xFFFFFFFF != stored:
        raise ChecksumMismatch("CRC-32 della tabella non corrisponde")
    header = _parse_header(blob)
    expected = _HEADER.size + 8 * (2 * header.n_grid + 1) + _CRC.size
    if len(blob) != expected:
        raise FormatError(f"lunghezza {len(blob)} byte, attesa {expected}")
    values = np.frombuffer(blob, dtype='<f8', count=2 * header.n_grid + 1, offset=_HEADER.size).copy()
    params = StableParams(alpha=header.alpha, gamma=header.gamma, mu=header.mu)
    return DerivTable(params, header.epsilon, header.n_grid, values, header.prior_scale_c)


def read_table_header(source: Union[str, Path, BinaryIO]) -> TableHeader:
    """Legge solo l'intestazione, senza caricare i valori"""
    if isinstance(source, (str, Path)):
        with open(source, 'rb') as fh:
            return _parse_header(fh.read(_HEADER.size))
    return _parse_header(source.read(_HEADER.size))


def save_table(table: DerivTable, path: Union[str, Path]) -> str:
    blob = serialize_table(table)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(blob)
    table_logger.info(f"Tabella salvata in {path}")
    return table_checksum(table)


def load_table(path: Union[str, Path]) -> DerivTable:
    return deserialize_table(Path(path).read_bytes())


def table_checksum(table: DerivTable) -> str:
    """CRC-32 del file serializzato, in esadecimale (va nel manifest)"""
    blob = serialize_table(table)
    return f"{_CRC.unpack_from(blob, len(blob) - _CRC.size)[0]:08x}"
