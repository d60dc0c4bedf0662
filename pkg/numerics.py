"""Combinatoric and special-function primitives plus the distribution value types."""
import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterator, Mapping, Tuple, Union

import numpy as np
from scipy.stats import binom, nbinom, poisson

import config
from errors import DomainError, KernelOverflowError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class TruncationPolicy:
    tail_epsilon: float = config.TAIL_EPSILON
    hard_cap: int = config.HARD_CAP

    def __post_init__(self):
        if not 0 < self.tail_epsilon < 1e-3:
            raise DomainError(f"tail_epsilon must lie in (0, 1e-3), got {self.tail_epsilon}")
        if self.hard_cap < 1:
            raise DomainError(f"hard_cap must be >= 1, got {self.hard_cap}")

    def _capped(self, index: int, what: str) -> int:
        if index > self.hard_cap:
            logger.warning(f"Truncation of {what} hit the hard cap {self.hard_cap} (wanted {index})")
            return self.hard_cap
        return index

    def poisson_cutoff(self, mean: float) -> int:
        """Smallest t with Poisson(mean) mass above t below tail_epsilon."""
        if mean <= 0:
            return 0
        return self._capped(int(poisson.isf(self.tail_epsilon, mean)) + 1, f"Poisson({mean:.4g}) tail")

    def negative_binomial_cutoff(self, successes: int, q: float) -> int:
        """Largest failure count kept for a NegBin(successes, 1 - q) tail."""
        if q <= 0:
            return 0
        return self._capped(int(nbinom.isf(self.tail_epsilon, successes, 1.0 - q)) + 1,
                            f"negative-binomial(r={successes}, q={q:.4g}) tail")

    def geometric_cutoff(self, ratio: float) -> int:
        if ratio <= 0:
            return 0
        return self._capped(int(math.ceil(math.log(self.tail_epsilon) / math.log(ratio))),
                            f"geometric({ratio:.4g}) tail")


DEFAULT_TRUNCATION = TruncationPolicy()


# ---------------------------------------------------------------------------
# Combinatorics
# ---------------------------------------------------------------------------

_EXACT_FACTORIAL_LIMIT = 20
_log_factorial_table = np.zeros(1)
_log_factorial_lock = threading.Lock()


def _ensure_log_factorials(n_max: int) -> np.ndarray:
    global _log_factorial_table
    table = _log_factorial_table
    if n_max < table.size:
        return table
    with _log_factorial_lock:
        table = _log_factorial_table
        if n_max >= table.size:
            size = max(n_max + 1, 2 * table.size, 64)
            logs = np.log(np.arange(1, size, dtype=float))
            extended = np.concatenate(([0.0], np.cumsum(logs)))
            for n in range(min(size, _EXACT_FACTORIAL_LIMIT + 1)):
                extended[n] = math.log(math.factorial(n))
            extended.setflags(write=False)
            _log_factorial_table = table = extended
    return table


def log_factorial(n: int) -> float:
    """ln(n!), exact for n <= 20 and from a cached running sum of logs beyond."""
    if n < 0:
        raise DomainError(f"log_factorial needs n >= 0, got {n}")
    if n <= _EXACT_FACTORIAL_LIMIT:
        return math.log(math.factorial(n))
    return float(_ensure_log_factorials(n)[n])


def log_factorials(n_max: int) -> np.ndarray:
    """ln(k!) for k = 0..n_max as a read-only array."""
    return _ensure_log_factorials(n_max)[: n_max + 1]


@lru_cache(maxsize=None)
def interference_kernel(j: int, m: int, n: int) -> int:
    """Exact value of sum_k C(m, m+k-j) C(n, k) (-1)^k."""
    if j < 0 or m < 0 or n < 0:
        raise DomainError(f"interference_kernel needs non-negative arguments, got {(j, m, n)}")
    limit = 1 << (config.KERNEL_INT_BITS - 1)
    total = 0
    for k in range(max(0, j - m), min(j, n) + 1):
        term = math.comb(m, m + k - j) * math.comb(n, k)
        if term >= limit:
            raise KernelOverflowError(j, m, n, config.KERNEL_INT_BITS)
        total += -term if k % 2 else term
        if abs(total) >= limit:
            raise KernelOverflowError(j, m, n, config.KERNEL_INT_BITS)
    return total


def binomial_pmf_matrix(size: int, eta: float) -> np.ndarray:
    """B[m, x] = C(x, m) eta^m (1 - eta)^(x - m) for m, x < size."""
    kept = np.arange(size)[:, None]
    source = np.arange(size)[None, :]
    return binom.pmf(kept, source, eta)


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def hermite(j: int, x: ArrayLike) -> ArrayLike:
    """Physicists' Hermite polynomial H_j(x)."""
    if j < 0:
        raise DomainError(f"hermite degree must be >= 0, got {j}")
    previous = np.ones_like(x, dtype=float) if isinstance(x, np.ndarray) else 1.0
    if j == 0:
        return previous
    current = 2.0 * x
    for k in range(1, j):
        previous, current = current, 2.0 * x * current - 2.0 * k * previous
    return current


def laguerre(k: int, x: ArrayLike) -> ArrayLike:
    """Laguerre polynomial L_k(x)."""
    if k < 0:
        raise DomainError(f"laguerre degree must be >= 0, got {k}")
    previous = np.ones_like(x, dtype=float) if isinstance(x, np.ndarray) else 1.0
    if k == 0:
        return previous
    current = 1.0 - x
    for i in range(1, k):
        previous, current = current, ((2 * i + 1 - x) * current - i * previous) / (i + 1)
    return current


def hermite_functions(k_max: int, x: np.ndarray) -> np.ndarray:
    """Normalized Hermite-Gauss functions psi_0..psi_k_max at x.

    Vacuum quadrature variance is 1, so that
    psi_k(x)^2 = (2 pi)^(-1/2) (2^k k!)^(-1) H_k(x / sqrt 2)^2 exp(-x^2 / 2).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((k_max + 1,) + x.shape)
    out[0] = (2.0 * np.pi) ** -0.25 * np.exp(-x * x / 4.0)
    if k_max >= 1:
        out[1] = x * out[0]
    u = x / math.sqrt(2.0)
    for k in range(1, k_max):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * u * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def min_eigenvalue_symmetric(matrix) -> float:
    """Smallest eigenvalue of a real symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    size = a.shape[0]
    if size > config.JACOBI_MAX_DIMENSION:
        raise ShapeError(f"matrix dimension {size} exceeds {config.JACOBI_MAX_DIMENSION}")
    if size == 0:
        raise ShapeError("empty matrix")
    scale = max(float(np.max(np.abs(a))), 1.0)
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ShapeError("matrix is not symmetric")
    a = 0.5 * (a + a.T)

    for sweep in range(config.JACOBI_MAX_SWEEPS):
        off = np.abs(a - np.diag(np.diag(a)))
        tolerance = config.JACOBI_TOLERANCE * max(float(np.max(np.abs(np.diag(a)))), 1.0)
        if off.max(initial=0.0) < tolerance:
            break
        for p in range(size - 1):
            for q in range(p + 1, size):
                if abs(a[p, q]) < tolerance:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rotation = np.eye(size)
                rotation[p, p] = rotation[q, q] = c
                rotation[p, q] = s
                rotation[q, p] = -s
                a = rotation.T @ a @ rotation
    else:
        logger.warning(f"Jacobi eigensolver did not converge in {config.JACOBI_MAX_SWEEPS} sweeps")
    return float(np.min(np.diag(a)))


# ---------------------------------------------------------------------------
# Distribution value types
# ---------------------------------------------------------------------------

def _normalize(weights: np.ndarray, what: str, expected_total: float) -> Tuple[np.ndarray, float]:
    weights = np.asarray(weights, dtype=float)
    if weights.size and weights.min() < -1e-12:
        raise DomainError(f"{what} has a negative entry {weights.min():.3g}")
    weights = np.clip(weights, 0.0, None)
    total = float(weights.sum())
    if not total > 0 or not math.isfinite(total):
        raise DomainError(f"{what} has no probability mass")
    deficit = expected_total - total
    if abs(deficit) > config.NORMALIZATION_TOLERANCE:
        logger.info(f"{what}: renormalized, pre-normalization deficit {deficit:.3e}")
    pmf = weights / total
    pmf.setflags(write=False)
    return pmf, deficit


def _trim(pmf: np.ndarray, offset: int = 0) -> Tuple[np.ndarray, int]:
    kept = np.nonzero(pmf > config.SPARSE_FLOOR)[0]
    if kept.size == 0:
        return pmf, offset
    return pmf[kept[0]: kept[-1] + 1], offset + int(kept[0])


@dataclass(frozen=True, eq=False)
class PhotonDist:
    """Probability mass over photon number n >= 0 (pmf[n])."""
    pmf: np.ndarray
    tail_mass: float = 0.0

    @classmethod
    def from_weights(cls, weights, expected_total: float = 1.0, what: str = "PhotonDist") -> "PhotonDist":
        pmf, deficit = _normalize(weights, what, expected_total)
        kept = np.nonzero(pmf > config.SPARSE_FLOOR)[0]
        return cls(pmf[: kept[-1] + 1], deficit)

    @classmethod
    def from_mapping(cls, probs: Mapping[int, float]) -> "PhotonDist":
        if any(n < 0 for n in probs):
            raise DomainError("photon numbers must be non-negative")
        weights = np.zeros(max(probs) + 1 if probs else 1)
        for n, p in probs.items():
            weights[n] += p
        return cls.from_weights(weights)

    @classmethod
    def point_mass(cls, n: int) -> "PhotonDist":
        weights = np.zeros(n + 1)
        weights[n] = 1.0
        return cls.from_weights(weights)

    def __getitem__(self, n: int) -> float:
        return float(self.pmf[n]) if 0 <= n < self.pmf.size else 0.0

    @property
    def numbers(self) -> np.ndarray:
        return np.arange(self.pmf.size)

    @property
    def mean(self) -> float:
        return float(self.numbers @ self.pmf)

    @property
    def variance(self) -> float:
        return float((self.numbers ** 2) @ self.pmf) - self.mean ** 2

    def factorial_moment(self, order: int) -> float:
        n = self.numbers.astype(float)
        falling = np.ones_like(n)
        for i in range(order):
            falling *= n - i
        return float(falling @ self.pmf)

    def items(self) -> Iterator[Tuple[int, float]]:
        for n in np.nonzero(self.pmf > config.SPARSE_FLOOR)[0]:
            yield int(n), float(self.pmf[n])

    def as_dict(self) -> Dict[int, float]:
        return dict(self.items())


@dataclass(frozen=True, eq=False)
class JointPhotonDist:
    """Probability mass over detector outcome pairs (m, n) as pmf[m, n]."""
    pmf: np.ndarray
    tail_mass: float = 0.0

    @classmethod
    def from_weights(cls, weights, expected_total: float = 1.0, what: str = "JointPhotonDist") -> "JointPhotonDist":
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 2:
            raise ShapeError(f"joint distribution needs a 2-D array, got shape {weights.shape}")
        pmf, deficit = _normalize(weights, what, expected_total)
        rows = np.nonzero(pmf.sum(axis=1) > config.SPARSE_FLOOR)[0]
        cols = np.nonzero(pmf.sum(axis=0) > config.SPARSE_FLOOR)[0]
        pmf = pmf[: rows[-1] + 1, : cols[-1] + 1]
        return cls(pmf, deficit)

    @classmethod
    def from_mapping(cls, probs: Mapping[Tuple[int, int], float]) -> "JointPhotonDist":
        if not probs:
            raise DomainError("JointPhotonDist needs at least one entry")
        if any(m < 0 or n < 0 for m, n in probs):
            raise DomainError("outcome counts must be non-negative")
        weights = np.zeros((max(m for m, _ in probs) + 1, max(n for _, n in probs) + 1))
        for (m, n), p in probs.items():
            weights[m, n] += p
        return cls.from_weights(weights)

    def __getitem__(self, outcome: Tuple[int, int]) -> float:
        m, n = outcome
        if 0 <= m < self.pmf.shape[0] and 0 <= n < self.pmf.shape[1]:
            return float(self.pmf[m, n])
        return 0.0

    def padded(self, shape: Tuple[int, int]) -> np.ndarray:
        out = np.zeros((max(shape[0], self.pmf.shape[0]), max(shape[1], self.pmf.shape[1])))
        out[: self.pmf.shape[0], : self.pmf.shape[1]] = self.pmf
        return out

    def marginals(self) -> Tuple[PhotonDist, PhotonDist]:
        return PhotonDist.from_weights(self.pmf.sum(axis=1)), PhotonDist.from_weights(self.pmf.sum(axis=0))

    def total_photons(self) -> PhotonDist:
        m, n = np.indices(self.pmf.shape)
        return PhotonDist.from_weights(np.bincount((m + n).ravel(), weights=self.pmf.ravel()))

    def items(self) -> Iterator[Tuple[Tuple[int, int], float]]:
        for m, n in zip(*np.nonzero(self.pmf > config.SPARSE_FLOOR)):
            yield (int(m), int(n)), float(self.pmf[m, n])

    def as_dict(self) -> Dict[Tuple[int, int], float]:
        return dict(self.items())


@dataclass(frozen=True, eq=False)
class DiffDist:
    """Probability mass over the signed difference dn; pmf[i] belongs to dn = offset + i."""
    pmf: np.ndarray
    offset: int = 0
    tail_mass: float = 0.0

    @classmethod
    def from_weights(cls, weights, offset: int, expected_total: float = 1.0, what: str = "DiffDist") -> "DiffDist":
        pmf, deficit = _normalize(weights, what, expected_total)
        pmf, offset = _trim(pmf, offset)
        return cls(pmf, offset, deficit)

    @classmethod
    def from_mapping(cls, probs: Mapping[int, float]) -> "DiffDist":
        if not probs:
            raise DomainError("DiffDist needs at least one entry")
        low, high = min(probs), max(probs)
        weights = np.zeros(high - low + 1)
        for dn, p in probs.items():
            weights[dn - low] += p
        return cls.from_weights(weights, low)

    def __getitem__(self, dn: int) -> float:
        i = dn - self.offset
        return float(self.pmf[i]) if 0 <= i < self.pmf.size else 0.0

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.pmf.size)

    @property
    def mean(self) -> float:
        return float(self.values @ self.pmf)

    @property
    def variance(self) -> float:
        centred = self.values - self.mean
        return float((centred ** 2) @ self.pmf)

    def on_range(self, low: int, high: int) -> np.ndarray:
        """Probabilities for dn = low..high inclusive, zero outside the support."""
        out = np.zeros(high - low + 1)
        start = max(low, self.offset)
        stop = min(high, self.offset + self.pmf.size - 1)
        if start <= stop:
            out[start - low: stop - low + 1] = self.pmf[start - self.offset: stop - self.offset + 1]
        return out

    def items(self) -> Iterator[Tuple[int, float]]:
        for i in np.nonzero(self.pmf > config.SPARSE_FLOOR)[0]:
            yield int(self.offset + i), float(self.pmf[i])

    def as_dict(self) -> Dict[int, float]:
        return dict(self.items())
