"""Exact photon-number statistics of weak-field homodyne detection.

A heralded signal and a coherent state meet on a balanced beam splitter and
both outputs are photon-number resolved. The model covers the ideal joint
statistics, detector loss, mode mismatch against the coherent state, and the
imperfect heralding that turns the signal into a mixture of number states.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict

import numpy as np
from scipy.signal import convolve
from scipy.stats import nbinom

import config
from errors import DomainError, KernelOverflowError
from numerics import (
    DEFAULT_TRUNCATION,
    DiffDist,
    JointPhotonDist,
    TruncationPolicy,
    binomial_pmf_matrix,
    interference_kernel,
    log_factorials,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceParams:
    lambda_mag: float
    eta_h: float = 1.0

    def __post_init__(self):
        if not 0 <= self.lambda_mag < 1:
            raise DomainError(f"|lambda| must lie in [0, 1), got {self.lambda_mag}")
        if not 0 < self.eta_h <= 1:
            raise DomainError(f"eta_h must lie in (0, 1], got {self.eta_h}")

    @property
    def q(self) -> float:
        """Ratio of the herald mixture weights, lambda^2 (1 - eta_h)."""
        return self.lambda_mag ** 2 * (1.0 - self.eta_h)


@dataclass(frozen=True)
class DetectorParams:
    eta_c: float = 1.0
    eta_d: float = 1.0
    mode_overlap: float = 1.0
    alpha_sq: float = 0.0

    def __post_init__(self):
        for name in ("eta_c", "eta_d"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise DomainError(f"{name} must lie in (0, 1], got {value}")
        if not 0 <= self.mode_overlap <= 1:
            raise DomainError(f"mode overlap must lie in [0, 1], got {self.mode_overlap}")
        if self.alpha_sq < 0:
            raise DomainError(f"alpha_sq must be >= 0, got {self.alpha_sq}")

    @property
    def eta_mean(self) -> float:
        return 0.5 * (self.eta_c + self.eta_d)

    def with_alpha_sq(self, alpha_sq: float) -> "DetectorParams":
        return DetectorParams(self.eta_c, self.eta_d, self.mode_overlap, alpha_sq)

    def with_mode_overlap(self, mode_overlap: float) -> "DetectorParams":
        return DetectorParams(self.eta_c, self.eta_d, mode_overlap, self.alpha_sq)


@dataclass(frozen=True)
class ExperimentParams:
    source: SourceParams
    detector: DetectorParams = field(default_factory=DetectorParams)
    trunc: TruncationPolicy = DEFAULT_TRUNCATION

    @classmethod
    def from_preset(cls, name: str, alpha_sq: float = 0.0, trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> "ExperimentParams":
        try:
            preset = config.PRESETS[name]
        except KeyError:
            raise DomainError(f"unknown preset '{name}', available: {', '.join(sorted(config.PRESETS))}")
        return cls(
            source=SourceParams(preset["lambda_mag"], preset["eta_h"]),
            detector=DetectorParams(preset["eta_c"], preset["eta_d"], preset["mode_overlap"], alpha_sq),
            trunc=trunc,
        )

    @classmethod
    def ideal(cls, alpha_sq: float = 0.0, lambda_mag: float = 0.5, trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> "ExperimentParams":
        """Lossless detection, perfect overlap and perfect heralding."""
        return cls(SourceParams(lambda_mag, 1.0), DetectorParams(alpha_sq=alpha_sq), trunc)

    def with_alpha_sq(self, alpha_sq: float) -> "ExperimentParams":
        return ExperimentParams(self.source, self.detector.with_alpha_sq(alpha_sq), self.trunc)

    def with_mode_overlap(self, mode_overlap: float) -> "ExperimentParams":
        return ExperimentParams(self.source, self.detector.with_mode_overlap(mode_overlap), self.trunc)


def joint_ideal(j: int, alpha_sq: float, trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> JointPhotonDist:
    """Lossless joint outcome distribution for |j> mixed with a coherent state."""
    if j < 0:
        raise DomainError(f"signal photon number must be >= 0, got {j}")
    if alpha_sq < 0:
        raise DomainError(f"alpha_sq must be >= 0, got {alpha_sq}")
    weights = _ideal_weights(j, float(alpha_sq), trunc)
    return JointPhotonDist.from_weights(weights, what=f"joint_ideal(j={j}, alpha_sq={alpha_sq:g})")


@lru_cache(maxsize=256)
def _ideal_weights(j: int, alpha_sq: float, trunc: TruncationPolicy) -> np.ndarray:
    # Total photon number t = m + n is j plus a Poisson(alpha_sq) count
    t_max = j + trunc.poisson_cutoff(alpha_sq)
    lf = log_factorials(t_max)
    weights = np.zeros((t_max + 1, t_max + 1))
    log_alpha_sq = math.log(alpha_sq) if alpha_sq > 0 else None
    for t in range(j, t_max + 1):
        if t > j and log_alpha_sq is None:
            break
        base = -alpha_sq + lf[j] - t * math.log(2.0)
        if t > j:
            base += (t - j) * log_alpha_sq
        for m in range(t + 1):
            n = t - m
            kernel = interference_kernel(j, m, n)
            if kernel == 0:
                continue
            weights[m, n] = math.exp(base - (lf[m] + lf[n]) + 2.0 * math.log(abs(kernel)))
    weights.setflags(write=False)
    return weights


def bernoulli_loss(joint: JointPhotonDist, eta_c: float, eta_d: float,
                   trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> JointPhotonDist:
    """Binomial thinning of each arm, pushed forward from every source outcome."""
    for name, eta in (("eta_c", eta_c), ("eta_d", eta_d)):
        if not 0 < eta <= 1:
            raise DomainError(f"{name} must lie in (0, 1], got {eta}")
    if eta_c == 1 and eta_d == 1:
        return joint
    return JointPhotonDist.from_weights(_thin(joint.pmf, eta_c, eta_d), what="bernoulli_loss")


def _thin(pmf: np.ndarray, eta_c: float, eta_d: float) -> np.ndarray:
    rows, cols = pmf.shape
    return binomial_pmf_matrix(rows, eta_c) @ pmf @ binomial_pmf_matrix(cols, eta_d).T


def _convolve_joint(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    if second.shape == (1, 1):
        return first * second[0, 0]
    return np.clip(convolve(first, second, mode="full"), 0.0, None)


@lru_cache(maxsize=512)
def _lossy_signal_joint(f: int, alpha_sq: float, eta_c: float, eta_d: float, trunc: TruncationPolicy) -> np.ndarray:
    weights = _ideal_weights(f, alpha_sq, trunc)
    thinned = _thin(weights, eta_c, eta_d)
    thinned.setflags(write=False)
    return thinned


def _orthogonal_factor(detector: DetectorParams, trunc: TruncationPolicy) -> np.ndarray:
    # Coherent light outside the signal mode: vacuum signal at (1 - M) |alpha|^2
    return _lossy_signal_joint(0, (1.0 - detector.mode_overlap) * detector.alpha_sq,
                               detector.eta_c, detector.eta_d, trunc)


def _mismatch_weights(f: int, detector: DetectorParams, trunc: TruncationPolicy) -> np.ndarray:
    parallel = _lossy_signal_joint(f, detector.mode_overlap * detector.alpha_sq,
                                   detector.eta_c, detector.eta_d, trunc)
    return _convolve_joint(parallel, _orthogonal_factor(detector, trunc))


def joint_with_mismatch(j: int, detector: DetectorParams,
                        trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> JointPhotonDist:
    """Lossy joint statistics when only a fraction of the coherent state overlaps the signal mode."""
    if j < 0:
        raise DomainError(f"signal photon number must be >= 0, got {j}")
    return JointPhotonDist.from_weights(_mismatch_weights(j, detector, trunc),
                                        what=f"joint_with_mismatch(j={j})")


def herald_mixture_weights(j: int, source: SourceParams,
                           trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> Dict[int, float]:
    """Normalized weights of the true pair number f >= j given herald outcome j.

    The weights C(f, j) eta_h^j (1 - eta_h)^(f - j) |lambda|^(2f) normalize in
    closed form to a negative binomial in f - j with ratio q.
    """
    if j < 0:
        raise DomainError(f"herald outcome must be >= 0, got {j}")
    q = source.q
    if q == 0:
        return {j: 1.0}
    extra = np.arange(trunc.negative_binomial_cutoff(j + 1, q) + 1)
    pmf = nbinom.pmf(extra, j + 1, 1.0 - q)
    kept_mass = float(pmf.sum())
    if 1.0 - kept_mass > 10 * trunc.tail_epsilon:
        logger.warning(f"herald mixture for j={j} truncated with tail {1.0 - kept_mass:.3e}")
    logger.debug(f"herald mixture j={j}: normalizer X={mixture_normalizer(j, source):.6e}, "
                 f"{extra.size} terms, tail {1.0 - kept_mass:.3e}")
    return {j + int(k): float(w) for k, w in zip(extra, pmf / kept_mass) if w > 0}


def mixture_normalizer(j: int, source: SourceParams) -> float:
    """X such that X * sum_f C(f,j) eta_h^j (1-eta_h)^(f-j) |lambda|^(2f) = 1."""
    q = source.q
    unnormalized = (source.eta_h * source.lambda_mag ** 2) ** j / (1.0 - q) ** (j + 1)
    return 1.0 / unnormalized if unnormalized > 0 else math.inf


def herald_probability(j: int, source: SourceParams) -> float:
    """Probability that the herald detector reports j photons."""
    lam_sq = source.lambda_mag ** 2
    q = source.q
    if lam_sq == 0:
        return 1.0 if j == 0 else 0.0
    return (1.0 - lam_sq) * (source.eta_h * lam_sq) ** j / (1.0 - q) ** (j + 1)


def _zeros_covering(arrays) -> np.ndarray:
    rows = max(a.shape[0] for a in arrays)
    cols = max(a.shape[1] for a in arrays)
    return np.zeros((rows, cols))


def heralded_joint(j: int, params: ExperimentParams) -> JointPhotonDist:
    """Joint outcome distribution for the signal heralded by j photons."""
    weights = herald_mixture_weights(j, params.source, params.trunc)
    detector = params.detector
    try:
        components = {f: _lossy_signal_joint(f, detector.mode_overlap * detector.alpha_sq,
                                             detector.eta_c, detector.eta_d, params.trunc)
                      for f in weights}
    except KernelOverflowError as e:
        raise KernelOverflowError(*e.triple, e.bits, herald=j) from e
    mixed = _zeros_covering(components.values())
    for f, component in components.items():
        mixed[: component.shape[0], : component.shape[1]] += weights[f] * component
    # Convolution is linear, so the orthogonal-mode factor is applied once to the mixture
    mixed = _convolve_joint(mixed, _orthogonal_factor(detector, params.trunc))
    return JointPhotonDist.from_weights(mixed, what=f"heralded_joint(j={j})")


def diff_dist(joint: JointPhotonDist) -> DiffDist:
    """Distribution of dn = m - n."""
    rows, cols = joint.pmf.shape
    m, n = np.indices((rows, cols))
    weights = np.bincount((m - n + cols - 1).ravel(), weights=joint.pmf.ravel())
    return DiffDist.from_weights(weights, offset=-(cols - 1), what="diff_dist")


def interference_visibility(detector: DetectorParams, trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> float:
    """Visibility of the coincidence dip P(1,1) for a single-photon signal.

    Compares the model with the chosen overlap against the non-interfering
    case; with M = 1 and no loss the dip is complete.
    """
    interfering = joint_with_mismatch(1, detector, trunc)[1, 1]
    distinguishable = joint_with_mismatch(1, detector.with_mode_overlap(0.0), trunc)[1, 1]
    if distinguishable == 0:
        raise DomainError("no (1, 1) coincidences without interference; need alpha_sq > 0")
    return 1.0 - interfering / distinguishable
