"""Representations of the heralded signal and of herald-mode states engineered by the detector.

Phase-space convention: vacuum quadrature variance 1, so the quadrature
density of |k> at x equals the classical difference density at dn = |alpha| x
multiplied by |alpha|.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import poisson

from errors import DomainError, UnreachableOutcomeError
from numerics import (
    DEFAULT_TRUNCATION,
    PhotonDist,
    TruncationPolicy,
    binomial_pmf_matrix,
    hermite_functions,
    laguerre,
)
from quantum_model import (
    ExperimentParams,
    SourceParams,
    herald_mixture_weights,
    joint_with_mismatch,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhaseSpacePoint:
    x: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.p)):
            raise DomainError(f"phase-space point must be finite, got ({self.x}, {self.p})")


def heralded_signal_dist(j: int, source: SourceParams, trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> PhotonDist:
    """Photon-number distribution of the signal heralded by j photons."""
    weights = herald_mixture_weights(j, source, trunc)
    pmf = np.zeros(max(weights) + 1)
    for f, w in weights.items():
        pmf[f] = w
    return PhotonDist.from_weights(pmf, what=f"heralded_signal_dist(j={j})")


def signal_mean_photons(j: int, source: SourceParams) -> float:
    q = source.q
    return (j + q) / (1.0 - q)


def poisson_dist(mean: float, trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> PhotonDist:
    n = np.arange(trunc.poisson_cutoff(mean) + 1)
    return PhotonDist.from_weights(poisson.pmf(n, mean), what=f"Poisson({mean:g})")


def apply_loss(dist: PhotonDist, eta: float) -> PhotonDist:
    """Single-mode Bernoulli loss."""
    if not 0 < eta <= 1:
        raise DomainError(f"efficiency must lie in (0, 1], got {eta}")
    return PhotonDist.from_weights(binomial_pmf_matrix(dist.pmf.size, eta) @ dist.pmf, what="apply_loss")


def g2_of_dist(dist: PhotonDist) -> float:
    mean = dist.mean
    if mean <= 0:
        raise DomainError("g2 undefined for a zero-mean distribution")
    return dist.factorial_moment(2) / mean ** 2


def fano_of_dist(dist: PhotonDist) -> float:
    mean = dist.mean
    if mean <= 0:
        raise DomainError("Fano factor undefined for a zero-mean distribution")
    return dist.variance / mean


def wigner(dist: PhotonDist, pt: PhaseSpacePoint) -> float:
    return float(wigner_grid(dist, np.array([pt.x]), np.array([pt.p]))[0, 0])


def wigner_grid(dist: PhotonDist, xs: np.ndarray, ps: np.ndarray) -> np.ndarray:
    """W on the grid xs x ps, indexed [i_x, i_p]."""
    r_sq = np.asarray(xs, dtype=float)[:, None] ** 2 + np.asarray(ps, dtype=float)[None, :] ** 2
    envelope = np.exp(-r_sq / 2.0) / (2.0 * np.pi)
    total = np.zeros_like(r_sq)
    for k, weight in dist.items():
        total += weight * (-1) ** k * laguerre(k, r_sq)
    return total * envelope


def quadrature_dist(dist: PhotonDist, x: float) -> float:
    return float(quadrature_grid(dist, np.array([x]))[0])


def quadrature_grid(dist: PhotonDist, xs: np.ndarray) -> np.ndarray:
    psi = hermite_functions(dist.pmf.size - 1, np.asarray(xs, dtype=float))
    return dist.pmf @ (psi * psi)


def herald_outcome_joint_probability(j: int, m: int, n: int, params: ExperimentParams) -> float:
    """Probability of herald j together with detector outcome (m, n)."""
    column = _herald_column(m, n, params)
    return float(column[j]) if j < column.size else 0.0


@lru_cache(maxsize=64)
def _herald_column(m: int, n: int, params: ExperimentParams) -> np.ndarray:
    # Sum over the pair number f of the two-mode squeezed vacuum, each pair number
    # split into herald j by binomial loss and detected as (m, n)
    source, detector, trunc = params.source, params.detector, params.trunc
    lam_sq = source.lambda_mag ** 2
    f_max = trunc.geometric_cutoff(lam_sq)
    pair = (1.0 - lam_sq) * lam_sq ** np.arange(f_max + 1)
    herald = binomial_pmf_matrix(f_max + 1, source.eta_h)
    detected = np.zeros(f_max + 1)
    for f in range(f_max + 1):
        detected[f] = joint_with_mismatch(f, detector, trunc)[m, n]
    return herald @ (pair * detected)


def engineered_herald_dist(m: int, n: int, params: ExperimentParams, interfering: bool = True) -> PhotonDist:
    """Photon-number distribution of the herald mode conditioned on the outcome (m, n).

    Without interference the coherent state has no overlap with the signal
    mode (M = 0), which stands in for removing the temporal overlap.
    """
    if m < 0 or n < 0:
        raise DomainError(f"outcome must be non-negative, got {(m, n)}")
    if not interfering:
        params = params.with_mode_overlap(0.0)
    column = _herald_column(m, n, params)
    total = float(column.sum())
    if not total > 1e-300:
        raise UnreachableOutcomeError(f"outcome (m={m}, n={n}) has vanishing probability {total:.3e}")
    logger.info(f"engineered herald distribution for (m={m}, n={n}): outcome probability {total:.4e}")
    return PhotonDist.from_weights(column, expected_total=total, what=f"engineered_herald_dist({m}, {n})")

