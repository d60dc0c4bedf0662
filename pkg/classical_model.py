"""Difference statistics under the classical-field approximation of the coherent state.

The ideal density is the number-state quadrature distribution scaled by |alpha|.
Detector loss shrinks the amplitude to eta |alpha| and adds Gaussian blur;
unequal arm efficiencies offset the distribution. All densities are sampled
on the integer dn grid and renormalized there.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.stats import norm

import config
from errors import DomainError
from numerics import (
    DEFAULT_TRUNCATION,
    DiffDist,
    TruncationPolicy,
    hermite,
    hermite_functions,
    log_factorial,
)
from quantum_model import ExperimentParams, herald_mixture_weights

logger = logging.getLogger(__name__)

_UNDEFINED_AT_ZERO = "classical model undefined at alpha=0"


@dataclass(frozen=True)
class ClassicalChannel:
    g: float
    sigma: float
    shift: float
    eta_mean: float

    def __post_init__(self):
        if self.g < 0 or self.sigma < 0:
            raise DomainError(f"channel needs g >= 0 and sigma >= 0, got g={self.g}, sigma={self.sigma}")
        if not 0 < self.eta_mean <= 1:
            raise DomainError(f"mean efficiency must lie in (0, 1], got {self.eta_mean}")

    @classmethod
    def from_efficiencies(cls, alpha_sq: float, eta_c: float = 1.0, eta_d: float = 1.0) -> "ClassicalChannel":
        if alpha_sq <= 0:
            raise DomainError(_UNDEFINED_AT_ZERO)
        eta = 0.5 * (eta_c + eta_d)
        g = eta * math.sqrt(alpha_sq)
        return cls(
            g=g,
            sigma=math.sqrt(g * g * (1.0 - eta) / eta),
            shift=alpha_sq * (eta_d - eta_c) / 2.0,
            eta_mean=eta,
        )


def classical_ideal(j: int, alpha_sq: float, dn: float) -> float:
    """Scaled number-state quadrature density at dn, evaluated in log form."""
    if j < 0:
        raise DomainError(f"photon number must be >= 0, got {j}")
    if alpha_sq <= 0:
        raise DomainError(_UNDEFINED_AT_ZERO)
    alpha = math.sqrt(alpha_sq)
    h = hermite(j, dn / (math.sqrt(2.0) * alpha))
    if h == 0:
        return 0.0
    log_density = (
        -0.5 * math.log(2.0 * math.pi) - math.log(alpha) - j * math.log(2.0) - log_factorial(j)
        + 2.0 * math.log(abs(h)) - dn * dn / (2.0 * alpha_sq)
    )
    return math.exp(log_density)


def _sampled_mixture(weights: Dict[int, float], g: float, sigma: float, shift: float,
                     trunc: TruncationPolicy, what: str) -> DiffDist:
    """Mixture of scaled number-state densities blurred by N(0, sigma), on integer dn.

    The density is evaluated at dn + shift so that dn = m - n keeps arm c first.
    """
    if g <= 0:
        raise DomainError(_UNDEFINED_AT_ZERO)
    f_max = max(weights)
    if f_max > trunc.hard_cap:
        raise DomainError(f"{what}: photon number {f_max} beyond hard cap {trunc.hard_cap}")
    coefficients = np.zeros(f_max + 1)
    for f, w in weights.items():
        coefficients[f] = w
    mean_photons = float(np.arange(f_max + 1) @ coefficients)
    spread = math.sqrt(g * g * (2.0 * mean_photons + 1.0) + sigma * sigma)
    centre = -shift
    half_width = config.CLASSICAL_WINDOW_SIGMAS * spread
    low = int(math.floor(centre - half_width))
    high = int(math.ceil(centre + half_width))
    dn = np.arange(low, high + 1, dtype=float)

    def ideal_density(x: np.ndarray) -> np.ndarray:
        psi = hermite_functions(f_max, x / g)
        return coefficients @ (psi * psi) / g

    # offset enters as dn + shift, the opposite sign to the usual dn - alpha^2 (eta_d - eta_c) / 2,
    # since dn = m - n counts arm c first (see test_imbalance_moves_mean_with_quantum_sign_convention)
    if sigma == 0:
        weights_on_grid = ideal_density(dn + shift)
    else:
        # Real grid wide enough for the outermost number state; finer than g/4 so
        # the fringes of high number states are resolved
        step = min(config.CLASSICAL_GRID_STEP, g / 4.0)
        reach = g * (math.sqrt(4.0 * f_max + 2.0) + 12.0)
        points = int(math.ceil(reach / step))
        x = step * np.arange(-points, points + 1)
        blur = norm.pdf((dn[:, None] + shift - x[None, :]) / sigma) / sigma
        weights_on_grid = step * (blur @ ideal_density(x))
    return DiffDist.from_weights(weights_on_grid, offset=low, what=what)


def classical_lossy(j: int, alpha_sq: float, channel: Optional[ClassicalChannel] = None,
                    trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> DiffDist:
    if channel is None:
        channel = ClassicalChannel.from_efficiencies(alpha_sq)
    if alpha_sq <= 0:
        raise DomainError(_UNDEFINED_AT_ZERO)
    return _sampled_mixture({j: 1.0}, channel.g, channel.sigma, channel.shift, trunc,
                            what=f"classical_lossy(j={j}, alpha_sq={alpha_sq:g})")


def classical_full(j: int, params: ExperimentParams) -> DiffDist:
    """Classical-field counterpart of the heralded difference statistics.

    The orthogonal-mode factor is the vacuum case of the lossy density, a
    Gaussian of variance eta (1 - M) |alpha|^2, so it folds into the blur.
    """
    detector = params.detector
    if detector.alpha_sq <= 0:
        raise DomainError(_UNDEFINED_AT_ZERO)
    if detector.mode_overlap <= 0:
        raise DomainError("classical model undefined without mode overlap (no coherent amplitude in the signal mode)")
    parallel = ClassicalChannel.from_efficiencies(detector.mode_overlap * detector.alpha_sq,
                                                  detector.eta_c, detector.eta_d)
    orthogonal_variance = parallel.eta_mean * (1.0 - detector.mode_overlap) * detector.alpha_sq
    sigma = math.sqrt(parallel.sigma ** 2 + orthogonal_variance)
    shift = detector.alpha_sq * (detector.eta_d - detector.eta_c) / 2.0
    weights = herald_mixture_weights(j, params.source, params.trunc)
    return _sampled_mixture(weights, parallel.g, sigma, shift, params.trunc,
                            what=f"classical_full(j={j}, alpha_sq={detector.alpha_sq:g})")
