"""Estimation of the model parameters from calibration counts.

Efficiencies come from a Klyshko measurement on a weakly pumped pair source,
the squeezing parameter from the mean herald photon number, and the coherent
state strength from counts with the pair source blocked. Uncertainties follow
from treating every count as Poisson distributed.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from errors import DomainError, InsufficientDataError

logger = logging.getLogger(__name__)

DETECTION_RULE = "any outcome >= 1 photon counts as a detection"


@dataclass(frozen=True)
class CoincidenceCounts:
    herald_singles: int
    signal_singles_c: int
    signal_singles_d: int
    coincidences_hc: int
    coincidences_hd: int
    trials: int

    def __post_init__(self):
        values = (self.herald_singles, self.signal_singles_c, self.signal_singles_d,
                  self.coincidences_hc, self.coincidences_hd, self.trials)
        if any(v < 0 for v in values):
            raise DomainError("counts must be non-negative")
        if self.coincidences_hc > min(self.herald_singles, self.signal_singles_c):
            raise DomainError("herald-c coincidences exceed the corresponding singles")
        if self.coincidences_hd > min(self.herald_singles, self.signal_singles_d):
            raise DomainError("herald-d coincidences exceed the corresponding singles")
        if max(self.herald_singles, self.signal_singles_c, self.signal_singles_d) > self.trials:
            raise DomainError("singles exceed the number of trials")

    def scaled(self, factor: int) -> "CoincidenceCounts":
        return CoincidenceCounts(*(factor * v for v in (
            self.herald_singles, self.signal_singles_c, self.signal_singles_d,
            self.coincidences_hc, self.coincidences_hd, self.trials)))


@dataclass(frozen=True)
class KlyshkoEstimate:
    eta_h: float
    eta_c: float
    eta_d: float
    eta_h_stderr: float
    eta_c_stderr: float
    eta_d_stderr: float
    eta_s: float
    ratio: float
    flags: Tuple[str, ...] = field(default_factory=tuple)

    def __iter__(self) -> Iterator[float]:
        return iter((self.eta_h, self.eta_c, self.eta_d))


def efficiencies_from_ratio(eta_s: float, ratio: float) -> Tuple[float, float]:
    """(eta_c, eta_d) from the mean signal efficiency and R = eta_c / eta_d."""
    eta_d = 2.0 * eta_s / (1.0 + ratio)
    return ratio * eta_d, eta_d


def _flag_unphysical(estimates: Dict[str, float]) -> Tuple[str, ...]:
    flags = []
    for name, value in estimates.items():
        if value > 1.0:
            logger.warning(f"Klyshko estimate {name}={value:.4f} exceeds 1; reported unclamped")
            flags.append(f"{name}_above_one")
    return tuple(flags)


def klyshko_efficiencies(counts: CoincidenceCounts) -> KlyshkoEstimate:
    signal_singles = counts.signal_singles_c + counts.signal_singles_d
    coincidences = counts.coincidences_hc + counts.coincidences_hd
    if counts.herald_singles == 0:
        raise InsufficientDataError("no herald detections")
    if signal_singles == 0:
        raise InsufficientDataError("no signal detections")
    if counts.signal_singles_d == 0:
        raise InsufficientDataError("no detections in arm d, R = eta_c / eta_d undefined")
    if coincidences == 0:
        raise InsufficientDataError("no herald-signal coincidences")

    eta_h = coincidences / signal_singles
    eta_s = coincidences / counts.herald_singles
    ratio = counts.signal_singles_c / counts.signal_singles_d
    eta_c, eta_d = efficiencies_from_ratio(eta_s, ratio)

    var_eta_h = eta_h ** 2 * (1.0 / coincidences + 1.0 / signal_singles)
    var_eta_s = eta_s ** 2 * (1.0 / coincidences + 1.0 / counts.herald_singles)
    var_ratio = ratio ** 2 * ((1.0 / counts.signal_singles_c if counts.signal_singles_c else 0.0)
                              + 1.0 / counts.signal_singles_d)
    d_eta_d = (2.0 / (1.0 + ratio), -2.0 * eta_s / (1.0 + ratio) ** 2)
    d_eta_c = (2.0 * ratio / (1.0 + ratio), 2.0 * eta_s / (1.0 + ratio) ** 2)
    eta_d_stderr = math.sqrt(d_eta_d[0] ** 2 * var_eta_s + d_eta_d[1] ** 2 * var_ratio)
    eta_c_stderr = math.sqrt(d_eta_c[0] ** 2 * var_eta_s + d_eta_c[1] ** 2 * var_ratio)

    flags = _flag_unphysical({"eta_h": eta_h, "eta_c": eta_c, "eta_d": eta_d})
    logger.info(f"Klyshko: eta_h={eta_h:.4f}, eta_s={eta_s:.4f}, R={ratio:.4f}, "
                f"eta_c={eta_c:.4f}, eta_d={eta_d:.4f}")
    return KlyshkoEstimate(eta_h, eta_c, eta_d, math.sqrt(var_eta_h), eta_c_stderr, eta_d_stderr,
                           eta_s, ratio, flags)


def lambda_from_mean(mean_herald_photons: float, eta_h: float) -> float:
    """|lambda| = tanh(arcsinh(sqrt(<n_h> / eta_h)))."""
    if mean_herald_photons < 0:
        raise DomainError(f"mean photon number must be >= 0, got {mean_herald_photons}")
    if eta_h <= 0:
        raise DomainError(f"eta_h must be > 0, got {eta_h}")
    return math.tanh(math.asinh(math.sqrt(mean_herald_photons / eta_h)))


def lambda_stderr(mean_herald_photons: float, eta_h: float,
                  mean_stderr: float, eta_h_stderr: float = 0.0) -> float:
    # d lambda / d u = sech^2(asinh u) / sqrt(1 + u^2) = (1 + u^2)^(-3/2), u = sqrt(n / eta)
    ratio = mean_herald_photons / eta_h
    if ratio == 0:
        return 0.0
    u = math.sqrt(ratio)
    slope = (1.0 + ratio) ** -1.5
    du = 0.5 * u * math.hypot(mean_stderr / mean_herald_photons, eta_h_stderr / eta_h)
    return slope * du


def mean_herald_photons_from_lambda(lambda_mag: float, eta_h: float) -> float:
    return math.sinh(math.atanh(lambda_mag)) ** 2 * eta_h


def alpha_from_counts(mean_c: float, mean_d: float, eta_c: float, eta_d: float) -> float:
    """|alpha| = sqrt(<n_c> / eta_c + <n_d> / eta_d) with the pair source blocked."""
    if eta_c <= 0 or eta_d <= 0:
        raise DomainError("efficiencies must be > 0")
    if mean_c < 0 or mean_d < 0:
        raise DomainError("mean photon numbers must be >= 0")
    return math.sqrt(mean_c / eta_c + mean_d / eta_d)


def alpha_sq_stderr(mean_c: float, mean_d: float, eta_c: float, eta_d: float,
                    mean_c_stderr: float = 0.0, mean_d_stderr: float = 0.0,
                    eta_c_stderr: float = 0.0, eta_d_stderr: float = 0.0) -> float:
    # eta_c and eta_d share the Klyshko eta_s estimate; their covariance is not tracked
    return math.sqrt((mean_c_stderr / eta_c) ** 2 + (mean_d_stderr / eta_d) ** 2
                     + (mean_c * eta_c_stderr / eta_c ** 2) ** 2 + (mean_d * eta_d_stderr / eta_d ** 2) ** 2)


@dataclass
class CalibrationRecord:
    values: Dict[str, float]
    stderr: Dict[str, float]
    flags: List[str]
    metadata: Dict[str, str]

    def to_json_dict(self) -> Dict:
        return {
            "parameters": self.values,
            "stderr": self.stderr,
            "flags": self.flags,
            "metadata": self.metadata,
        }


def calibrate(counts: CoincidenceCounts,
              mean_herald_photons: Optional[float] = None,
              mean_herald_photons_stderr: float = 0.0,
              coherent_means: Optional[Tuple[float, float]] = None,
              coherent_means_stderr: Tuple[float, float] = (0.0, 0.0),
              mode_overlap: Optional[float] = None) -> CalibrationRecord:
    """Parameter record with uncertainties and flags from a count summary."""
    klyshko = klyshko_efficiencies(counts)
    values = {"eta_h": klyshko.eta_h, "eta_c": klyshko.eta_c, "eta_d": klyshko.eta_d}
    stderr = {"eta_h": klyshko.eta_h_stderr, "eta_c": klyshko.eta_c_stderr, "eta_d": klyshko.eta_d_stderr}
    flags = list(klyshko.flags)

    if mean_herald_photons is not None:
        values["lambda_mag"] = lambda_from_mean(mean_herald_photons, klyshko.eta_h)
        stderr["lambda_mag"] = lambda_stderr(mean_herald_photons, klyshko.eta_h,
                                             mean_herald_photons_stderr, klyshko.eta_h_stderr)
    if coherent_means is not None:
        alpha = alpha_from_counts(coherent_means[0], coherent_means[1], klyshko.eta_c, klyshko.eta_d)
        values["alpha_sq"] = alpha ** 2
        stderr["alpha_sq"] = alpha_sq_stderr(coherent_means[0], coherent_means[1], klyshko.eta_c, klyshko.eta_d,
                                             coherent_means_stderr[0], coherent_means_stderr[1],
                                             klyshko.eta_c_stderr, klyshko.eta_d_stderr)
    if mode_overlap is not None:
        values["mode_overlap"] = mode_overlap

    return CalibrationRecord(
        values=values,
        stderr=stderr,
        flags=flags,
        metadata={
            "detection_rule": DETECTION_RULE,
            "uncertainty_model": "poisson",
            "eta_s": f"{klyshko.eta_s:.6g}",
            "ratio_c_over_d": f"{klyshko.ratio:.6g}",
        },
    )
