"""Submultinomial and sub-Poissonian tests on heralded event tallies.

A tally counts events E(j, k, l): j photons at the herald detector, k at
detector c and l at detector d. Both tests work per herald outcome j.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import config
from errors import DomainError, InsufficientDataError
from numerics import PhotonDist, min_eigenvalue_symmetric
from quantum_model import ExperimentParams, herald_probability, heralded_joint
from states import g2_of_dist
from workers import parallel_map

logger = logging.getLogger(__name__)

Outcome = Tuple[int, int, int]


class SignConvention(str, Enum):
    # SUBTRACT puts the multinomial null at mu_min = 0; ADD is the printed two-term sum
    SUBTRACT = "subtract"
    ADD = "add"


@dataclass(frozen=True, eq=False)
class EventTally:
    counts: Mapping[Outcome, float]
    max_outcome: int = config.MAX_OUTCOME

    def __post_init__(self):
        if self.max_outcome < 0:
            raise DomainError(f"max_outcome must be >= 0, got {self.max_outcome}")
        for outcome, count in self.counts.items():
            if len(outcome) != 3 or min(outcome) < 0:
                raise DomainError(f"outcome must be a non-negative (j, k, l) triple, got {outcome}")
            if max(outcome) > self.max_outcome:
                raise DomainError(f"outcome {outcome} exceeds max_outcome={self.max_outcome}")
            if count < 0 or not math.isfinite(count):
                raise DomainError(f"count for {outcome} must be finite and >= 0, got {count}")

    @classmethod
    def from_array(cls, array: np.ndarray) -> "EventTally":
        """Tally from a cube indexed [j, k, l]."""
        array = np.asarray(array)
        if array.ndim != 3 or len(set(array.shape)) != 1:
            raise DomainError(f"expected a cubic [j, k, l] array, got shape {array.shape}")
        counts = {tuple(int(i) for i in idx): array[idx].item() for idx in zip(*np.nonzero(array))}
        return cls(counts, array.shape[0] - 1)

    @property
    def is_integral(self) -> bool:
        return all(float(c).is_integer() for c in self.counts.values())

    def herald_outcomes(self) -> List[int]:
        return sorted({j for (j, _, _), count in self.counts.items() if count > 0})

    def events(self, j: int) -> float:
        return sum(count for (h, _, _), count in self.counts.items() if h == j)

    def slice(self, j: int) -> np.ndarray:
        """E(k, l) for herald outcome j."""
        size = self.max_outcome + 1
        table = np.zeros((size, size))
        for (h, k, l), count in self.counts.items():
            if h == j:
                table[k, l] += count
        return table

    def scaled(self, factor: float) -> "EventTally":
        if factor <= 0:
            raise DomainError(f"scale factor must be > 0, got {factor}")
        return EventTally({outcome: factor * count for outcome, count in self.counts.items()}, self.max_outcome)


def _correlation_from_table(table: np.ndarray, sign_convention: SignConvention) -> np.ndarray:
    total = float(table.sum())
    coincidences = (2.0 / total) * (table + table.T)
    marginal = table.sum(axis=1) + table.sum(axis=0)
    product = np.outer(marginal, marginal) / total ** 2
    if sign_convention is SignConvention.SUBTRACT:
        return coincidences - product
    return coincidences + product


def correlation_matrix(tally: EventTally, j: int,
                       sign_convention: SignConvention = SignConvention.SUBTRACT) -> np.ndarray:
    table = tally.slice(j)
    if not table.sum() > 0:
        raise InsufficientDataError(f"no events with herald outcome j={j}")
    matrix = _correlation_from_table(table, SignConvention(sign_convention))
    matrix.setflags(write=False)
    return matrix


def submultinomial_witness(tally: EventTally, j: int,
                           sign_convention: SignConvention = SignConvention.SUBTRACT) -> float:
    """Minimum eigenvalue of the correlation matrix; negative witnesses nonclassicality."""
    return min_eigenvalue_symmetric(correlation_matrix(tally, j, sign_convention))


def combined_stats(tally: EventTally, j: int) -> PhotonDist:
    """Photon-number distribution of the signal, P(n) = sum_{k+l=n} E(k, l) / E_tot."""
    table = tally.slice(j)
    total = table.sum()
    if not total > 0:
        raise InsufficientDataError(f"no events with herald outcome j={j}")
    k, l = np.indices(table.shape)
    totals = (k + l).ravel()
    if tally.is_integral:
        # Exact rational arithmetic on integer counts before converting to float
        exact_total = int(round(total))
        sums: Dict[int, int] = {}
        for n, count in zip(totals, table.ravel()):
            if count:
                sums[int(n)] = sums.get(int(n), 0) + int(round(count))
        weights = np.zeros(2 * tally.max_outcome + 1)
        for n, count in sums.items():
            weights[n] = float(Fraction(count, exact_total))
    else:
        weights = np.bincount(totals, weights=table.ravel(), minlength=2 * tally.max_outcome + 1) / total
    return PhotonDist.from_weights(weights, what=f"combined_stats(j={j})")


def sub_poissonian_witness(tally: EventTally, j: int) -> float:
    """g2 of the combined statistics; below 1 witnesses sub-Poissonian light."""
    return g2_of_dist(combined_stats(tally, j))


def _outcome_probabilities(params: ExperimentParams, max_outcome: int) -> np.ndarray:
    size = max_outcome + 1
    cube = np.zeros((size, size, size))
    for j in range(size):
        weight = herald_probability(j, params.source)
        if weight == 0:
            continue
        joint = heralded_joint(j, params).pmf[:size, :size]
        cube[j, : joint.shape[0], : joint.shape[1]] = weight * joint
    return cube


def model_tally(params: ExperimentParams, events: float = 1e6,
                max_outcome: int = config.MAX_OUTCOME) -> EventTally:
    """Expectation-valued tally: events times the model probability of each (j, k, l).

    Outcomes beyond max_outcome on any detector are dropped, as with a
    measured tally restricted to that range.
    """
    cube = _outcome_probabilities(params, max_outcome)
    logger.info(f"model tally: {1.0 - cube.sum():.3e} of the probability lies outside [0, {max_outcome}]")
    return EventTally.from_array(events * cube)


def sample_tally(params: ExperimentParams, events: int, seed: int = config.DEFAULT_SEED,
                 max_outcome: int = config.MAX_OUTCOME) -> EventTally:
    """Tally drawn from the model by multinomial sampling of `events` trials."""
    if events < 1:
        raise DomainError(f"need at least one trial, got {events}")
    cube = _outcome_probabilities(params, max_outcome)
    outside = max(0.0, 1.0 - float(cube.sum()))
    probs = np.append(cube.ravel(), outside)
    draws = np.random.default_rng(seed).multinomial(events, probs / probs.sum())
    kept = draws[:-1].reshape(cube.shape)
    logger.info(f"sampled {events} trials, {int(draws[-1])} fell outside [0, {max_outcome}]")
    return EventTally.from_array(kept)


def bootstrap_witnesses(tally: EventTally, j: int, resamples: int = config.BOOTSTRAP_RESAMPLES,
                        seed: int = config.DEFAULT_SEED,
                        sign_convention: SignConvention = SignConvention.SUBTRACT) -> Tuple[float, float]:
    """Standard deviations of (mu_min, g2) over multinomial resamples of the j slice."""
    table = tally.slice(j)
    total = int(round(table.sum()))
    if total < 1:
        raise InsufficientDataError(f"no events with herald outcome j={j}")
    if resamples < 2:
        raise DomainError(f"need at least two resamples, got {resamples}")
    rng = np.random.default_rng([seed, j])
    probs = table.ravel() / table.sum()
    mus, g2s = [], []
    for _ in range(resamples):
        resampled = rng.multinomial(total, probs).reshape(table.shape)
        mus.append(min_eigenvalue_symmetric(_correlation_from_table(resampled, sign_convention)))
        k, l = np.indices(table.shape)
        combined = np.bincount((k + l).ravel(), weights=resampled.ravel())
        n = np.arange(combined.size)
        mean = float(n @ combined) / total
        if mean > 0:
            g2s.append(float((n * (n - 1)) @ combined) / total / mean ** 2)
    g2_std = float(np.std(g2s, ddof=1)) if len(g2s) > 1 else math.nan
    return float(np.std(mus, ddof=1)), g2_std


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class WitnessSummary:
    j: int
    events: float
    mu_min: float
    mu_min_added: float
    mu_min_stderr: float
    g2: float
    g2_stderr: float
    mean_photons: float

    @property
    def submultinomial(self) -> bool:
        return self.mu_min < 0

    @property
    def sub_poissonian(self) -> bool:
        return self.g2 < 1

    def to_json_dict(self) -> Dict:
        return {
            "j": self.j,
            "events": self.events,
            "mu_min": self.mu_min,
            "mu_min_stderr": _finite_or_none(self.mu_min_stderr),
            "mu_min_added_convention": self.mu_min_added,
            "g2": _finite_or_none(self.g2),
            "g2_stderr": _finite_or_none(self.g2_stderr),
            "mean_photons": self.mean_photons,
            "submultinomial": self.submultinomial,
            "sub_poissonian": self.sub_poissonian,
        }


def _summarize(task: Tuple[EventTally, int, int, int]) -> WitnessSummary:
    tally, j, resamples, seed = task
    combined = combined_stats(tally, j)
    mu_min = submultinomial_witness(tally, j, SignConvention.SUBTRACT)
    mu_added = submultinomial_witness(tally, j, SignConvention.ADD)
    if tally.is_integral and resamples >= 2:
        mu_std, g2_std = bootstrap_witnesses(tally, j, resamples, seed)
    else:
        mu_std = g2_std = math.nan
    if combined.mean > 0:
        g2 = g2_of_dist(combined)
    else:
        logger.warning(f"j={j}: no photons detected, g2 undefined")
        g2 = math.nan
    logger.debug(f"j={j}: mu_min={mu_min:.4e} (added convention {mu_added:.4e})")
    return WitnessSummary(j, tally.events(j), mu_min, mu_added, mu_std, g2, g2_std, combined.mean)


def analyze_tally(tally: EventTally, herald_outcomes: Optional[Sequence[int]] = None,
                  resamples: int = config.BOOTSTRAP_RESAMPLES, seed: int = config.DEFAULT_SEED,
                  jobs: Optional[int] = None) -> List[WitnessSummary]:
    """Both witnesses for every herald outcome, with bootstrap uncertainties.

    Expectation-valued (non-integer) tallies have no sampling noise, so their
    uncertainties are reported as NaN.
    """
    outcomes = list(herald_outcomes) if herald_outcomes is not None else tally.herald_outcomes()
    if not outcomes:
        raise InsufficientDataError("tally has no events")
    summaries = parallel_map(_summarize, [(tally, j, resamples, seed) for j in outcomes],
                             jobs=jobs, desc="nonclassicality")
    for s in summaries:
        logger.info(f"j={s.j}: mu_min={s.mu_min:.4e} +/- {s.mu_min_stderr:.2e}, "
                    f"g2={s.g2:.4f} +/- {s.g2_stderr:.2e}")
    return summaries
