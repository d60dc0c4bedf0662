"""Quantifying the transition from photon-number to quadrature statistics.

The residual metric compares observed (or fully modeled) difference statistics
against the classical-field model. Its decay with |alpha|^2 is fitted by an
exponential, and the |alpha|^2 at which it drops below a threshold scales
linearly with the mean photon number of the signal.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import linregress

import config
from classical_model import classical_full
from errors import DomainError, FitError, InsufficientDataError
from nonclassicality import EventTally
from numerics import DiffDist
from quantum_model import ExperimentParams, diff_dist, heralded_joint
from states import signal_mean_photons
from workers import parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransitionPoint:
    alpha_sq: float
    s_classical: float
    nu: int

    def __post_init__(self):
        if not self.alpha_sq > 0:
            raise DomainError(f"alpha_sq must be > 0, got {self.alpha_sq}")
        if self.s_classical < 0:
            raise DomainError(f"residual metric must be >= 0, got {self.s_classical}")
        if self.nu < 1:
            raise DomainError(f"nu must be >= 1, got {self.nu}")


@dataclass(frozen=True)
class ExpFit:
    a: float
    b: float
    threshold: float
    alpha_sq_min: float
    alpha_sq_min_stderr: float = 0.0
    a_stderr: float = 0.0
    b_stderr: float = 0.0
    points_used: int = 0
    method: str = "log-linear"

    def predict(self, alpha_sq: float) -> float:
        return self.a * math.exp(-self.b * alpha_sq)

    def to_json_dict(self) -> Dict:
        return {
            "a": self.a,
            "a_stderr": self.a_stderr,
            "b": self.b,
            "b_stderr": self.b_stderr,
            "threshold": self.threshold,
            "alpha_sq_min": self.alpha_sq_min,
            "alpha_sq_min_stderr": self.alpha_sq_min_stderr,
            "points_used": self.points_used,
            "method": self.method,
        }


def residual_metric(observed: DiffDist, model: DiffDist) -> Tuple[float, int]:
    """Mean squared residual over the dn values where either distribution exceeds the support threshold."""
    low = min(observed.offset, model.offset)
    high = max(observed.offset + observed.pmf.size, model.offset + model.pmf.size) - 1
    p = observed.on_range(low, high)
    r = model.on_range(low, high)
    support = (p > config.RESIDUAL_SUPPORT_THRESHOLD) | (r > config.RESIDUAL_SUPPORT_THRESHOLD)
    nu = int(support.sum())
    if nu == 0:
        raise DomainError("both distributions are below the support threshold everywhere")
    residuals = p[support] - r[support]
    return float(residuals @ residuals) / nu, nu


def _alpha_sq_min(a: float, b: float, threshold: float) -> float:
    if a <= threshold:
        # The threshold is met for every |alpha|^2 covered by the fit
        logger.info(f"fitted amplitude {a:.3e} already below threshold {threshold:.3e}")
        return 0.0
    return math.log(a / threshold) / b


def fit_exponential(points: Sequence[TransitionPoint], threshold: float = config.TRANSITION_THRESHOLD,
                    lower_cut: float = config.FIT_LOWER_CUT, refine: bool = False) -> ExpFit:
    """Fit S = A exp(-B |alpha|^2) to the points with alpha_sq >= lower_cut.

    The fit is linear least squares of ln S; with refine=True the result seeds
    a nonlinear least-squares fit of S itself.
    """
    if threshold <= 0:
        raise DomainError(f"threshold must be > 0, got {threshold}")
    used = sorted((p for p in points if p.alpha_sq >= lower_cut), key=lambda p: p.alpha_sq)
    xs = np.array([p.alpha_sq for p in used])
    ss = np.array([p.s_classical for p in used])
    if np.unique(xs).size < 3:
        raise FitError(f"need at least 3 distinct alpha_sq >= {lower_cut}, got {np.unique(xs).size}")
    if np.any(ss <= 0):
        raise FitError("residual metric values must be > 0 for a log-space fit")

    result = linregress(xs, np.log(ss))
    b = -float(result.slope)
    if b <= 0:
        raise FitError(f"fitted decay rate B={b:.3e} is not positive")
    log_a = float(result.intercept)
    a = math.exp(log_a)
    var_log_a = float(result.intercept_stderr) ** 2
    var_b = float(result.stderr) ** 2
    cov_log_a_b = float(xs.mean()) * var_b
    alpha_sq_min = _alpha_sq_min(a, b, threshold)
    var_min = (var_log_a + alpha_sq_min ** 2 * var_b - 2.0 * alpha_sq_min * cov_log_a_b) / b ** 2
    fit = ExpFit(a, b, threshold, alpha_sq_min, math.sqrt(max(var_min, 0.0)),
                 a * math.sqrt(var_log_a), math.sqrt(var_b), len(used))

    if refine:
        fit = _refine(fit, xs, ss)
    logger.info(f"exponential fit over {len(used)} points: A={fit.a:.4e}, B={fit.b:.4f}, "
                f"alpha_sq_min={fit.alpha_sq_min:.3f} +/- {fit.alpha_sq_min_stderr:.3f}")
    return fit


def _exponential(x, a, b):
    return a * np.exp(-b * x)


def _refine(seed: ExpFit, xs: np.ndarray, ss: np.ndarray) -> ExpFit:
    try:
        (a, b), cov = curve_fit(_exponential, xs, ss, p0=(seed.a, seed.b))
    except (RuntimeError, ValueError) as e:
        raise FitError(f"nonlinear refinement failed: {e}")
    if not (a > 0 and b > 0):
        raise FitError(f"nonlinear refinement left the physical range: A={a:.3e}, B={b:.3e}")
    a_stderr, b_stderr = (float(s) for s in np.sqrt(np.clip(np.diag(cov), 0.0, None)))
    alpha_sq_min = _alpha_sq_min(float(a), float(b), seed.threshold)
    # d(alpha_min)/dA = 1/(A B), d(alpha_min)/dB = -alpha_min / B
    grad = np.array([1.0 / (a * b), -alpha_sq_min / b])
    var_min = float(grad @ cov @ grad) if np.all(np.isfinite(cov)) else 0.0
    return ExpFit(float(a), float(b), seed.threshold, alpha_sq_min, math.sqrt(max(var_min, 0.0)),
                  a_stderr, b_stderr, seed.points_used, "nonlinear")


def fit_linear(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    """Ordinary least squares; returns (slope, intercept)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise FitError(f"x and y lengths differ: {xs.size} vs {ys.size}")
    if np.unique(xs).size < 2:
        raise FitError("need at least 2 distinct x values")
    result = linregress(xs, ys)
    return float(result.slope), float(result.intercept)


def tally_diff_dist(tally: EventTally, j: int) -> DiffDist:
    """Observed dn = k - l statistics for herald outcome j."""
    table = tally.slice(j)
    if not table.sum() > 0:
        raise InsufficientDataError(f"no events with herald outcome j={j}")
    k, l = np.indices(table.shape)
    size = table.shape[1]
    weights = np.bincount((k - l + size - 1).ravel(), weights=table.ravel())
    return DiffDist.from_weights(weights, offset=-(size - 1), what=f"tally_diff_dist(j={j})")


def quantum_diff_dist(j: int, params: ExperimentParams) -> DiffDist:
    return diff_dist(heralded_joint(j, params))


def _scan_point(task: Tuple[int, float, ExperimentParams, Optional[DiffDist], str]) -> TransitionPoint:
    j, alpha_sq, params, observed, reference = task
    at_point = params.with_alpha_sq(alpha_sq)
    if observed is None:
        observed = quantum_diff_dist(j, at_point)
    if reference == "quantum":
        model = quantum_diff_dist(j, at_point)
    else:
        model = classical_full(j, at_point)
    s, nu = residual_metric(observed, model)
    logger.debug(f"j={j}, alpha_sq={alpha_sq:g}: S={s:.4e} over {nu} points")
    return TransitionPoint(alpha_sq, s, nu)


def transition_scan(j: int, alpha_sq_grid: Sequence[float], params: ExperimentParams,
                    observed: Optional[Mapping[float, EventTally]] = None,
                    reference: str = "classical", jobs: Optional[int] = None) -> List[TransitionPoint]:
    """Residual metric at each grid point.

    Observed statistics come from the tallies keyed by |alpha|^2 when given,
    otherwise from the full quantum model. The reference is the classical
    model, or the quantum model itself for a self-comparison.
    """
    if reference not in ("classical", "quantum"):
        raise DomainError(f"reference must be 'classical' or 'quantum', got '{reference}'")
    for alpha_sq in alpha_sq_grid:
        if not alpha_sq > 0:
            raise DomainError(f"grid values must be > 0, got {alpha_sq}")
    tasks = []
    for alpha_sq in alpha_sq_grid:
        data = None
        if observed is not None:
            if alpha_sq not in observed:
                raise InsufficientDataError(f"no tally for alpha_sq={alpha_sq}")
            data = tally_diff_dist(observed[alpha_sq], j)
        tasks.append((j, float(alpha_sq), params, data, reference))
    return parallel_map(_scan_point, tasks, jobs=jobs, desc=f"transition scan j={j}")


def _floor_point(task: Tuple[int, float, ExperimentParams, DiffDist]) -> float:
    j, alpha_sq, params, observed = task
    return residual_metric(observed, quantum_diff_dist(j, params.with_alpha_sq(alpha_sq)))[0]


def residual_floor(observations: Mapping[Tuple[int, float], DiffDist], params: ExperimentParams,
                   jobs: Optional[int] = None) -> float:
    """Mean residual metric of observed statistics against the full quantum model.

    The agreement reached by the quantum model sets the level the classical
    model has to reach before it counts as equally good.
    """
    if not observations:
        raise InsufficientDataError("no observations")
    tasks = [(j, alpha_sq, params, dist) for (j, alpha_sq), dist in sorted(observations.items())]
    values = parallel_map(_floor_point, tasks, jobs=jobs, desc="residual floor")
    floor = float(np.mean(values))
    logger.info(f"residual floor over {len(values)} observations: {floor:.3e}")
    return floor


@dataclass(frozen=True)
class ScalingRow:
    j: int
    mean_photons: float
    fit: ExpFit

    def to_json_dict(self) -> Dict:
        return {"j": self.j, "mean_photons": self.mean_photons, **self.fit.to_json_dict()}


@dataclass(frozen=True)
class ScalingResult:
    rows: List[ScalingRow]
    slope: float
    intercept: float


def scaling_study(herald_outcomes: Sequence[int], params: ExperimentParams,
                  alpha_sq_grid: Sequence[float] = tuple(config.SCALING_ALPHA_SQ_GRID),
                  threshold: float = config.TRANSITION_THRESHOLD,
                  lower_cut: float = config.FIT_LOWER_CUT,
                  jobs: Optional[int] = None) -> ScalingResult:
    """alpha_sq_min for each herald outcome against the signal mean photon number, with a linear fit."""
    outcomes = list(herald_outcomes)
    if len(outcomes) < 2:
        raise FitError("need at least 2 herald outcomes for the scaling fit")
    tasks = [(j, float(a), params, None, "classical") for j in outcomes for a in alpha_sq_grid]
    points = parallel_map(_scan_point, tasks, jobs=jobs, desc="scaling study")
    rows = []
    for i, j in enumerate(outcomes):
        scan = points[i * len(alpha_sq_grid): (i + 1) * len(alpha_sq_grid)]
        fit = fit_exponential(scan, threshold, lower_cut)
        rows.append(ScalingRow(j, signal_mean_photons(j, params.source), fit))
    slope, intercept = fit_linear([r.mean_photons for r in rows], [r.fit.alpha_sq_min for r in rows])
    logger.info(f"alpha_sq_min = {slope:.3f} N + {intercept:.3f} over {len(rows)} herald outcomes")
    return ScalingResult(rows, slope, intercept)
