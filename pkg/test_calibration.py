import math

import numpy as np
import pytest

from calibration import (
    CoincidenceCounts,
    alpha_from_counts,
    alpha_sq_stderr,
    calibrate,
    efficiencies_from_ratio,
    klyshko_efficiencies,
    lambda_from_mean,
    lambda_stderr,
    mean_herald_photons_from_lambda,
)
from errors import DomainError, InsufficientDataError


def simulated_counts(eta_h: float, eta_c: float, eta_d: float, pairs: int, seed: int) -> CoincidenceCounts:
    """One pair per trial; the herald and the two signal arms click independently."""
    signal = [eta_c / 2, eta_d / 2, 1 - (eta_c + eta_d) / 2]
    probs = [eta_h * s for s in signal] + [(1 - eta_h) * s for s in signal]
    hc, hd, h_none, c_only, d_only, _ = np.random.default_rng(seed).multinomial(pairs, probs)
    return CoincidenceCounts(
        herald_singles=int(hc + hd + h_none),
        signal_singles_c=int(hc + c_only),
        signal_singles_d=int(hd + d_only),
        coincidences_hc=int(hc),
        coincidences_hd=int(hd),
        trials=pairs,
    )


def test_lossless_counts_give_unit_efficiencies():
    counts = CoincidenceCounts(100, 50, 50, 50, 50, 1000)
    assert tuple(klyshko_efficiencies(counts)) == pytest.approx((1.0, 1.0, 1.0))


def test_efficiencies_from_ratio():
    eta_c, eta_d = efficiencies_from_ratio(0.313, 0.7784)
    assert eta_c == pytest.approx(0.274, abs=1e-3)
    assert eta_d == pytest.approx(0.352, abs=1e-3)
    assert (eta_c + eta_d) / 2 == pytest.approx(0.313)


def test_klyshko_recovers_simulated_efficiencies():
    truth = (0.4, 0.27, 0.35)
    estimate = klyshko_efficiencies(simulated_counts(*truth, pairs=10_000_000, seed=11))
    stderrs = (estimate.eta_h_stderr, estimate.eta_c_stderr, estimate.eta_d_stderr)
    for value, expected, stderr in zip(estimate, truth, stderrs):
        assert abs(value - expected) <= 4 * stderr
    assert estimate.flags == ()


def test_klyshko_is_scale_invariant():
    counts = CoincidenceCounts(4000, 2100, 2600, 900, 1150, 100000)
    base = klyshko_efficiencies(counts)
    scaled = klyshko_efficiencies(counts.scaled(10))
    assert tuple(scaled) == pytest.approx(tuple(base), rel=1e-12)
    assert scaled.eta_h_stderr == pytest.approx(base.eta_h_stderr / math.sqrt(10), rel=1e-9)


def test_unphysical_estimate_is_flagged_not_clamped():
    estimate = klyshko_efficiencies(CoincidenceCounts(100, 100, 10, 95, 5, 200))
    assert estimate.eta_c > 1.0
    assert "eta_c_above_one" in estimate.flags


@pytest.mark.parametrize("counts", [
    CoincidenceCounts(0, 10, 10, 0, 0, 100),
    CoincidenceCounts(10, 0, 0, 0, 0, 100),
    CoincidenceCounts(10, 10, 0, 5, 0, 100),
    CoincidenceCounts(10, 10, 10, 0, 0, 100),
])
def test_insufficient_counts(counts):
    with pytest.raises(InsufficientDataError):
        klyshko_efficiencies(counts)


def test_count_validation():
    with pytest.raises(DomainError):
        CoincidenceCounts(10, 5, 5, 6, 0, 100)
    with pytest.raises(DomainError):
        CoincidenceCounts(10, 5, 5, 1, 1, 8)
    with pytest.raises(DomainError):
        CoincidenceCounts(-1, 5, 5, 0, 0, 100)


def test_lambda_from_mean():
    assert lambda_from_mean(0.689, 0.395) == pytest.approx(0.797, abs=1e-3)
    assert lambda_from_mean(0.0, 0.5) == 0.0
    with pytest.raises(DomainError):
        lambda_from_mean(-0.1, 0.5)
    with pytest.raises(DomainError):
        lambda_from_mean(0.5, 0.0)


def test_lambda_round_trip_and_ratio_invariance():
    lam = lambda_from_mean(0.42, 0.3)
    assert mean_herald_photons_from_lambda(lam, 0.3) == pytest.approx(0.42, rel=1e-12)
    assert lambda_from_mean(0.84, 0.6) == pytest.approx(lam, rel=1e-12)


def test_lambda_stderr_matches_finite_difference():
    mean, eta, sigma = 0.689, 0.395, 0.01
    step = 1e-6
    slope = (lambda_from_mean(mean + step, eta) - lambda_from_mean(mean - step, eta)) / (2 * step)
    assert lambda_stderr(mean, eta, sigma) == pytest.approx(abs(slope) * sigma, rel=1e-5)
    assert lambda_stderr(0.0, eta, sigma) == 0.0


@pytest.mark.parametrize("args, expected", [
    ((0.0, 0.0, 0.5, 0.5), 0.0),
    ((2.0, 2.0, 1.0, 1.0), 2.0),
    ((2.11, 2.71, 0.274, 0.352), 3.924),
])
def test_alpha_from_counts(args, expected):
    assert alpha_from_counts(*args) == pytest.approx(expected, abs=1e-3)


def test_alpha_from_counts_rejects_bad_input():
    with pytest.raises(DomainError):
        alpha_from_counts(1.0, 1.0, 0.0, 0.5)
    with pytest.raises(DomainError):
        alpha_from_counts(-1.0, 1.0, 0.5, 0.5)


def test_calibrate_record():
    counts = CoincidenceCounts(4000, 2100, 2600, 900, 1150, 100000)
    record = calibrate(counts, mean_herald_photons=0.2, mean_herald_photons_stderr=0.01,
                       coherent_means=(1.0, 1.2), mode_overlap=0.82)
    values = record.values
    assert set(values) == {"eta_h", "eta_c", "eta_d", "lambda_mag", "alpha_sq", "mode_overlap"}
    assert values["lambda_mag"] == pytest.approx(lambda_from_mean(0.2, values["eta_h"]))
    assert values["alpha_sq"] == pytest.approx(1.0 / values["eta_c"] + 1.2 / values["eta_d"])
    assert record.stderr["lambda_mag"] > 0
    assert record.stderr["alpha_sq"] > 0
    payload = record.to_json_dict()
    assert payload["metadata"]["uncertainty_model"] == "poisson"
    assert payload["flags"] == []


def test_alpha_sq_stderr_combines_count_and_efficiency_errors():
    assert alpha_sq_stderr(2.0, 3.0, 0.5, 0.6) == 0.0
    assert alpha_sq_stderr(2.0, 3.0, 0.5, 0.6, mean_c_stderr=0.1) == pytest.approx(0.2)
    assert alpha_sq_stderr(2.0, 3.0, 0.5, 0.6, eta_d_stderr=0.06) == pytest.approx(3.0 * 0.06 / 0.36)
    both = alpha_sq_stderr(2.0, 3.0, 0.5, 0.6, mean_c_stderr=0.1, eta_d_stderr=0.06)
    assert both == pytest.approx(math.hypot(0.2, 0.5))


def test_calibrate_propagates_coherent_mean_errors():
    counts = CoincidenceCounts(4000, 2100, 2600, 900, 1150, 100000)
    without = calibrate(counts, coherent_means=(1.0, 1.2))
    noisy = calibrate(counts, coherent_means=(1.0, 1.2), coherent_means_stderr=(0.05, 0.05))
    assert 0 < without.stderr["alpha_sq"] < noisy.stderr["alpha_sq"]
    expected = alpha_sq_stderr(1.0, 1.2, noisy.values["eta_c"], noisy.values["eta_d"], 0.05, 0.05,
                               without.stderr["eta_c"], without.stderr["eta_d"])
    assert noisy.stderr["alpha_sq"] == pytest.approx(expected)
    assert "alpha_sq" not in calibrate(counts).stderr
