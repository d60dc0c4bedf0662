import math

import numpy as np
import pytest

from classical_model import ClassicalChannel, classical_full, classical_lossy, classical_ideal
from errors import DomainError
from quantum_model import DetectorParams, ExperimentParams, SourceParams, diff_dist, heralded_joint


def test_classical_ideal_examples():
    assert classical_ideal(0, 4.0, 0) == pytest.approx(1 / (math.sqrt(2 * math.pi) * 2))
    assert classical_ideal(1, 3.0, 0) == 0.0
    h2 = 4 * (3 / (2 * math.sqrt(2))) ** 2 - 2
    expected = h2 ** 2 * math.exp(-9 / 8) / (math.sqrt(2 * math.pi) * 2 * 8)
    assert classical_ideal(2, 4.0, 3) == pytest.approx(expected, rel=1e-12)


def test_classical_ideal_parity():
    for j in range(6):
        for dn in (1, 2.5, 7):
            assert classical_ideal(j, 5.0, dn) == classical_ideal(j, 5.0, -dn)


@pytest.mark.parametrize("j", [0, 3, 8])
@pytest.mark.parametrize("alpha_sq", [4.0, 12.0])
def test_classical_ideal_integrates_to_one(j, alpha_sq):
    width = math.sqrt(alpha_sq * (2 * j + 1))
    dn = np.linspace(-12 * width, 12 * width, 20001)
    density = [classical_ideal(j, alpha_sq, x) for x in dn]
    assert np.trapezoid(density, dn) == pytest.approx(1.0, abs=1e-6)


def test_classical_ideal_undefined_at_zero():
    with pytest.raises(DomainError, match="alpha=0"):
        classical_ideal(1, 0.0, 0)


def test_lossless_channel_samples_ideal_density():
    dist = classical_lossy(2, 6.0)
    values = dist.values
    ideal = np.array([classical_ideal(2, 6.0, dn) for dn in values])
    np.testing.assert_allclose(dist.pmf, ideal / ideal.sum(), rtol=1e-9, atol=1e-15)


def test_balanced_loss_gives_expected_variance():
    alpha_sq, eta = 10.0, 0.5
    channel = ClassicalChannel.from_efficiencies(alpha_sq, eta, eta)
    assert channel.shift == 0.0
    dist = classical_lossy(0, alpha_sq, channel)
    assert dist.variance == pytest.approx(eta * alpha_sq, rel=5e-3)


def test_imbalance_moves_mean_with_quantum_sign_convention():
    alpha_sq = 10.0
    channel = ClassicalChannel.from_efficiencies(alpha_sq, 0.5, 0.7)
    dist = classical_lossy(0, alpha_sq, channel)
    # dn = m - n, so the brighter arm d pulls the mean negative
    assert dist.mean == pytest.approx(alpha_sq * (0.5 - 0.7) / 2, abs=0.01)


def test_full_model_reduces_to_lossy_channel():
    detector = DetectorParams(eta_c=0.4, eta_d=0.6, mode_overlap=1.0, alpha_sq=8.0)
    params = ExperimentParams(SourceParams(0.5, 1.0), detector)
    full = classical_full(3, params)
    lossy = classical_lossy(3, 8.0, ClassicalChannel.from_efficiencies(8.0, 0.4, 0.6))
    assert full.offset == lossy.offset
    np.testing.assert_allclose(full.pmf, lossy.pmf, atol=1e-12)


def test_full_model_is_normalized_with_small_deficit(table1):
    dist = classical_full(3, table1.with_alpha_sq(6.52))
    assert dist.pmf.sum() == pytest.approx(1.0, abs=1e-9)
    assert abs(dist.tail_mass) < 1e-4


def test_full_model_domain_errors(table1):
    with pytest.raises(DomainError):
        classical_full(1, table1)
    with pytest.raises(DomainError):
        classical_full(1, table1.with_alpha_sq(5.0).with_mode_overlap(0.0))


def test_vacuum_signal_converges_to_quantum_statistics():
    balanced = (0.274 + 0.352) / 2
    params = ExperimentParams(SourceParams(0.0), DetectorParams(balanced, balanced, 1.0, 15.41))
    quantum = diff_dist(heralded_joint(0, params))
    classical = classical_full(0, params)
    low = min(quantum.offset, classical.offset)
    high = max(quantum.values[-1], classical.values[-1])
    tvd = 0.5 * np.abs(quantum.on_range(low, high) - classical.on_range(low, high)).sum()
    # Skellam against its Gaussian limit; the excess kurtosis 1/(eta |alpha|^2) keeps this above 0.01
    assert tvd == pytest.approx(0.013, abs=0.002)
