import math

import numpy as np
import pytest

from errors import DomainError, UnreachableOutcomeError
from numerics import PhotonDist
from quantum_model import DetectorParams, ExperimentParams, SourceParams
from states import (
    PhaseSpacePoint,
    apply_loss,
    engineered_herald_dist,
    fano_of_dist,
    g2_of_dist,
    herald_outcome_joint_probability,
    heralded_signal_dist,
    poisson_dist,
    quadrature_dist,
    quadrature_grid,
    signal_mean_photons,
    wigner,
    wigner_grid,
)

THERMAL_SOURCE = SourceParams(0.8, 0.5)


def test_perfect_heralding_gives_number_state():
    assert heralded_signal_dist(4, SourceParams(0.6, 1.0)).as_dict() == pytest.approx({4: 1.0})


def test_unheralded_signal_is_geometric():
    dist = heralded_signal_dist(0, THERMAL_SOURCE)
    q = THERMAL_SOURCE.q
    assert dist.mean == pytest.approx(q / (1 - q), rel=1e-9)
    assert dist[3] / dist[2] == pytest.approx(q)


def test_signal_mean_at_measured_parameters(table1):
    dist = heralded_signal_dist(6, table1.source)
    assert dist.mean == pytest.approx(10.37, abs=0.05)
    assert dist.mean == pytest.approx(signal_mean_photons(6, table1.source), rel=1e-9)
    assert dist[5] == 0.0
    assert dist[6] > 0.0


def test_g2_examples():
    assert g2_of_dist(poisson_dist(2.5)) == pytest.approx(1.0, abs=1e-9)
    assert g2_of_dist(PhotonDist.point_mass(2)) == pytest.approx(0.5)
    assert g2_of_dist(heralded_signal_dist(0, THERMAL_SOURCE)) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(DomainError):
        g2_of_dist(PhotonDist.point_mass(0))


def test_fano_examples():
    assert fano_of_dist(poisson_dist(3.0)) == pytest.approx(1.0, abs=1e-9)
    assert fano_of_dist(PhotonDist.point_mass(4)) == pytest.approx(0.0, abs=1e-12)
    thermal = heralded_signal_dist(0, THERMAL_SOURCE)
    assert fano_of_dist(thermal) == pytest.approx(1 + thermal.mean, abs=1e-6)


@pytest.mark.parametrize("j", [1, 3, 6])
def test_g2_survives_loss(table1, j):
    dist = heralded_signal_dist(j, table1.source)
    for eta in (0.3, 0.7):
        assert g2_of_dist(apply_loss(dist, eta)) == pytest.approx(g2_of_dist(dist), abs=1e-9)


def test_apply_loss_thins_single_photon():
    assert apply_loss(PhotonDist.point_mass(1), 0.25).as_dict() == pytest.approx({0: 0.75, 1: 0.25})
    with pytest.raises(DomainError):
        apply_loss(PhotonDist.point_mass(1), 0.0)


def test_wigner_values():
    origin = PhaseSpacePoint(0.0, 0.0)
    assert wigner(PhotonDist.point_mass(0), origin) == pytest.approx(1 / (2 * math.pi))
    assert wigner(PhotonDist.point_mass(1), origin) == pytest.approx(-1 / (2 * math.pi))


def test_wigner_normalization_and_bound(table1):
    dist = heralded_signal_dist(2, table1.source)
    xs = np.linspace(-15, 15, 601)
    w = wigner_grid(dist, xs, xs)
    assert np.trapezoid(np.trapezoid(w, xs, axis=1), xs) == pytest.approx(1.0, abs=1e-4)
    assert np.max(np.abs(w)) <= 1 / (2 * math.pi) + 1e-12


def test_quadrature_values():
    assert quadrature_dist(PhotonDist.point_mass(0), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert quadrature_dist(PhotonDist.point_mass(1), 0.0) == pytest.approx(0.0, abs=1e-15)
    xs = np.linspace(-12, 12, 4001)
    assert np.trapezoid(quadrature_grid(PhotonDist.point_mass(3), xs), xs) == pytest.approx(1.0, abs=1e-6)


def test_quadrature_is_wigner_marginal():
    dist = PhotonDist.point_mass(1)
    ps = np.linspace(-12, 12, 4001)
    for x in (0.0, 1.0, 2.0):
        marginal = np.trapezoid(wigner_grid(dist, np.array([x]), ps)[0], ps)
        assert marginal == pytest.approx(quadrature_dist(dist, x), abs=1e-5)


def test_phase_space_point_must_be_finite():
    with pytest.raises(DomainError):
        PhaseSpacePoint(math.nan, 0.0)


def test_engineered_state_without_pairs_is_vacuum():
    params = ExperimentParams(SourceParams(0.0, 0.5), DetectorParams(alpha_sq=2.0))
    assert engineered_herald_dist(1, 1, params).as_dict() == pytest.approx({0: 1.0})


def test_engineered_state_is_normalized(table1):
    dist = engineered_herald_dist(2, 1, table1.with_alpha_sq(3.0))
    assert dist.pmf.sum() == pytest.approx(1.0, abs=1e-12)


def test_engineered_state_matches_joint_probabilities(table1):
    params = table1.with_alpha_sq(2.0)
    dist = engineered_herald_dist(1, 0, params)
    weights = np.array([herald_outcome_joint_probability(j, 1, 0, params) for j in range(dist.pmf.size)])
    np.testing.assert_allclose(dist.pmf, weights / weights.sum(), atol=1e-12)


def test_unreachable_outcome():
    params = ExperimentParams(SourceParams(0.0, 0.5), DetectorParams(alpha_sq=0.0))
    with pytest.raises(UnreachableOutcomeError):
        engineered_herald_dist(1, 0, params)


@pytest.mark.slow
def test_interference_lowers_engineered_g2(table1):
    params = table1.with_alpha_sq(15.41)
    interfering = g2_of_dist(engineered_herald_dist(6, 0, params))
    separate = g2_of_dist(engineered_herald_dist(6, 0, params, interfering=False))
    assert 1.08 <= interfering <= 1.30
    assert interfering == pytest.approx(1.238, rel=0.01)
    # without overlap the herald mode stays close to its thermal marginal
    assert separate == pytest.approx(1.805, rel=0.01)
    assert interfering < separate < 2.0
