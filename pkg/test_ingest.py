import io
import json

import numpy as np
import pandas as pd
import pytest

from analysis import TransitionPoint
from errors import AlignmentError, BinningError, DomainError, FormatError
from ingest import (
    PulseEnergyRecord,
    bin_pulse_energies,
    build_tally,
    diff_dist_frame,
    format_float,
    load_run_config,
    photon_dist_frame,
    read_count_summary,
    read_diff_dist,
    read_photon_dist,
    read_pulses,
    read_tally,
    read_transition_points,
    tally_frame,
    transition_frame,
    write_json,
    write_table,
)
from nonclassicality import EventTally
from numerics import DiffDist, PhotonDist


def gaussian_pulses(channel: str, size: int, seed: int, spacing: float = 1.0, width: float = 0.1):
    rng = np.random.default_rng(seed)
    truth = rng.choice(4, size=size, p=[0.4, 0.3, 0.2, 0.1])
    values = truth * spacing + rng.normal(0.0, width, size=size)
    records = [PulseEnergyRecord(channel, float(v), trial) for trial, v in enumerate(values)]
    return records, truth


def as_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    write_table(frame, buffer)
    return buffer.getvalue()


def test_binning_recovers_photon_numbers():
    records, truth = gaussian_pulses("c", 4000, seed=1)
    binning = bin_pulse_energies(records, "c")
    assert binning.peaks.size == 4
    assert binning.boundaries.size == 3
    labels = np.array([label for _, label in binning.labels])
    assert np.mean(labels == truth) >= 0.995
    assert binning.warnings == []


def test_binning_labels_are_monotone_in_value():
    records, _ = gaussian_pulses("d", 2000, seed=2)
    binning = bin_pulse_energies(records, "d")
    by_trial = dict(binning.labels)
    ordered = sorted(records, key=lambda r: r.value)
    labels = [by_trial[r.trial] for r in ordered]
    assert all(a <= b for a, b in zip(labels, labels[1:]))


def test_binning_flags_overflow():
    records, _ = gaussian_pulses("herald", 2000, seed=3)
    records.append(PulseEnergyRecord("herald", 9.0, 5000))
    binning = bin_pulse_energies(records, "herald")
    assert binning.overflow == [5000]


def test_binning_identical_values_gives_single_peak():
    records = [PulseEnergyRecord("c", 2.0, t) for t in range(150)]
    binning = bin_pulse_energies(records, "c")
    assert binning.peaks.size == 1
    assert {label for _, label in binning.labels} == {0}
    assert len(binning.warnings) == 1
    assert bin_pulse_energies(records, "c", expect_light=False).warnings == []


def test_binning_needs_enough_records():
    with pytest.raises(BinningError):
        bin_pulse_energies([], "c")
    with pytest.raises(BinningError):
        bin_pulse_energies([PulseEnergyRecord("c", 1.0, t) for t in range(50)], "c")


def test_pulse_record_validation():
    with pytest.raises(DomainError):
        PulseEnergyRecord("x", 1.0, 0)
    with pytest.raises(DomainError):
        PulseEnergyRecord("c", float("inf"), 0)


def test_build_tally_counts_triples():
    labels = {
        "herald": [(0, 1), (1, 1), (2, 0)],
        "c": [(0, 2), (1, 2), (2, 0)],
        "d": [(0, 0), (1, 0), (2, 1)],
    }
    tally = build_tally(labels)
    assert tally.counts == {(1, 2, 0): 2, (0, 0, 1): 1}


def test_build_tally_drops_out_of_range_trials():
    labels = {"herald": [(0, 1), (1, 9)], "c": [(0, 0), (1, 0)], "d": [(0, 1), (1, 0)]}
    assert build_tally(labels).counts == {(1, 0, 1): 1}


@pytest.mark.parametrize("labels", [
    {"herald": [(0, 1)], "c": [(0, 0)]},
    {"herald": [(0, 1), (0, 2)], "c": [(0, 0)], "d": [(0, 0)]},
    {"herald": [(0, 1), (1, 0)], "c": [(0, 0), (1, 0)], "d": [(0, 0), (2, 0)]},
])
def test_build_tally_alignment_errors(labels):
    with pytest.raises(AlignmentError):
        build_tally(labels)


@pytest.mark.parametrize("value, expected", [
    (1.0, "1.0"),
    (0.0, "0.0"),
    (0.25, "0.25"),
    (1e-20, "1e-20"),
    (1.0 / 3.0, "0.333333333333"),
])
def test_format_float(value, expected):
    assert format_float(value) == expected


def test_point_mass_difference_table():
    assert as_csv(diff_dist_frame(DiffDist.from_mapping({0: 1.0}))) == "dn,probability\n0,1.0\n"


def test_photon_table_and_reader():
    text = as_csv(photon_dist_frame(PhotonDist.from_mapping({1: 0.5, 3: 0.5})))
    assert text == "n,probability\n1,0.5\n3,0.5\n"
    assert read_photon_dist(io.StringIO(text)).as_dict() == pytest.approx({1: 0.5, 3: 0.5})


@pytest.mark.parametrize("text", [
    "dn,prob\n0,1\n",
    "dn,probability\n0.5,1\n",
    "dn,probability\n0,-1\n",
    "dn,probability\n0,abc\n",
    "dn,probability\n",
    "",
])
def test_malformed_difference_table(text):
    with pytest.raises(FormatError):
        read_diff_dist(io.StringIO(text))


def test_tally_table():
    tally = EventTally({(1, 0, 1): 3, (0, 2, 0): 4})
    assert as_csv(tally_frame(tally)) == "j,k,l,count\n0,2,0,4\n1,0,1,3\n"
    merged = read_tally(io.StringIO("j,k,l,count\n1,0,1,3\n1,0,1,2\n"))
    assert merged.counts == {(1, 0, 1): 5}
    assert merged.is_integral
    with pytest.raises(FormatError):
        read_tally(io.StringIO("j,k,count\n1,0,3\n"))


def test_transition_table():
    points = [TransitionPoint(4.0, 1e-4, 12), TransitionPoint(8.0, 2.5e-5, 15)]
    text = as_csv(transition_frame(points))
    assert text.splitlines()[0] == "alpha_sq,s_classical,nu"
    assert text.splitlines()[1] == "4.0,0.0001,12"
    assert read_transition_points(io.StringIO(text)) == points


def test_read_pulses():
    records = read_pulses(io.StringIO("channel,value,trial\nherald,0.9,0\nc,1.1,0\n"))
    assert records[0] == PulseEnergyRecord("herald", 0.9, 0)
    assert records[1].value == pytest.approx(1.1)
    with pytest.raises(FormatError):
        read_pulses(io.StringIO("channel,value,trial\nx,0.9,0\n"))


def test_write_json():
    buffer = io.StringIO()
    write_json({"b": 1, "a": [1.5, None]}, buffer)
    text = buffer.getvalue()
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')
    with pytest.raises(ValueError):
        write_json({"a": float("nan")}, io.StringIO())


def test_count_summary(tmp_path):
    path = tmp_path / "counts.json"
    path.write_text(json.dumps({
        "herald_singles": 4000, "signal_singles_c": 2100, "signal_singles_d": 2600,
        "coincidences_hc": 900, "coincidences_hd": 1150, "trials": 100000,
        "coherent_mean_c": 1.0, "coherent_mean_d": 1.2,
    }))
    summary = read_count_summary(path)
    assert summary.counts().herald_singles == 4000
    assert summary.coherent_means() == (1.0, 1.2)
    assert summary.mean_herald_photons is None


def test_count_summary_errors(tmp_path):
    path = tmp_path / "counts.json"
    path.write_text(json.dumps({"herald_singles": 10}))
    with pytest.raises(FormatError):
        read_count_summary(path)
    path.write_text("{not json")
    with pytest.raises(FormatError):
        read_count_summary(path)
    path.write_text(json.dumps({
        "herald_singles": 10, "signal_singles_c": 5, "signal_singles_d": 5,
        "coincidences_hc": 1, "coincidences_hd": 1, "trials": 100, "coherent_mean_c": 1.0,
    }))
    with pytest.raises(FormatError):
        read_count_summary(path).coherent_means()


def test_run_config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("preset: table1\neta_c: 0.5\nalpha_sq_grid: [4, 8]\nherald_outcomes: [2, 4]\n")
    run_config = load_run_config(path)
    assert run_config.alpha_sq_grid == [4.0, 8.0]
    params = run_config.experiment_params(2.0)
    assert params.detector.eta_c == 0.5
    assert params.detector.eta_d == 0.352
    assert params.detector.alpha_sq == 2.0
    assert params.source.lambda_mag == 0.797


def test_run_config_defaults_to_ideal(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("")
    params = load_run_config(path).experiment_params()
    assert params.source.lambda_mag == 0.5
    assert params.detector.eta_c == 1.0


@pytest.mark.parametrize("text", [
    "colour: blue\n",
    "eta_c: 1.5\n",
    "alpha_sq_grid: [-1]\n",
    "- 1\n- 2\n",
    "preset: [unclosed\n",
])
def test_run_config_errors(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text)
    with pytest.raises(FormatError):
        load_run_config(path)
