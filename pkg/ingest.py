"""Data ingestion and table I/O.

Pulse-energy records from the three detectors are binned into photon-number
labels and assembled into event tallies. Distributions, tallies, scans and
fit results are read and written as CSV (pandas) or JSON; run configurations
come from YAML validated by pydantic.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from scipy.signal import find_peaks

import config
from analysis import TransitionPoint
from calibration import CoincidenceCounts
from errors import AlignmentError, BinningError, DomainError, FormatError
from nonclassicality import EventTally
from numerics import DiffDist, PhotonDist, TruncationPolicy
from quantum_model import DetectorParams, ExperimentParams, SourceParams

logger = logging.getLogger(__name__)

CHANNELS = ("herald", "c", "d")
PathOrBuffer = Union[str, Path, TextIO]


# ---------------------------------------------------------------------------
# Pulse binning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PulseEnergyRecord:
    channel: str
    value: float
    trial: int

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise DomainError(f"unknown channel '{self.channel}', expected one of {CHANNELS}")
        if not math.isfinite(self.value):
            raise DomainError(f"pulse value must be finite, got {self.value} (trial {self.trial})")
        if self.trial < 0:
            raise DomainError(f"trial index must be >= 0, got {self.trial}")


@dataclass
class PulseBinning:
    channel: str
    boundaries: np.ndarray
    peaks: np.ndarray
    labels: List[Tuple[int, int]]
    overflow: List[int] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def label_count(self) -> int:
        return self.boundaries.size + 1


def _smoothed_histogram(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    edges = np.histogram_bin_edges(values, bins="fd")
    counts, edges = np.histogram(values, bins=edges)
    window = np.ones(config.SMOOTHING_WINDOW) / config.SMOOTHING_WINDOW
    smoothed = np.convolve(counts, window, mode="same")
    centres = 0.5 * (edges[:-1] + edges[1:])
    return smoothed, centres


def _locate_peaks(smoothed: np.ndarray) -> np.ndarray:
    # Zero padding lets a maximum in the first or last bin count as a peak
    padded = np.concatenate(([0.0], smoothed, [0.0]))
    peaks, _ = find_peaks(padded, prominence=config.PEAK_MIN_PROMINENCE * smoothed.max())
    return peaks - 1


def bin_pulse_energies(records: Sequence[PulseEnergyRecord], channel: str,
                       expect_light: bool = True) -> PulseBinning:
    """Photon-number labels for one channel from peaks of the pulse-value histogram."""
    selected = [r for r in records if r.channel == channel]
    if not selected:
        raise BinningError(f"no pulse records for channel '{channel}'")
    if len(selected) < config.MIN_PULSE_RECORDS:
        raise BinningError(f"channel '{channel}' has {len(selected)} records, "
                           f"need at least {config.MIN_PULSE_RECORDS}")
    values = np.array([r.value for r in selected])
    warnings: List[str] = []

    if np.ptp(values) == 0:
        boundaries = np.array([])
        peaks = values[:1].copy()
    else:
        smoothed, centres = _smoothed_histogram(values)
        peak_bins = _locate_peaks(smoothed)
        # Each boundary sits in the middle of the lowest stretch between adjacent peaks
        cuts = []
        for left, right in zip(peak_bins[:-1], peak_bins[1:]):
            segment = smoothed[left: right + 1]
            lowest = np.nonzero(segment == segment.min())[0]
            position = left + 0.5 * (lowest[0] + lowest[-1])
            cuts.append(float(np.interp(position, np.arange(centres.size), centres)))
        boundaries = np.array(cuts)
        peaks = centres[peak_bins]

    if peaks.size < 2 and expect_light:
        message = f"channel '{channel}': only {peaks.size} peak(s) found, binning quality is doubtful"
        logger.warning(message)
        warnings.append(message)

    labels = np.searchsorted(boundaries, values, side="right")
    overflow: List[int] = []
    if peaks.size >= 2:
        limit = peaks[-1] + 0.5 * float(np.mean(np.diff(peaks)))
        overflow = [r.trial for r, v in zip(selected, values) if v > limit]
        if overflow:
            logger.info(f"channel '{channel}': {len(overflow)} records beyond the last peak")

    logger.info(f"channel '{channel}': {peaks.size} peaks, {len(selected)} records binned")
    return PulseBinning(
        channel=channel,
        boundaries=boundaries,
        peaks=peaks,
        labels=[(r.trial, int(label)) for r, label in zip(selected, labels)],
        overflow=overflow,
        warnings=warnings,
    )


def build_tally(labels: Mapping[str, Sequence[Tuple[int, int]]],
                max_outcome: int = config.MAX_OUTCOME) -> EventTally:
    """Count (j, k, l) triples from per-channel (trial, label) pairs.

    Trials with any label above max_outcome are dropped with a log entry.
    """
    per_channel: Dict[str, Dict[int, int]] = {}
    for channel in CHANNELS:
        if channel not in labels:
            raise AlignmentError(f"missing labels for channel '{channel}'")
        by_trial: Dict[int, int] = {}
        for trial, label in labels[channel]:
            if trial in by_trial:
                raise AlignmentError(f"duplicate trial index {trial} on channel '{channel}'")
            by_trial[trial] = label
        per_channel[channel] = by_trial

    trials = set(per_channel["herald"])
    for channel in ("c", "d"):
        if set(per_channel[channel]) != trials:
            missing = sorted(trials.symmetric_difference(per_channel[channel]))[:5]
            raise AlignmentError(f"trial indices differ between herald and '{channel}', e.g. {missing}")

    counts: Dict[Tuple[int, int, int], int] = {}
    dropped = 0
    for trial in sorted(trials):
        outcome = tuple(per_channel[ch][trial] for ch in CHANNELS)
        if max(outcome) > max_outcome:
            dropped += 1
            continue
        counts[outcome] = counts.get(outcome, 0) + 1
    if dropped:
        logger.info(f"dropped {dropped} trials with an outcome above {max_outcome}")
    return EventTally(counts, max_outcome)


# ---------------------------------------------------------------------------
# Table formats
# ---------------------------------------------------------------------------

def format_float(value: float) -> str:
    text = f"{value:.{config.SIGNIFICANT_DIGITS}g}"
    if all(ch not in text for ch in ".eni"):
        text += ".0"
    return text


def write_table(frame: pd.DataFrame, out: PathOrBuffer) -> None:
    frame = frame.copy()
    for column in frame.columns:
        if pd.api.types.is_float_dtype(frame[column]):
            frame[column] = frame[column].map(format_float)
    frame.to_csv(out, index=False, lineterminator="\n", encoding="utf-8")


def _read_table(source: PathOrBuffer, columns: Sequence[str], what: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(source)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise FormatError(f"could not parse {what}: {e}")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise FormatError(f"{what} is missing column(s) {missing}, expected header {','.join(columns)}")
    if frame[list(columns)].isnull().values.any():
        raise FormatError(f"{what} has empty cells")
    return frame


def _integer_column(frame: pd.DataFrame, column: str, what: str) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
    if np.isnan(values).any() or np.any(values != np.round(values)):
        raise FormatError(f"{what}: column '{column}' must hold integers")
    return values.astype(int)


def _float_column(frame: pd.DataFrame, column: str, what: str) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{what}: column '{column}' must hold finite numbers")
    return values


def diff_dist_frame(dist: DiffDist) -> pd.DataFrame:
    items = list(dist.items())
    return pd.DataFrame({"dn": [dn for dn, _ in items], "probability": [float(p) for _, p in items]})


def photon_dist_frame(dist: PhotonDist) -> pd.DataFrame:
    items = list(dist.items())
    return pd.DataFrame({"n": [n for n, _ in items], "probability": [float(p) for _, p in items]})


def read_diff_dist(source: PathOrBuffer) -> DiffDist:
    frame = _read_table(source, ("dn", "probability"), "difference distribution")
    dn = _integer_column(frame, "dn", "difference distribution")
    probs = _float_column(frame, "probability", "difference distribution")
    if dn.size == 0:
        raise FormatError("difference distribution is empty")
    if np.any(probs < 0):
        raise FormatError("difference distribution has negative probabilities")
    return DiffDist.from_mapping(dict(zip(dn.tolist(), probs.tolist())))


def read_photon_dist(source: PathOrBuffer) -> PhotonDist:
    frame = _read_table(source, ("n", "probability"), "photon-number distribution")
    n = _integer_column(frame, "n", "photon-number distribution")
    probs = _float_column(frame, "probability", "photon-number distribution")
    if n.size == 0:
        raise FormatError("photon-number distribution is empty")
    if np.any(n < 0) or np.any(probs < 0):
        raise FormatError("photon-number distribution has negative entries")
    return PhotonDist.from_mapping(dict(zip(n.tolist(), probs.tolist())))


def tally_frame(tally: EventTally) -> pd.DataFrame:
    rows = sorted(tally.counts.items())
    frame = pd.DataFrame({
        "j": [o[0] for o, _ in rows],
        "k": [o[1] for o, _ in rows],
        "l": [o[2] for o, _ in rows],
        "count": [c for _, c in rows],
    })
    if tally.is_integral:
        frame["count"] = frame["count"].astype(int)
    return frame


def read_tally(source: PathOrBuffer, max_outcome: Optional[int] = None) -> EventTally:
    frame = _read_table(source, ("j", "k", "l", "count"), "tally")
    triples = np.stack([_integer_column(frame, c, "tally") for c in ("j", "k", "l")], axis=1)
    counts = _float_column(frame, "count", "tally")
    if np.any(triples < 0) or np.any(counts < 0):
        raise FormatError("tally has negative entries")
    merged: Dict[Tuple[int, int, int], float] = {}
    for triple, count in zip(triples.tolist(), counts.tolist()):
        key = tuple(triple)
        merged[key] = merged.get(key, 0) + (int(count) if float(count).is_integer() else count)
    if max_outcome is None:
        max_outcome = max(config.MAX_OUTCOME, int(triples.max())) if triples.size else config.MAX_OUTCOME
    return EventTally(merged, max_outcome)


def transition_frame(points: Sequence[TransitionPoint]) -> pd.DataFrame:
    return pd.DataFrame({
        "alpha_sq": [float(p.alpha_sq) for p in points],
        "s_classical": [float(p.s_classical) for p in points],
        "nu": [int(p.nu) for p in points],
    })


def read_transition_points(source: PathOrBuffer) -> List[TransitionPoint]:
    frame = _read_table(source, ("alpha_sq", "s_classical", "nu"), "transition scan")
    alpha_sq = _float_column(frame, "alpha_sq", "transition scan")
    s = _float_column(frame, "s_classical", "transition scan")
    nu = _integer_column(frame, "nu", "transition scan")
    return [TransitionPoint(float(a), float(v), int(n)) for a, v, n in zip(alpha_sq, s, nu)]


def read_pulses(source: PathOrBuffer) -> List[PulseEnergyRecord]:
    frame = _read_table(source, ("channel", "value", "trial"), "pulse records")
    values = _float_column(frame, "value", "pulse records")
    trials = _integer_column(frame, "trial", "pulse records")
    channels = frame["channel"].astype(str).str.strip().tolist()
    try:
        return [PulseEnergyRecord(c, float(v), int(t)) for c, v, t in zip(channels, values, trials)]
    except DomainError as e:
        raise FormatError(f"invalid pulse record: {e}")


def write_json(payload: Mapping, out: Union[str, Path, TextIO]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        out.write(text)


def _read_json(source: Union[str, Path], what: str) -> Dict:
    try:
        with open(source, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"could not parse {what}: {e}")


# ---------------------------------------------------------------------------
# Count summaries and run configuration
# ---------------------------------------------------------------------------

class CountSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    herald_singles: int = Field(ge=0)
    signal_singles_c: int = Field(ge=0)
    signal_singles_d: int = Field(ge=0)
    coincidences_hc: int = Field(ge=0)
    coincidences_hd: int = Field(ge=0)
    trials: int = Field(ge=1)
    mean_herald_photons: Optional[float] = Field(default=None, ge=0)
    mean_herald_photons_stderr: float = Field(default=0.0, ge=0)
    coherent_mean_c: Optional[float] = Field(default=None, ge=0)
    coherent_mean_d: Optional[float] = Field(default=None, ge=0)
    coherent_mean_c_stderr: float = Field(default=0.0, ge=0)
    coherent_mean_d_stderr: float = Field(default=0.0, ge=0)
    mode_overlap: Optional[float] = Field(default=None, ge=0, le=1)

    def counts(self) -> CoincidenceCounts:
        return CoincidenceCounts(self.herald_singles, self.signal_singles_c, self.signal_singles_d,
                                 self.coincidences_hc, self.coincidences_hd, self.trials)

    def coherent_means(self) -> Optional[Tuple[float, float]]:
        if self.coherent_mean_c is None and self.coherent_mean_d is None:
            return None
        if self.coherent_mean_c is None or self.coherent_mean_d is None:
            raise FormatError("coherent_mean_c and coherent_mean_d must be given together")
        return self.coherent_mean_c, self.coherent_mean_d

    def coherent_means_stderr(self) -> Tuple[float, float]:
        return self.coherent_mean_c_stderr, self.coherent_mean_d_stderr


def read_count_summary(source: Union[str, Path]) -> CountSummary:
    data = _read_json(source, "count summary")
    try:
        return CountSummary.model_validate(data)
    except ValidationError as e:
        raise FormatError(f"invalid count summary: {e.errors()[0]['loc']} {e.errors()[0]['msg']}")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: Optional[str] = None
    lambda_mag: Optional[float] = Field(default=None, ge=0, lt=1)
    eta_h: Optional[float] = Field(default=None, gt=0, le=1)
    eta_c: Optional[float] = Field(default=None, gt=0, le=1)
    eta_d: Optional[float] = Field(default=None, gt=0, le=1)
    mode_overlap: Optional[float] = Field(default=None, ge=0, le=1)
    tail_epsilon: float = Field(default=config.TAIL_EPSILON, gt=0, lt=1e-3)
    hard_cap: int = Field(default=config.HARD_CAP, ge=1)
    alpha_sq_grid: List[float] = Field(default_factory=lambda: list(config.SCALING_ALPHA_SQ_GRID))
    herald_outcomes: List[int] = Field(default_factory=lambda: list(range(config.MAX_OUTCOME + 1)))
    threshold: float = Field(default=config.TRANSITION_THRESHOLD, gt=0)
    lower_cut: float = Field(default=config.FIT_LOWER_CUT, ge=0)
    output_dir: Path = Path(".")
    seed: int = config.DEFAULT_SEED
    jobs: Optional[int] = Field(default=None, ge=1)

    @field_validator("alpha_sq_grid")
    @classmethod
    def _non_negative_grid(cls, grid: List[float]) -> List[float]:
        if any(a < 0 for a in grid):
            raise ValueError("alpha_sq values must be >= 0")
        return grid

    @field_validator("herald_outcomes")
    @classmethod
    def _non_negative_outcomes(cls, outcomes: List[int]) -> List[int]:
        if any(j < 0 for j in outcomes):
            raise ValueError("herald outcomes must be >= 0")
        return outcomes

    def experiment_params(self, alpha_sq: float = 0.0) -> ExperimentParams:
        trunc = TruncationPolicy(self.tail_epsilon, self.hard_cap)
        if self.preset is not None:
            base = ExperimentParams.from_preset(self.preset, alpha_sq, trunc)
        else:
            base = ExperimentParams.ideal(alpha_sq, trunc=trunc)
        source = SourceParams(
            self.lambda_mag if self.lambda_mag is not None else base.source.lambda_mag,
            self.eta_h if self.eta_h is not None else base.source.eta_h,
        )
        detector = DetectorParams(
            self.eta_c if self.eta_c is not None else base.detector.eta_c,
            self.eta_d if self.eta_d is not None else base.detector.eta_d,
            self.mode_overlap if self.mode_overlap is not None else base.detector.mode_overlap,
            alpha_sq,
        )
        return ExperimentParams(source, detector, trunc)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise FormatError(f"could not parse run configuration {path}: {e}")
    if not isinstance(data, dict):
        raise FormatError(f"run configuration {path} must be a mapping")
    try:
        run_config = RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise FormatError(f"invalid run configuration: {'.'.join(str(x) for x in first['loc'])}: {first['msg']}")
    logger.info(f"loaded run configuration from {path}")
    return run_config
