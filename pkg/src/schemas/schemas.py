"""Pydantic v2 schemas shared across RoomWave.

This module defines the data transfer objects (DTOs) that cross a process,
file or network boundary:

- ``ChirpConfig`` / ``DerivedParams``: FMCW waveform and its derived quantities.
- ``CubeHeader`` / ``JtfHeader`` / ``ModelHeader``: JSON headers of the binary containers.
- ``ManifestEntry``: one labelled window of a training corpus.
- ``ArchitectureConfig`` / ``TrainConfig``: GRU network shape and optimiser settings.
- ``PresenceCalibrationRecord``: per-room empty baseline written beside the model.
- ``RoomEvent`` / ``DailyReport`` / ``CurrentStatus``: status records and their aggregation.
- ``EvaluationReport``: accuracy / confusion output of the evaluation harness.
- ``ReportQuery``: request line accepted on the report port.

All models use ``from __future__ import annotations`` for deferred evaluation
of type hints, enabling forward references within the same module.
"""

from __future__ import annotations

import json
from src._compat import StrEnum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.constants import c as SPEED_OF_LIGHT

from src.errors import UnknownActivity

FORMAT_VERSION = 1
"""Version stamped into every file header, event line and report."""


class Activity(StrEnum):
    """The six activity classes recognised in the living room."""

    EMPTY = "Empty"
    SEDENTARY = "Sedentary"
    WASHING = "Washing"
    VACUUMING = "Vacuuming"
    IN_PLACE_MOVEMENT = "InPlaceMovement"
    WALKING = "Walking"


ACTIVITIES: tuple[Activity, ...] = tuple(Activity)
"""Canonical class order; a class index is a position in this tuple."""


def parse_activity(value: Activity | str | int) -> Activity:
    """Resolve a class name, loose spelling or class index to an ``Activity``.

    Names match case-insensitively and ignore ``_``/``-``/spaces, so
    ``"in_place_movement"`` and ``"InPlaceMovement"`` are the same class.

    Raises:
        UnknownActivity: The value names none of the six classes.
    """
    if isinstance(value, Activity):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        if 0 <= value < len(ACTIVITIES):
            return ACTIVITIES[value]
        raise UnknownActivity(f"class index {value} outside [0, {len(ACTIVITIES)})")
    if isinstance(value, str):
        key = value.replace("_", "").replace("-", "").replace(" ", "").lower()
        for activity in ACTIVITIES:
            if activity.value.lower() == key:
                return activity
    raise UnknownActivity(f"unknown activity {value!r}")


LOW_CLUTTER_ACTIVITIES: tuple[Activity, ...] = (
    Activity.EMPTY,
    Activity.SEDENTARY,
    Activity.IN_PLACE_MOVEMENT,
    Activity.WALKING,
)
"""Class order of the four-class open-hall corpus."""


class Room(StrEnum):
    """Monitored rooms plus ``none`` for out-of-home records."""

    BEDROOM = "bedroom"
    LIVINGROOM = "livingroom"
    WASHROOM = "washroom"
    NONE = "none"


MONITORED_ROOMS: tuple[Room, ...] = (Room.BEDROOM, Room.LIVINGROOM, Room.WASHROOM)


class Status(StrEnum):
    """Status values carried by ``RoomEvent``."""

    IN_BED = "in_bed"
    IN_WASHROOM = "in_washroom"
    OUT_OF_HOME = "out_of_home"
    EMPTY = "empty"
    SEDENTARY = "sedentary"
    WASHING = "washing"
    VACUUMING = "vacuuming"
    IN_PLACE_MOVEMENT = "in_place_movement"
    WALKING = "walking"


LIVING_ROOM_STATUSES: frozenset[Status] = frozenset(
    {
        Status.EMPTY,
        Status.SEDENTARY,
        Status.WASHING,
        Status.VACUUMING,
        Status.IN_PLACE_MOVEMENT,
        Status.WALKING,
    }
)


# ---------------------------------------------------------------------------
# Radar waveform
# ---------------------------------------------------------------------------


class ChirpConfig(BaseModel):
    """FMCW waveform and simulator parameters.

    Field names match the JSON files accepted by ``--config`` and the RCUB
    header, so a config file can be validated straight into this model.

    Attributes:
        f0_hz: Chirp start frequency.  Sets the wavelength ``c / f0``.
        slope_hz_per_s: Chirp slope S.
        bandwidth_hz: Swept bandwidth B; must equal ``S * samples / fs`` within 1 %.
        fs_hz: ADC sample rate.
        samples_per_chirp: Fast-time samples per chirp.
        chirps_per_frame: Chirps per frame (N).
        chirp_period_s: Chirp repetition period Tc (idle time folded in).
        frame_period_s: Frame period; ``N * Tc`` may not exceed it.
        num_channels: Virtual receive channels L.
        noise_floor: RMS amplitude of the additive complex Gaussian noise.
        phase_noise_std: Standard deviation (rad) of the per-sample residual phase noise.
        leakage_amplitude: Amplitude of the transmitter-to-receiver leakage tone
            added by cluttered scenes.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    f0_hz: float = Field(..., gt=0, description="Chirp start frequency (Hz).")
    slope_hz_per_s: float = Field(..., gt=0, description="Chirp slope (Hz/s).")
    bandwidth_hz: float = Field(..., gt=0, description="Swept bandwidth (Hz).")
    fs_hz: float = Field(..., gt=0, description="ADC sample rate (samples/s).")
    samples_per_chirp: int = Field(..., ge=2, description="Fast-time samples per chirp.")
    chirps_per_frame: int = Field(..., ge=2, description="Chirps per frame (N).")
    chirp_period_s: float = Field(..., gt=0, description="Chirp period Tc (s).")
    frame_period_s: float = Field(..., gt=0, description="Frame period (s).")
    num_channels: int = Field(default=12, ge=1, description="Virtual channels L.")
    noise_floor: float = Field(default=0.0, ge=0, description="Noise RMS amplitude.")
    phase_noise_std: float = Field(default=0.01, ge=0, description="Phase noise sigma (rad).")
    leakage_amplitude: float = Field(default=0.0, ge=0, description="Tx/Rx leakage amplitude.")

    @model_validator(mode="after")
    def _check_waveform(self) -> ChirpConfig:
        swept = self.slope_hz_per_s * self.samples_per_chirp / self.fs_hz
        if abs(swept - self.bandwidth_hz) > 0.01 * self.bandwidth_hz:
            raise ValueError(
                f"bandwidth {self.bandwidth_hz:.6g} Hz inconsistent with "
                f"slope * samples / fs = {swept:.6g} Hz (tolerance 1%)"
            )
        # A frame made of N back-to-back chirps may round one ulp past the frame period.
        if self.chirps_per_frame * self.chirp_period_s > self.frame_period_s * (1 + 1e-9):
            raise ValueError(
                f"{self.chirps_per_frame} chirps of {self.chirp_period_s:.6g} s "
                f"do not fit in a {self.frame_period_s:.6g} s frame"
            )
        return self

    @property
    def wavelength(self) -> float:
        """Carrier wavelength (m)."""
        return SPEED_OF_LIGHT / self.f0_hz

    @property
    def range_bins(self) -> int:
        """Positive-frequency range bins kept by the range FFT."""
        return self.samples_per_chirp // 2

    def same_waveform(self, other: ChirpConfig) -> bool:
        """True when both configs describe the same sampled waveform.

        Simulator-only knobs (noise, phase noise, leakage) are ignored.
        """
        keys = CubeHeader.waveform_keys()
        return self.model_dump(include=keys) == other.model_dump(include=keys)

    @classmethod
    def from_json(cls, path: str | Path) -> ChirpConfig:
        """Load and validate a config file written with this model's field names."""
        with Path(path).open("r", encoding="utf-8") as fh:
            return cls.model_validate(json.load(fh))


class DerivedParams(BaseModel):
    """Range and velocity quantities derived from a ``ChirpConfig``.

    Attributes:
        range_resolution_m: ``c / (2B)``.
        max_range_m: ``c * fs / (4S)``.
        max_velocity_mps: ``lambda / (4 Tc)``.
        velocity_resolution_mps: ``2 * v_max / N``.
        doppler_bins: Doppler bins per frame (``N``).
    """

    model_config = ConfigDict(frozen=True)

    range_resolution_m: float
    max_range_m: float
    max_velocity_mps: float
    velocity_resolution_mps: float
    doppler_bins: int


# ---------------------------------------------------------------------------
# Container headers
# ---------------------------------------------------------------------------


class CubeHeader(BaseModel):
    """JSON header of an RCUB file (raw radar cube or coupling profile)."""

    f0_hz: float
    slope_hz_per_s: float
    bandwidth_hz: float
    fs_hz: float
    samples_per_chirp: int
    chirps_per_frame: int
    num_channels: int
    num_frames: int
    frame_period_s: float
    chirp_period_s: float
    start_time_ms: int
    kind: Literal["cube", "coupling_profile"] = "cube"
    format_version: int = FORMAT_VERSION

    @staticmethod
    def waveform_keys() -> set[str]:
        """Field names shared with ``ChirpConfig`` that define the waveform."""
        return {
            "f0_hz",
            "slope_hz_per_s",
            "bandwidth_hz",
            "fs_hz",
            "samples_per_chirp",
            "chirps_per_frame",
            "num_channels",
            "frame_period_s",
            "chirp_period_s",
        }


class JtfHeader(BaseModel):
    """JSON header of a JTF0 spectrogram file."""

    num_columns: int = Field(..., ge=0)
    bins: Literal[256] = 256
    column_period_ms: float = Field(..., gt=0)
    v_max: float = Field(..., gt=0)
    start_time_ms: int
    label: str | None = None
    subject_id: int | None = None
    session_id: int | None = None
    format_version: int = FORMAT_VERSION


class ModelHeader(BaseModel):
    """JSON header of a GRUM model file.

    Attributes:
        layer_dims: ``[input, hidden]`` pair per GRU layer.
        fc_dims: ``[in, out]`` pair per fully-connected layer.
        class_names: Output classes in index order.
        input_dim: Doppler bins per time step.
        time_steps: Steps per window.
        normalization: ``"max"`` (divide each window by its maximum) or ``"none"``.
        seed: Seed used to initialise the parameters.
        format_version: Container version.
    """

    layer_dims: list[list[int]]
    fc_dims: list[list[int]]
    class_names: list[str]
    input_dim: int
    time_steps: int
    normalization: Literal["max", "none"] = "max"
    seed: int = 0
    format_version: int = FORMAT_VERSION


class ManifestEntry(BaseModel):
    """One line of a dataset manifest.

    Attributes:
        path: JTF0 spectrogram file, relative to the manifest directory or absolute.
        label: Activity class name.
        subject: Synthetic subject index.
        session: Session index within the subject.
        column: First spectrogram column of the window inside ``path``.
    """

    path: str
    label: str
    subject: int = Field(..., ge=0)
    session: int = Field(..., ge=0)
    column: int = Field(default=0, ge=0)


# ---------------------------------------------------------------------------
# Learning configuration
# ---------------------------------------------------------------------------


class ArchitectureConfig(BaseModel):
    """Shape of the stacked GRU classifier."""

    num_layers: int = Field(default=7, ge=1)
    hidden_size: int = Field(default=128, ge=1)
    fc_hidden: list[int] = Field(default_factory=lambda: [64])
    input_dim: int = Field(default=256, ge=1)
    time_steps: int = Field(default=50, ge=1)
    normalization: Literal["max", "none"] = "max"


class TrainConfig(BaseModel):
    """Optimiser and schedule settings for ``train``.

    Attributes:
        learning_rate: Adam step size.
        batch_size: Mini-batch size (the last batch of an epoch may be smaller).
        epochs: Maximum number of passes over the training set.
        beta1: Adam first-moment decay.
        beta2: Adam second-moment decay.
        eps: Adam denominator term.
        seed: Seed for parameter initialisation and shuffling.
        clip_norm: Optional global gradient-norm clip.
        patience: Epochs without validation improvement before stopping early.
    """

    learning_rate: float = Field(default=0.01, gt=0)
    batch_size: int = Field(default=512, ge=1)
    epochs: int = Field(default=200, ge=1)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = 0
    clip_norm: float | None = Field(default=None, gt=0)
    patience: int = Field(default=20, ge=1)


# ---------------------------------------------------------------------------
# Presence calibration
# ---------------------------------------------------------------------------


class PresenceCalibrationRecord(BaseModel):
    """Calibration file written for one room.

    The coupling profile itself lives in a sidecar RCUB container named by
    ``profile_path``.
    """

    room: Room
    baseline_mean: float = Field(..., ge=0)
    baseline_std: float = Field(..., ge=0)
    kappa: float = Field(default=3.0, gt=0)
    horizon_frames: int = Field(default=10, ge=1)
    column_energy_mean: float = Field(default=0.0, ge=0)
    profile_path: str | None = None
    format_version: int = FORMAT_VERSION


# ---------------------------------------------------------------------------
# Status records
# ---------------------------------------------------------------------------


class GaitRecord(BaseModel):
    """Placeholder attached to walking events: when, and over how many windows."""

    start_ms: int
    stop_ms: int
    windows: int = Field(..., ge=1)


class RoomEvent(BaseModel):
    """A timestamped status record, one line of the event log.

    Attributes:
        v: Schema version.
        ts_ms: Epoch milliseconds at which the status took effect.
        room: Room the status belongs to (``none`` when out of home).
        status: Status value.
        confidence: Classifier confidence (1.0 for presence-only statuses).
        gait: Optional placeholder gait record for walking events.
    """

    model_config = ConfigDict(frozen=True)

    v: int = FORMAT_VERSION
    ts_ms: int = Field(..., ge=0)
    room: Room
    status: Status
    confidence: float = Field(default=1.0, ge=0.0, le=1.0)
    gait: GaitRecord | None = None

    @model_validator(mode="after")
    def _check_room_status(self) -> RoomEvent:
        expected = {
            Status.IN_BED: Room.BEDROOM,
            Status.IN_WASHROOM: Room.WASHROOM,
            Status.OUT_OF_HOME: Room.NONE,
        }.get(self.status, Room.LIVINGROOM)
        if self.room != expected:
            raise ValueError(f"status {self.status} requires room {expected}, got {self.room}")
        return self

    def to_line(self) -> str:
        """Serialise as one JSON-lines record (no trailing newline)."""
        return self.model_dump_json(exclude_none=True)


class DailyReport(BaseModel):
    """Per-day aggregation of the event log.

    Attributes:
        v: Schema version.
        date: Day covered, ``YYYY-MM-DD`` (UTC).
        sleep_minutes: Minutes in bed.
        washroom_visits: Number of entries into the washroom.
        washroom_minutes: Minutes in the washroom.
        out_of_home_minutes: Minutes with every room vacant.
        sedentary_minutes: Minutes classified sedentary.
        active_minutes: Minutes washing, vacuuming or moving in place.
        walking_minutes: Minutes classified walking.
        unknown_minutes: Minutes not covered by any trustworthy event.
        per_status_minutes: Minutes per status value.
        current_status: Status of the last event at or before the end of
            the covered span (``unknown`` when none).
        no_data: True when no event falls on the day.
    """

    v: int = FORMAT_VERSION
    date: str
    sleep_minutes: float = 0.0
    washroom_visits: int = 0
    washroom_minutes: float = 0.0
    out_of_home_minutes: float = 0.0
    sedentary_minutes: float = 0.0
    active_minutes: float = 0.0
    walking_minutes: float = 0.0
    unknown_minutes: float = 0.0
    per_status_minutes: dict[str, float] = Field(default_factory=dict)
    current_status: str = "unknown"
    no_data: bool = False


class CurrentStatus(BaseModel):
    """Latest status and how long ago it was recorded."""

    status: str
    age_ms: int | None = None
    ts_ms: int | None = None


class EpochMetrics(BaseModel):
    """Loss and accuracy after one training epoch."""

    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None = None
    val_accuracy: float | None = None


class TrainingReport(BaseModel):
    """Metrics file written by ``train``."""

    v: int = FORMAT_VERSION
    split: str
    class_names: list[str]
    num_train: int
    num_validation: int
    epochs_run: int
    best_epoch: int
    history: list[EpochMetrics]


class ClassMetrics(BaseModel):
    """Precision / recall / F1 for one class."""

    precision: float
    recall: float
    f1: float
    support: int


class EvaluationReport(BaseModel):
    """Output of ``eval``: one split of one corpus scored by one model."""

    v: int = FORMAT_VERSION
    split: str
    class_names: list[str]
    num_windows: int
    accuracy: float
    confusion_matrix: list[list[int]]
    per_class: dict[str, ClassMetrics]
    walking_false_positive_rate: float | None = None


class ReportQuery(BaseModel):
    """One request line on the report port.

    ``now_ms`` overrides the query time (the wall clock by default); the
    last event of the day counts up to it.
    """

    op: Literal["report", "status"]
    date: str | None = None
    now_ms: int | None = Field(default=None, ge=0)
