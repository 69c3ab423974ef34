"""Presence/absence detection (PAD) for one room.

A room is occupied when the residual energy left after mutual-coupling
reduction and clutter removal exceeds ``kappa`` times the energy the same
room shows when empty.  Raw per-horizon decisions are smoothed by a
majority vote over the last ``vote_window`` horizons.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from src.errors import NotCalibrated, TooFewFrames, TooShort
from src.pipeline.dsp_chain import (
    CouplingProfile,
    RangeProfile,
    clutter_removal,
    compute_jtf,
    mutual_coupling_reduction,
)
from src.schemas.schemas import PresenceCalibrationRecord, Room

logger = logging.getLogger(__name__)

MIN_CALIBRATION_FRAMES = 10


@dataclass(frozen=True, slots=True)
class ThresholdConfig:
    """Detector settings.

    Attributes:
        kappa: Multiplier over the calibrated empty-room energy.
        horizon_frames: Frames per decision.
        vote_window: Horizons the majority vote looks back over.
        vote_required: Occupied horizons needed within a full vote window.
    """

    kappa: float = 3.0
    horizon_frames: int = 10
    vote_window: int = 5
    vote_required: int = 3

    def __post_init__(self) -> None:
        if self.kappa <= 0 or self.horizon_frames < 1:
            raise ValueError("kappa must be positive and horizon_frames >= 1")
        if not 1 <= self.vote_required <= self.vote_window:
            raise ValueError("vote_required must lie in [1, vote_window]")


@dataclass(frozen=True, slots=True)
class PresenceDecision:
    """Occupied/vacant verdict for one room and one horizon.

    ``raw_occupied`` is the unsmoothed threshold test; ``occupied`` is the
    voted result.
    """

    room: Room
    occupied: bool
    energy: float
    timestamp_ms: int
    raw_occupied: bool = False


def residual_profile(profile: RangeProfile, coupling: CouplingProfile | None) -> RangeProfile:
    """Coupling-reduce (when calibrated) and clutter-remove a raw range profile."""
    if coupling is not None:
        profile = mutual_coupling_reduction(profile, coupling)
    return clutter_removal(profile)


def _horizon_energies(frame_energies: np.ndarray, horizon_frames: int) -> np.ndarray:
    whole = frame_energies.size // horizon_frames
    if whole == 0:
        # a single short horizon, scaled up to full length
        return np.array([frame_energies.sum() * horizon_frames / frame_energies.size])
    return frame_energies[: whole * horizon_frames].reshape(whole, horizon_frames).sum(axis=1)


def calibrate_empty(
    profiles: Iterable[RangeProfile],
    room: Room = Room.LIVINGROOM,
    config: ThresholdConfig | None = None,
) -> tuple[PresenceCalibrationRecord, CouplingProfile]:
    """Learn the empty-room baseline from raw range profiles of an empty scene.

    The coupling profile is the chirp mean over every frame; the baseline is
    the mean and standard deviation of per-horizon residual energy after
    subtracting it and removing clutter.

    Args:
        profiles: Range-FFT output of one or more empty recordings.
        room: Room being calibrated.
        config: Horizon length and kappa to store with the baseline.

    Returns:
        The calibration record and the coupling profile for the DSP chain.

    Raises:
        TooFewFrames: Fewer than ten whole frames were supplied.
    """
    config = config or ThresholdConfig()
    profiles = list(profiles)
    frames = sum(p.num_frames for p in profiles)
    if frames < MIN_CALIBRATION_FRAMES:
        raise TooFewFrames(f"calibration needs >= {MIN_CALIBRATION_FRAMES} empty frames, got {frames}")

    chirps = profiles[0].config.chirps_per_frame
    whole = [p.data[: p.num_frames * chirps] for p in profiles if p.num_frames]
    stacked = RangeProfile(config=profiles[0].config, data=np.concatenate(whole))
    coupling = CouplingProfile.from_profile(stacked)
    residual = residual_profile(stacked, coupling)
    energies = _horizon_energies(residual.frame_energies(), config.horizon_frames)

    try:
        columns = compute_jtf(mutual_coupling_reduction(stacked, coupling)).columns
        column_energy = float(columns.sum(axis=1).mean()) if columns.size else 0.0
    except TooShort:
        column_energy = 0.0

    record = PresenceCalibrationRecord(
        room=room,
        baseline_mean=float(energies.mean()),
        baseline_std=float(energies.std()),
        kappa=config.kappa,
        horizon_frames=config.horizon_frames,
        column_energy_mean=column_energy,
    )
    logger.info(
        "Calibrated %s from %d empty frames: baseline %.4g +- %.4g per horizon",
        room,
        frames,
        record.baseline_mean,
        record.baseline_std,
    )
    return record, coupling


def _vote(flags: Sequence[bool], config: ThresholdConfig) -> bool:
    # partial windows need the same occupied fraction as a full one
    recent = list(flags)[-config.vote_window :]
    return sum(recent) * config.vote_window >= config.vote_required * len(recent)


def detect_presence(
    profile: RangeProfile,
    config: ThresholdConfig,
    calibration: PresenceCalibrationRecord | None,
    previous: Sequence[bool] = (),
    room: Room | None = None,
) -> PresenceDecision:
    """Decide occupancy for one horizon of clutter-removed profile.

    Args:
        profile: Residual profile covering the horizon.
        config: Detector settings.
        calibration: Empty-room baseline of the room.
        previous: Raw decisions of the preceding horizons, oldest first.
        room: Room label for the decision; defaults to the calibration's room.

    Raises:
        NotCalibrated: No baseline is available.
    """
    if calibration is None:
        raise NotCalibrated(f"room {room or 'unknown'} has no empty-room baseline")
    energy = profile.energy()
    frames = max(profile.num_chirps / profile.config.chirps_per_frame, 1e-12)
    threshold = config.kappa * calibration.baseline_mean * frames / config.horizon_frames
    raw = energy > threshold
    return PresenceDecision(
        room=room or calibration.room,
        occupied=_vote([*previous, raw], config),
        energy=energy,
        timestamp_ms=profile.start_time_ms,
        raw_occupied=raw,
    )


def column_energy_threshold(calibration: PresenceCalibrationRecord) -> float:
    """Spectrogram column energy above which a column is not empty-like."""
    return calibration.kappa * calibration.column_energy_mean


class PresenceDetector:
    """Stateful per-room detector fed one frame at a time.

    Frames accumulate until a horizon is complete; each complete horizon
    yields a voted ``PresenceDecision``.

    Args:
        room: Room being monitored.
        calibration: Empty-room baseline.
        coupling: Coupling profile subtracted before clutter removal.
        config: Detector settings; ``kappa`` and ``horizon_frames`` default to
            the calibration's values.
    """

    def __init__(
        self,
        room: Room,
        calibration: PresenceCalibrationRecord | None,
        coupling: CouplingProfile | None = None,
        config: ThresholdConfig | None = None,
    ) -> None:
        if calibration is None:
            raise NotCalibrated(f"room {room} has no empty-room baseline")
        self.room = room
        self.calibration = calibration
        self.coupling = coupling
        self.config = config or ThresholdConfig(
            kappa=calibration.kappa, horizon_frames=calibration.horizon_frames
        )
        self._frames: list[RangeProfile] = []
        self._flags: deque[bool] = deque(maxlen=self.config.vote_window)

    def push(self, residual: RangeProfile) -> PresenceDecision | None:
        """Add one clutter-removed frame; return a decision when a horizon completes."""
        self._frames.append(residual)
        if len(self._frames) < self.config.horizon_frames:
            return None
        horizon = RangeProfile(
            config=residual.config,
            data=np.concatenate([f.data for f in self._frames]),
            start_time_ms=self._frames[0].start_time_ms,
        )
        self._frames.clear()
        decision = detect_presence(horizon, self.config, self.calibration, tuple(self._flags), self.room)
        self._flags.append(decision.raw_occupied)
        logger.debug(
            "%s horizon at %d ms: energy %.4g raw=%s occupied=%s",
            self.room,
            decision.timestamp_ms,
            decision.energy,
            decision.raw_occupied,
            decision.occupied,
        )
        return decision
