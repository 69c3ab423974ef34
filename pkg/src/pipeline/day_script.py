"""Scripted days for end-to-end runs.

A ``DayScript`` is a seeded schedule of segments (where the subject is and,
in the living room, what they are doing).  It renders one frame stream per
room for the three edges and knows the ``DailyReport`` a perfect system
would produce.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from src.pipeline.dataset import recording_seed
from src.pipeline.dsp_chain import CouplingProfile, range_fft
from src.pipeline.motion import Environment, generate_motion
from src.pipeline.presence_pad import ThresholdConfig, calibrate_empty
from src.pipeline.radar_sim import RadarCube, frame_count, iter_frames
from src.pipeline.status_engine import accumulate_report, day_of, map_class_to_status
from src.schemas.schemas import (
    MONITORED_ROOMS,
    Activity,
    ChirpConfig,
    DailyReport,
    PresenceCalibrationRecord,
    Room,
    RoomEvent,
    Status,
)

logger = logging.getLogger(__name__)

DEFAULT_DAY_START_MS = 1_767_247_200_000
"""2026-01-01T06:00:00Z."""

# (room, living-room activity, share of the day)
_SCHEDULE: tuple[tuple[Room, Activity | None, float], ...] = (
    (Room.BEDROOM, None, 0.20),
    (Room.WASHROOM, None, 0.04),
    (Room.LIVINGROOM, Activity.SEDENTARY, 0.10),
    (Room.LIVINGROOM, Activity.WALKING, 0.05),
    (Room.LIVINGROOM, Activity.WASHING, 0.06),
    (Room.NONE, None, 0.10),
    (Room.LIVINGROOM, Activity.VACUUMING, 0.08),
    (Room.WASHROOM, None, 0.03),
    (Room.LIVINGROOM, Activity.IN_PLACE_MOVEMENT, 0.06),
    (Room.LIVINGROOM, Activity.SEDENTARY, 0.10),
    (Room.LIVINGROOM, Activity.WALKING, 0.04),
    (Room.BEDROOM, None, 0.14),
)

# what the subject's body does while in a non-living room
_ROOM_ACTIVITY = {Room.BEDROOM: Activity.SEDENTARY, Room.WASHROOM: Activity.WASHING}


@dataclass(frozen=True, slots=True)
class Segment:
    """The subject stays in ``room`` doing ``activity`` for ``duration_ms``."""

    room: Room
    activity: Activity | None
    start_ms: int
    duration_ms: int

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms

    @property
    def status(self) -> Status:
        if self.room is Room.BEDROOM:
            return Status.IN_BED
        if self.room is Room.WASHROOM:
            return Status.IN_WASHROOM
        if self.room is Room.NONE:
            return Status.OUT_OF_HOME
        assert self.activity is not None
        return map_class_to_status(self.activity)

    def activity_in(self, room: Room) -> Activity:
        """What a radar in ``room`` sees during this segment."""
        if room is not self.room:
            return Activity.EMPTY
        return self.activity or _ROOM_ACTIVITY[room]


@dataclass(frozen=True)
class DayScript:
    seed: int
    segments: tuple[Segment, ...]

    @property
    def start_ms(self) -> int:
        return self.segments[0].start_ms

    @property
    def end_ms(self) -> int:
        return self.segments[-1].end_ms

    @property
    def day(self) -> str:
        return day_of(self.start_ms)

    def ground_truth_events(self) -> list[RoomEvent]:
        """One event per segment start."""
        return [
            RoomEvent(
                ts_ms=segment.start_ms,
                room=segment.room,
                status=segment.status,
            )
            for segment in self.segments
        ]

    def expected_report(self) -> DailyReport:
        """Report of a perfect system, covering the scripted span only."""
        return accumulate_report(
            self.ground_truth_events(), self.day, cadence_ms=float("inf"), now_ms=self.end_ms
        )

    def room_seed(self, room: Room) -> int:
        return recording_seed(self.seed, MONITORED_ROOMS.index(room), 0xD0)

    def frames(self, config: ChirpConfig, room: Room) -> Iterator[RadarCube]:
        """Frames the radar in ``room`` records over the whole script."""
        room_seed = self.room_seed(room)
        for index, segment in enumerate(self.segments):
            duration_s = segment.duration_ms / 1000.0
            if frame_count(config, duration_s) < 1:
                continue
            seed = recording_seed(self.seed, MONITORED_ROOMS.index(room), index)
            script = generate_motion(
                segment.activity_in(room),
                duration_s,
                seed,
                environment=Environment.HOME,
                room_seed=room_seed,
            )
            yield from iter_frames(config, script, seed, segment.start_ms, device_seed=room_seed)

    def calibrate(
        self,
        config: ChirpConfig,
        room: Room,
        threshold: ThresholdConfig | None = None,
        seconds: float = 3.0,
    ) -> tuple[PresenceCalibrationRecord, CouplingProfile]:
        """Empty-room calibration of ``room``, recorded before the day starts."""
        room_seed = self.room_seed(room)
        seed = recording_seed(self.seed, MONITORED_ROOMS.index(room), 0xCA1)
        script = generate_motion(
            Activity.EMPTY, seconds, seed, environment=Environment.HOME, room_seed=room_seed
        )
        profiles = [range_fft(frame) for frame in iter_frames(config, script, seed, device_seed=room_seed)]
        return calibrate_empty(profiles, room, threshold)


def scripted_day(
    seed: int = 0,
    hours: float = 2.0,
    start_ms: int = DEFAULT_DAY_START_MS,
) -> DayScript:
    """Seeded schedule covering bedroom, washroom, living-room and outings.

    Segment shares are jittered by up to 20 % and rescaled so the segments
    exactly fill ``hours``; durations are whole seconds.
    """
    if hours <= 0:
        raise ValueError(f"hours must be positive, got {hours}")
    rng = np.random.default_rng([seed, 0xDA7])
    shares = np.array([share for _, _, share in _SCHEDULE]) * rng.uniform(0.8, 1.2, len(_SCHEDULE))
    total_s = int(round(hours * 3600))
    seconds = np.floor(shares / shares.sum() * total_s).astype(int)
    seconds[-1] += total_s - seconds.sum()

    segments = []
    cursor = start_ms
    for (room, activity, _), length in zip(_SCHEDULE, seconds):
        segments.append(Segment(room=room, activity=activity, start_ms=cursor, duration_ms=int(length) * 1000))
        cursor += int(length) * 1000
    logger.info("Scripted %.2f h day from %d ms with %d segments (seed=%d)", hours, start_ms, len(segments), seed)
    return DayScript(seed=seed, segments=tuple(segments))
