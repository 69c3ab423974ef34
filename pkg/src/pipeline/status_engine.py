"""Room routing, activity-to-status mapping and daily report aggregation.

Presence decisions from the three rooms decide *where* the subject is; the
living-room classifier decides *what* they are doing there.  The resulting
``RoomEvent`` stream is folded into a ``DailyReport``.
"""

from __future__ import annotations

import bisect
import logging
from collections.abc import Mapping, Sequence
from datetime import date as Date
from datetime import datetime, timedelta, timezone

import numpy as np

from src.errors import MissingDecision, UnknownActivity, UnsortedEvents
from src.pipeline.presence_pad import PresenceDecision
from src.schemas.schemas import (
    MONITORED_ROOMS,
    Activity,
    CurrentStatus,
    DailyReport,
    GaitRecord,
    Room,
    RoomEvent,
    Status,
    parse_activity,
)

logger = logging.getLogger(__name__)

DAY_MS = 86_400_000
UNKNOWN_GAP_FACTOR = 5

_ACTIVITY_STATUS: dict[Activity, Status] = {
    Activity.EMPTY: Status.EMPTY,
    Activity.SEDENTARY: Status.SEDENTARY,
    Activity.WASHING: Status.WASHING,
    Activity.VACUUMING: Status.VACUUMING,
    Activity.IN_PLACE_MOVEMENT: Status.IN_PLACE_MOVEMENT,
    Activity.WALKING: Status.WALKING,
}
_STATUS_ACTIVITY = {status: activity for activity, status in _ACTIVITY_STATUS.items()}

# highest priority first
ROOM_PRECEDENCE: tuple[Room, ...] = (Room.WASHROOM, Room.BEDROOM, Room.LIVINGROOM)

ACTIVE_STATUSES = frozenset({Status.WASHING, Status.VACUUMING, Status.IN_PLACE_MOVEMENT})


def map_class_to_status(label: Activity | str | int) -> Status:
    """Living-room status for a classifier label or class index.

    Raises:
        UnknownActivity: The label is not one of the six classes.
    """
    return _ACTIVITY_STATUS[parse_activity(label)]


def status_to_class(status: Status | str) -> Activity:
    """Inverse of ``map_class_to_status``.

    Raises:
        UnknownActivity: ``status`` is not a living-room status.
    """
    try:
        return _STATUS_ACTIVITY[Status(status)]
    except (KeyError, ValueError):
        raise UnknownActivity(f"{status!r} is not a living-room status") from None


def _occupied(decision: PresenceDecision | bool) -> bool:
    return decision if isinstance(decision, bool) else decision.occupied


def route_rooms(
    decisions: Mapping[Room, PresenceDecision | bool],
    living_label: Activity | str | int | None = None,
    confidence: float = 1.0,
    timestamp_ms: int | None = None,
    gait: GaitRecord | None = None,
) -> RoomEvent | None:
    """Turn one decision per room into a status event.

    Bedroom occupancy means in bed, washroom occupancy means in the
    washroom, living-room occupancy yields the classified activity, and no
    occupancy means out of home.  When several rooms report occupancy the
    washroom wins over the bedroom, which wins over the living room.

    Args:
        decisions: Occupancy per monitored room.
        living_label: Classifier output for the living room, if any.
        confidence: Confidence of ``living_label``.
        timestamp_ms: Event time; defaults to the latest decision time.
        gait: Placeholder gait record attached to walking events.

    Returns:
        The event, or ``None`` when the living room wins but has no label yet.

    Raises:
        MissingDecision: A monitored room has no decision.
    """
    missing = [room for room in MONITORED_ROOMS if room not in decisions]
    if missing:
        raise MissingDecision(f"no presence decision for {', '.join(missing)}")
    if timestamp_ms is None:
        stamps = [d.timestamp_ms for d in decisions.values() if isinstance(d, PresenceDecision)]
        timestamp_ms = max(stamps, default=0)

    occupied = [room for room in ROOM_PRECEDENCE if _occupied(decisions[room])]
    if len(occupied) > 1:
        logger.warning("Rooms %s occupied at %d ms; routing to %s", occupied, timestamp_ms, occupied[0])
    if not occupied:
        return RoomEvent(ts_ms=timestamp_ms, room=Room.NONE, status=Status.OUT_OF_HOME)
    room = occupied[0]
    if room is Room.WASHROOM:
        return RoomEvent(ts_ms=timestamp_ms, room=room, status=Status.IN_WASHROOM)
    if room is Room.BEDROOM:
        return RoomEvent(ts_ms=timestamp_ms, room=room, status=Status.IN_BED)
    if living_label is None:
        return None
    status = map_class_to_status(living_label)
    return RoomEvent(
        ts_ms=timestamp_ms,
        room=Room.LIVINGROOM,
        status=status,
        confidence=min(max(confidence, 0.0), 1.0),
        gait=gait if status is Status.WALKING else None,
    )


class StatusRouter:
    """Stateful router used by the aggregator service.

    Keeps the latest presence decision per room and a debounced living-room
    label, and emits a ``RoomEvent`` whenever the routed status changes or
    ``min_interval_ms`` has passed since the previous event.  Timestamps of
    emitted events never decrease.

    Args:
        debounce_windows: Consecutive identical classifications required
            before the living-room status changes.
        min_interval_ms: Re-emit an unchanged status at most this often.
        rooms: Rooms with a radar; the others count as permanently vacant.
    """

    def __init__(
        self,
        debounce_windows: int = 2,
        min_interval_ms: int = 980,
        rooms: Sequence[Room] = MONITORED_ROOMS,
    ) -> None:
        self.debounce_windows = max(1, debounce_windows)
        self.min_interval_ms = min_interval_ms
        self.rooms = tuple(room for room in MONITORED_ROOMS if room in rooms)
        if not self.rooms:
            raise ValueError("at least one monitored room is required")
        self.decisions: dict[Room, PresenceDecision] = {
            room: PresenceDecision(room=room, occupied=False, energy=0.0, timestamp_ms=0)
            for room in MONITORED_ROOMS
            if room not in self.rooms
        }
        self.living_label: Activity | None = None
        self.living_confidence = 1.0
        self._candidate: Activity | None = None
        self._candidate_count = 0
        self._walk_start_ms: int | None = None
        self._walk_windows = 0
        self._walk_stop_ms = 0
        self._last: RoomEvent | None = None

    def restore(self, last_event: RoomEvent | None) -> None:
        """Resume after a restart so emitted timestamps stay monotone."""
        self._last = last_event

    def update_presence(self, decision: PresenceDecision) -> RoomEvent | None:
        self.decisions[decision.room] = decision
        if decision.room is Room.LIVINGROOM and not decision.occupied:
            self._clear_living()
        return self._route(decision.timestamp_ms)

    def update_classification(
        self,
        label: Activity | str | int,
        confidence: float,
        timestamp_ms: int,
        window_end_ms: int | None = None,
    ) -> RoomEvent | None:
        """Feed one living-room classification; returns an event if one is due."""
        activity = parse_activity(label)
        if activity == self._candidate:
            self._candidate_count += 1
        else:
            self._candidate, self._candidate_count = activity, 1
        if self._candidate_count >= self.debounce_windows:
            if activity != self.living_label:
                logger.debug("Living-room status -> %s at %d ms", activity, timestamp_ms)
            self.living_label = activity
            self.living_confidence = confidence
        if self.living_label is Activity.WALKING:
            if self._walk_start_ms is None:
                self._walk_start_ms, self._walk_windows = timestamp_ms, 0
            self._walk_windows += 1
        else:
            self._walk_start_ms, self._walk_windows = None, 0
        self._walk_stop_ms = window_end_ms if window_end_ms is not None else timestamp_ms
        return self._route(timestamp_ms)

    def _clear_living(self) -> None:
        self.living_label = None
        self._candidate, self._candidate_count = None, 0
        self._walk_start_ms, self._walk_windows = None, 0

    def _gait(self) -> GaitRecord | None:
        if self._walk_start_ms is None or self._walk_windows == 0:
            return None
        return GaitRecord(
            start_ms=self._walk_start_ms,
            stop_ms=max(self._walk_stop_ms, self._walk_start_ms),
            windows=self._walk_windows,
        )

    def _route(self, timestamp_ms: int) -> RoomEvent | None:
        if any(room not in self.decisions for room in self.rooms):
            return None
        if self._last is not None:
            timestamp_ms = max(timestamp_ms, self._last.ts_ms)
        event = route_rooms(
            self.decisions,
            self.living_label,
            self.living_confidence,
            timestamp_ms,
            gait=self._gait(),
        )
        if event is None:
            return None
        if self._last is not None and event.status == self._last.status:
            if event.ts_ms - self._last.ts_ms < self.min_interval_ms:
                return None
        self._last = event
        return event


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def day_bounds(day: str | Date) -> tuple[int, int]:
    """UTC epoch-millisecond span ``[start, end)`` of a ``YYYY-MM-DD`` day.

    Raises:
        ValueError: ``day`` is not a valid ISO date.
    """
    if isinstance(day, str):
        day = Date.fromisoformat(day)
    start = datetime(day.year, day.month, day.day, tzinfo=timezone.utc)
    start_ms = int(start.timestamp() * 1000)
    return start_ms, start_ms + DAY_MS


def day_of(ts_ms: int) -> str:
    """UTC date of an epoch-millisecond timestamp."""
    return (datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(milliseconds=ts_ms)).date().isoformat()


def median_cadence_ms(events: Sequence[RoomEvent]) -> float | None:
    """Median positive gap between consecutive events, or ``None`` without one."""
    stamps = np.array([e.ts_ms for e in events], dtype=np.int64)
    gaps = np.diff(stamps)
    gaps = gaps[gaps > 0]
    return float(np.median(gaps)) if gaps.size else None


def _check_sorted(events: Sequence[RoomEvent]) -> None:
    for previous, current in zip(events, events[1:]):
        if current.ts_ms < previous.ts_ms:
            raise UnsortedEvents(f"event at {current.ts_ms} ms follows one at {previous.ts_ms} ms")


def accumulate_report(
    events: Sequence[RoomEvent],
    day: str | Date,
    cadence_ms: float | None = None,
    now_ms: int | None = None,
) -> DailyReport:
    """Fold a time-ordered event stream into the report of one UTC day.

    Each event's status lasts until the next event; the last one lasts until
    the end of the day (or ``now_ms`` if earlier).  An interval longer than
    five times the event cadence is entirely unknown, as is the part of the
    day before the first event.  Only the part of each interval inside the
    day is counted.  Events from neighbouring days may be passed; the last
    one before midnight sets the status the day starts with.

    Args:
        events: Events sorted by timestamp.
        day: UTC date to report.
        cadence_ms: Expected event spacing; defaults to the median gap among
            the day's events and their two neighbours, so the whole log and a
            day slice of it give the same report.
        now_ms: Query time, which caps the final interval.

    Returns:
        The report; ``no_data`` is set when no event falls on the day.

    Raises:
        UnsortedEvents: The stream is not sorted by timestamp.
    """
    _check_sorted(events)
    start_ms, end_ms = day_bounds(day)
    date_text = Date.fromisoformat(day).isoformat() if isinstance(day, str) else day.isoformat()
    if now_ms is not None:
        end_ms = max(start_ms, min(end_ms, now_ms))
    first = bisect.bisect_left(events, start_ms, key=lambda e: e.ts_ms)
    last = bisect.bisect_left(events, start_ms + DAY_MS, key=lambda e: e.ts_ms)
    if first == last:
        return DailyReport(date=date_text, no_data=True)
    # the day plus one neighbour each side; later days never change the cadence
    events = events[max(first - 1, 0) : last + 1]

    if cadence_ms is None:
        cadence_ms = median_cadence_ms(events)
    limit = None if cadence_ms is None else UNKNOWN_GAP_FACTOR * cadence_ms

    per_status_ms: dict[Status, int] = {}
    unknown_ms = 0
    covered_from = start_ms
    visits = 0
    previous_status: Status | None = None
    current = "unknown"
    for index, event in enumerate(events):
        if event.ts_ms >= end_ms:
            break
        following = events[index + 1].ts_ms if index + 1 < len(events) else end_ms
        begin, finish = max(event.ts_ms, start_ms), min(following, end_ms)
        if start_ms <= event.ts_ms and event.status is Status.IN_WASHROOM and previous_status is not Status.IN_WASHROOM:
            visits += 1
        previous_status = event.status
        current = event.status.value
        if finish <= begin:
            continue
        if begin > covered_from:
            unknown_ms += begin - covered_from
        covered_from = finish
        if limit is not None and following - event.ts_ms > limit:
            unknown_ms += finish - begin
        else:
            per_status_ms[event.status] = per_status_ms.get(event.status, 0) + (finish - begin)
    if covered_from < end_ms:
        unknown_ms += end_ms - covered_from

    def minutes(*statuses: Status) -> float:
        return sum(per_status_ms.get(s, 0) for s in statuses) / 60_000

    return DailyReport(
        date=date_text,
        sleep_minutes=minutes(Status.IN_BED),
        washroom_visits=visits,
        washroom_minutes=minutes(Status.IN_WASHROOM),
        out_of_home_minutes=minutes(Status.OUT_OF_HOME),
        sedentary_minutes=minutes(Status.SEDENTARY),
        active_minutes=minutes(*ACTIVE_STATUSES),
        walking_minutes=minutes(Status.WALKING),
        unknown_minutes=unknown_ms / 60_000,
        per_status_minutes={s.value: ms / 60_000 for s, ms in sorted(per_status_ms.items())},
        current_status=current,
    )


def current_status(events: Sequence[RoomEvent], now_ms: int | None = None) -> CurrentStatus:
    """Latest status and its age at ``now_ms`` (``unknown`` for an empty stream)."""
    if not events:
        return CurrentStatus(status="unknown")
    last = events[-1]
    if now_ms is None:
        now_ms = int(datetime.now(timezone.utc).timestamp() * 1000)
    return CurrentStatus(status=last.status.value, age_ms=max(0, now_ms - last.ts_ms), ts_ms=last.ts_ms)

