"""Room routing, status mapping and daily report tests.

Report durations are checked against a brute-force oracle that samples
the timeline once per second; every timestamp used here is a whole second
so the sweep is exact.
"""

from __future__ import annotations

import numpy as np
import pytest

from src.errors import MissingDecision, UnknownActivity, UnsortedEvents
from src.pipeline.presence_pad import PresenceDecision
from src.pipeline.status_engine import (
    StatusRouter,
    accumulate_report,
    current_status,
    day_bounds,
    day_of,
    map_class_to_status,
    median_cadence_ms,
    route_rooms,
    status_to_class,
)
from src.schemas.schemas import ACTIVITIES, Activity, GaitRecord, Room, RoomEvent, Status
from tests.conftest import event

DAY = "2026-03-14"
START, END = day_bounds(DAY)
MINUTE = 60_000
HOUR = 60 * MINUTE


def _decisions(bedroom: bool, livingroom: bool, washroom: bool, ts: int = 0) -> dict[Room, PresenceDecision]:
    return {
        Room.BEDROOM: PresenceDecision(Room.BEDROOM, bedroom, 0.0, ts),
        Room.LIVINGROOM: PresenceDecision(Room.LIVINGROOM, livingroom, 0.0, ts),
        Room.WASHROOM: PresenceDecision(Room.WASHROOM, washroom, 0.0, ts),
    }


def _sweep(events: list[RoomEvent], cadence_ms: int, end_ms: int) -> tuple[dict[Status, int], int]:
    """Seconds per status and unknown seconds over ``[START, end_ms)``."""
    stamps = np.array([e.ts_ms for e in events], dtype=np.int64)
    seconds = np.arange(START, end_ms, 1000, dtype=np.int64)
    owner = np.searchsorted(stamps, seconds, side="right") - 1
    counts: dict[Status, int] = {}
    unknown = 0
    for index in owner:
        if index < 0:
            unknown += 1
            continue
        following = events[index + 1].ts_ms if index + 1 < len(events) else end_ms
        if following - events[index].ts_ms > 5 * cadence_ms:
            unknown += 1
        else:
            status = events[index].status
            counts[status] = counts.get(status, 0) + 1
    return counts, unknown


def _random_stream(rng: np.random.Generator) -> list[RoomEvent]:
    count = int(rng.integers(1, 40))
    offsets = np.sort(rng.choice(np.arange(-7_200, 86_400 + 3_600), size=count, replace=False))
    statuses = list(Status)
    return [event(START + int(s) * 1000, statuses[int(rng.integers(len(statuses)))]) for s in offsets]


class TestStatusMapping:
    def test_every_class_maps_to_its_status(self) -> None:
        assert map_class_to_status(Activity.EMPTY) is Status.EMPTY
        assert map_class_to_status("Walking") is Status.WALKING
        assert map_class_to_status(4) is Status.IN_PLACE_MOVEMENT

    def test_inverse_is_identity(self) -> None:
        for activity in ACTIVITIES:
            assert status_to_class(map_class_to_status(activity)) is activity

    def test_unknown_class_rejected(self) -> None:
        with pytest.raises(UnknownActivity):
            map_class_to_status(6)
        with pytest.raises(UnknownActivity):
            status_to_class(Status.IN_BED)


class TestRouteRooms:
    def test_bedroom_means_in_bed(self) -> None:
        result = route_rooms(_decisions(True, False, False, ts=1_000))
        assert (result.room, result.status, result.ts_ms) == (Room.BEDROOM, Status.IN_BED, 1_000)

    def test_all_vacant_means_out_of_home(self) -> None:
        result = route_rooms(_decisions(False, False, False))
        assert (result.room, result.status) == (Room.NONE, Status.OUT_OF_HOME)

    def test_living_room_uses_the_classifier(self) -> None:
        result = route_rooms(_decisions(False, True, False), "Walking", 0.9)
        assert result.status is Status.WALKING
        assert result.confidence == pytest.approx(0.9)

    def test_living_room_without_label_waits(self) -> None:
        assert route_rooms(_decisions(False, True, False)) is None

    @pytest.mark.parametrize(
        ("occupancy", "status"),
        [
            ((True, True, True), Status.IN_WASHROOM),
            ((True, True, False), Status.IN_BED),
            ((False, True, True), Status.IN_WASHROOM),
        ],
    )
    def test_precedence_on_multiple_rooms(self, occupancy: tuple[bool, bool, bool], status: Status) -> None:
        assert route_rooms(_decisions(*occupancy), "Sedentary").status is status

    def test_missing_room_rejected(self) -> None:
        decisions = _decisions(False, False, False)
        del decisions[Room.WASHROOM]
        with pytest.raises(MissingDecision):
            route_rooms(decisions)

    def test_plain_booleans_accepted(self) -> None:
        decisions = {Room.BEDROOM: False, Room.LIVINGROOM: True, Room.WASHROOM: False}
        result = route_rooms(decisions, "Vacuuming", timestamp_ms=42)
        assert (result.status, result.ts_ms) == (Status.VACUUMING, 42)

    def test_walking_carries_gait_placeholder(self) -> None:
        gait = GaitRecord(start_ms=0, stop_ms=1_250, windows=1)
        assert route_rooms(_decisions(False, True, False), "Walking", gait=gait).gait == gait
        assert route_rooms(_decisions(False, True, False), "Sedentary", gait=gait).gait is None


class TestStatusRouter:
    def _router(self) -> StatusRouter:
        router = StatusRouter(debounce_windows=2, min_interval_ms=980)
        router.update_presence(PresenceDecision(Room.BEDROOM, False, 0.0, 0))
        router.update_presence(PresenceDecision(Room.WASHROOM, False, 0.0, 0))
        router.update_presence(PresenceDecision(Room.LIVINGROOM, True, 0.0, 0))
        return router

    def test_nothing_routed_until_every_room_reports(self) -> None:
        router = StatusRouter()
        assert router.update_presence(PresenceDecision(Room.BEDROOM, True, 0.0, 0)) is None
        assert router.update_presence(PresenceDecision(Room.WASHROOM, False, 0.0, 0)) is None
        emitted = router.update_presence(PresenceDecision(Room.LIVINGROOM, False, 0.0, 0))
        assert emitted is not None and emitted.status is Status.IN_BED

    def test_rooms_without_radar_count_as_vacant(self) -> None:
        router = StatusRouter(rooms=[Room.WASHROOM, Room.BEDROOM])
        assert router.rooms == (Room.BEDROOM, Room.WASHROOM)
        assert router.update_presence(PresenceDecision(Room.BEDROOM, False, 0.0, 0)) is None
        emitted = router.update_presence(PresenceDecision(Room.WASHROOM, False, 0.0, 0))
        assert emitted is not None and emitted.status is Status.OUT_OF_HOME

    def test_at_least_one_room(self) -> None:
        with pytest.raises(ValueError):
            StatusRouter(rooms=[Room.NONE])

    def test_label_needs_two_agreeing_windows(self) -> None:
        router = self._router()
        assert router.update_classification("Sedentary", 0.8, 1_000) is None
        emitted = router.update_classification("Sedentary", 0.7, 1_250)
        assert emitted is not None
        assert (emitted.status, emitted.confidence) == (Status.SEDENTARY, 0.7)

    def test_single_window_flicker_is_ignored(self) -> None:
        router = self._router()
        router.update_classification("Sedentary", 0.9, 1_000)
        router.update_classification("Sedentary", 0.9, 1_250)
        assert router.update_classification("Walking", 0.9, 1_500) is None
        assert router.living_label is Activity.SEDENTARY
        emitted = router.update_classification("Sedentary", 0.9, 2_500)
        assert emitted is not None and emitted.status is Status.SEDENTARY

    def test_unchanged_status_is_rate_limited(self) -> None:
        router = self._router()
        router.update_classification("Washing", 0.9, 1_000)
        first = router.update_classification("Washing", 0.9, 1_250)
        assert first is not None
        assert router.update_classification("Washing", 0.9, 1_500) is None
        repeat = router.update_classification("Washing", 0.9, 2_250)
        assert repeat is not None and repeat.ts_ms == 2_250

    def test_timestamps_never_go_backwards(self) -> None:
        router = self._router()
        router.restore(event(10_000, Status.OUT_OF_HOME))
        router.update_classification("Sedentary", 0.9, 4_000)
        emitted = router.update_classification("Sedentary", 0.9, 5_000)
        assert emitted is not None and emitted.ts_ms == 10_000

    def test_vacant_living_room_clears_the_label(self) -> None:
        router = self._router()
        router.update_classification("Vacuuming", 0.9, 1_000)
        router.update_classification("Vacuuming", 0.9, 1_250)
        out = router.update_presence(PresenceDecision(Room.LIVINGROOM, False, 0.0, 2_500))
        assert out is not None and out.status is Status.OUT_OF_HOME
        router.update_presence(PresenceDecision(Room.LIVINGROOM, True, 0.0, 3_500))
        assert router.living_label is None

    def test_walking_events_report_gait_span(self) -> None:
        router = self._router()
        router.update_classification("Walking", 0.9, 1_000, window_end_ms=2_250)
        emitted = router.update_classification("Walking", 0.9, 1_250, window_end_ms=2_500)
        assert emitted is not None and emitted.gait is not None
        assert (emitted.gait.start_ms, emitted.gait.stop_ms, emitted.gait.windows) == (1_250, 2_500, 1)


class TestDailyReport:
    def test_night_in_bed(self) -> None:
        events = [event(START, Status.IN_BED), event(START + 8 * HOUR, Status.SEDENTARY)]
        report = accumulate_report(events, DAY, cadence_ms=8 * HOUR)
        assert report.sleep_minutes == 480
        assert report.sedentary_minutes == 960
        assert report.unknown_minutes == 0
        assert report.current_status == "sedentary"

    def test_two_washroom_visits(self) -> None:
        ten = START + 10 * HOUR
        events = [
            event(ten, Status.IN_WASHROOM),
            event(ten + 5 * MINUTE, Status.SEDENTARY),
            event(ten + 20 * MINUTE, Status.IN_WASHROOM),
            event(ten + 24 * MINUTE, Status.SEDENTARY),
        ]
        report = accumulate_report(events, DAY, cadence_ms=HOUR, now_ms=ten + 30 * MINUTE)
        assert report.washroom_visits == 2
        assert report.washroom_minutes == 9
        assert report.sedentary_minutes == 21
        assert report.unknown_minutes == 600

    def test_repeated_washroom_events_are_one_visit(self) -> None:
        events = [event(START + s * 1000, Status.IN_WASHROOM) for s in range(0, 60, 2)]
        assert accumulate_report(events, DAY, cadence_ms=2_000, now_ms=START + 60_000).washroom_visits == 1

    def test_day_without_events(self) -> None:
        report = accumulate_report([], DAY)
        assert report.no_data
        assert report.sleep_minutes == report.walking_minutes == 0
        assert report.current_status == "unknown"

    def test_events_of_other_days_only(self) -> None:
        report = accumulate_report([event(START - HOUR, Status.IN_BED)], DAY)
        assert report.no_data

    def test_status_carries_over_midnight(self) -> None:
        events = [event(START - HOUR, Status.IN_BED), event(START + 2 * HOUR, Status.WALKING)]
        report = accumulate_report(events, DAY, cadence_ms=4 * HOUR, now_ms=START + 3 * HOUR)
        assert report.sleep_minutes == 120
        assert report.walking_minutes == 60

    def test_long_gap_is_unknown(self) -> None:
        events = [
            event(START, Status.SEDENTARY),
            event(START + MINUTE, Status.SEDENTARY),
            event(START + 2 * MINUTE, Status.OUT_OF_HOME),
            event(START + 60 * MINUTE, Status.SEDENTARY),
        ]
        report = accumulate_report(events, DAY, now_ms=START + 61 * MINUTE)
        assert median_cadence_ms(events) == MINUTE
        assert report.sedentary_minutes == 3
        assert report.out_of_home_minutes == 0
        assert report.unknown_minutes == 58

    def test_unsorted_events_rejected(self) -> None:
        with pytest.raises(UnsortedEvents):
            accumulate_report([event(START + 5_000, Status.IN_BED), event(START, Status.IN_BED)], DAY)

    def test_report_is_idempotent(self) -> None:
        events = _random_stream(np.random.default_rng(99))
        assert accumulate_report(events, DAY, cadence_ms=600_000) == accumulate_report(
            events, DAY, cadence_ms=600_000
        )

    def test_random_streams_match_per_second_sweep(self) -> None:
        rng = np.random.default_rng(2026)
        for _ in range(100):
            events = _random_stream(rng)
            cadence = int(rng.choice([60_000, 600_000, 3_600_000]))
            now = START + int(rng.integers(1, 86_400 + 7_200)) * 1000 if rng.random() < 0.3 else None
            end = END if now is None else max(START, min(END, now))
            report = accumulate_report(events, DAY, cadence_ms=cadence, now_ms=now)
            if not any(START <= e.ts_ms < END for e in events):
                assert report.no_data
                continue

            counts, unknown = _sweep(events, cadence, end)
            for status in Status:
                assert report.per_status_minutes.get(status.value, 0.0) * 60 == pytest.approx(
                    counts.get(status, 0), abs=1e-6
                )
            assert report.unknown_minutes * 60 == pytest.approx(unknown, abs=1e-6)
            covered = sum(report.per_status_minutes.values()) + report.unknown_minutes
            assert covered == pytest.approx((end - START) / MINUTE, abs=1e-6)
            assert covered <= 1441

            visits = sum(
                1
                for i, e in enumerate(events)
                if START <= e.ts_ms < end
                and e.status is Status.IN_WASHROOM
                and (i == 0 or events[i - 1].status is not Status.IN_WASHROOM)
            )
            assert report.washroom_visits == visits


class TestCurrentStatus:
    def test_empty_stream_is_unknown(self) -> None:
        assert current_status([], now_ms=0).status == "unknown"

    def test_age_of_last_event(self) -> None:
        status = current_status([event(1_000, Status.IN_BED), event(7_000, Status.WALKING)], now_ms=10_000)
        assert (status.status, status.age_ms) == ("walking", 3_000)


def test_day_helpers() -> None:
    assert END - START == 86_400_000
    assert day_of(START) == DAY
    assert day_of(END - 1) == DAY
    assert day_of(END) == "2026-03-15"
    with pytest.raises(ValueError):
        day_bounds("2026-13-01")
