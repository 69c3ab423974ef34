"""Event log durability, ordering and query tests."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from src.errors import FormatVersionMismatch, NoData, UnsortedEvents
from src.models.event_store import EventStore, get_store, read_events, set_store
from src.pipeline.status_engine import accumulate_report, day_bounds
from src.schemas.schemas import Status
from tests.conftest import event

DAY = "2026-03-14"
START, END = day_bounds(DAY)
HOUR = 3_600_000


class TestAppend:
    def test_events_are_one_json_line_each(self, store: EventStore) -> None:
        store.append(event(START, Status.IN_BED))
        store.append(event(START + 1_000, Status.WALKING))
        lines = store.path.read_text().splitlines()
        assert len(lines) == 2
        record = json.loads(lines[1])
        assert record == {"v": 1, "ts_ms": START + 1_000, "room": "livingroom", "status": "walking", "confidence": 1.0}

    def test_older_event_rejected_and_state_kept(self, store: EventStore) -> None:
        store.append(event(START + 5_000, Status.WALKING))
        with pytest.raises(UnsortedEvents):
            store.append(event(START + 4_999, Status.IN_BED))
        assert len(store) == 1
        assert store.last_event.status is Status.WALKING
        assert len(store.path.read_text().splitlines()) == 1

    def test_equal_timestamps_accepted(self, store: EventStore) -> None:
        store.append(event(START, Status.IN_BED))
        store.append(event(START, Status.IN_WASHROOM))
        assert len(store) == 2


class TestRecovery:
    def test_reopen_keeps_every_event(self, tmp_path: Path) -> None:
        path = tmp_path / "events.jsonl"
        with EventStore(path, fsync=False) as first:
            for offset in range(5):
                first.append(event(START + offset * 1_000, Status.SEDENTARY))
        with EventStore(path, fsync=False) as second:
            assert [e.ts_ms for e in second.events()] == [START + o * 1_000 for o in range(5)]
            second.append(event(START + 10_000, Status.WALKING))
        assert len(read_events(path)) == 6

    def test_torn_final_line_is_truncated(self, tmp_path: Path) -> None:
        path = tmp_path / "events.jsonl"
        with EventStore(path, fsync=False) as first:
            first.append(event(START, Status.IN_BED))
        intact = path.stat().st_size
        with path.open("ab") as fh:
            fh.write(b'{"v":1,"ts_ms":')
        with EventStore(path, fsync=False) as second:
            assert len(second) == 1
            assert path.stat().st_size == intact
            second.append(event(START + 1_000, Status.IN_BED))
        assert [e.ts_ms for e in read_events(path)] == [START, START + 1_000]

    def test_corrupt_middle_line_is_skipped(self, tmp_path: Path) -> None:
        path = tmp_path / "events.jsonl"
        good = event(START, Status.IN_BED).to_line()
        later = event(START + 1_000, Status.WALKING).to_line()
        path.write_text(f"{good}\nnot json\n{later}\n")
        with EventStore(path, fsync=False) as store:
            assert [e.status for e in store.events()] == [Status.IN_BED, Status.WALKING]

    def test_other_record_version_rejected(self, tmp_path: Path) -> None:
        path = tmp_path / "events.jsonl"
        path.write_text('{"v":2,"ts_ms":0,"room":"bedroom","status":"in_bed"}\n')
        with pytest.raises(FormatVersionMismatch):
            EventStore(path, fsync=False)

    def test_missing_log_reads_as_empty(self, tmp_path: Path) -> None:
        assert read_events(tmp_path / "absent.jsonl") == []


class TestQueries:
    @pytest.fixture
    def filled(self, store: EventStore) -> EventStore:
        store.append(event(START - HOUR, Status.IN_BED))
        store.append(event(START + 2 * HOUR, Status.IN_WASHROOM))
        store.append(event(START + 2 * HOUR + 600_000, Status.SEDENTARY))
        store.append(event(END + HOUR, Status.WALKING))
        return store

    def test_events_between(self, filled: EventStore) -> None:
        assert [e.status for e in filled.events_between(START, END)] == [Status.IN_WASHROOM, Status.SEDENTARY]

    def test_day_includes_bounding_neighbours(self, filled: EventStore) -> None:
        statuses = [e.status for e in filled.events_for_day(DAY)]
        assert statuses == [Status.IN_BED, Status.IN_WASHROOM, Status.SEDENTARY, Status.WALKING]

    def test_day_without_events(self, filled: EventStore) -> None:
        with pytest.raises(NoData):
            filled.events_for_day("2026-03-20")
        assert filled.report("2026-03-20").no_data

    def test_report_from_log(self, store: EventStore) -> None:
        store.append(event(START - HOUR, Status.IN_BED))
        store.append(event(START + 2 * HOUR, Status.IN_WASHROOM))
        store.append(event(START + 2 * HOUR + 600_000, Status.SEDENTARY))
        report = store.report(DAY, now_ms=START + 3 * HOUR)
        assert report.sleep_minutes == 120
        assert report.washroom_visits == 1
        assert report.washroom_minutes == 10
        assert report.sedentary_minutes == 50
        assert report.current_status == "sedentary"

    def test_report_is_stable_across_reopen(self, filled: EventStore) -> None:
        before = filled.report(DAY, now_ms=START + 3 * HOUR)
        filled.close()
        with EventStore(filled.path, fsync=False) as reopened:
            assert reopened.report(DAY, now_ms=START + 3 * HOUR) == before

    def test_report_cadence_ignores_busier_days(self, store: EventStore) -> None:
        for step in range(10):
            store.append(event(START + step * 600_000, Status.SEDENTARY))
        before = store.report(DAY)
        assert before.sedentary_minutes == 90

        # the next day reports every second
        for step in range(1_000):
            store.append(event(END + step * 1_000, Status.WALKING))
        after = store.report(DAY)
        assert after == before
        assert after == accumulate_report(read_events(store.path), DAY)
        assert store.report("2026-03-15", now_ms=END + 1_000_000) == accumulate_report(
            read_events(store.path), "2026-03-15", now_ms=END + 1_000_000
        )


class TestReadOnly:
    def test_follows_a_writer(self, store: EventStore) -> None:
        view = EventStore(store.path, read_only=True)
        assert len(view) == 0
        store.append(event(START, Status.IN_BED))
        store.append(event(START + HOUR, Status.IN_WASHROOM))
        assert [e.status for e in view.events()] == [Status.IN_BED, Status.IN_WASHROOM]
        assert view.last_event == store.last_event
        assert view.report(DAY, now_ms=START + 2 * HOUR) == store.report(DAY, now_ms=START + 2 * HOUR)

    def test_torn_tail_left_in_place(self, tmp_path: Path) -> None:
        path = tmp_path / "events.jsonl"
        with EventStore(path, fsync=False) as writer:
            writer.append(event(START, Status.IN_BED))
        with path.open("ab") as fh:
            fh.write(b'{"v":1,"ts_ms":')
        size = path.stat().st_size
        view = EventStore(path, read_only=True)
        assert [e.ts_ms for e in view.events()] == [START]
        assert path.stat().st_size == size

    def test_append_refused(self, store: EventStore) -> None:
        view = EventStore(store.path, read_only=True)
        with pytest.raises(RuntimeError):
            view.append(event(START, Status.IN_BED))
        assert store.path.read_text() == ""

    def test_missing_log_is_not_created(self, tmp_path: Path) -> None:
        path = tmp_path / "later" / "events.jsonl"
        with EventStore(path, read_only=True) as view:
            assert len(view) == 0
            assert view.last_event is None
            assert view.report(DAY).no_data
        assert not path.parent.exists()


def test_route_store_handle(store: EventStore) -> None:
    set_store(None)
    with pytest.raises(RuntimeError):
        get_store()
    set_store(store)
    try:
        assert get_store() is store
    finally:
        set_store(None)
