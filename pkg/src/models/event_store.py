"""Append-only JSON-lines event log.

This module provides:

- ``EventStore``: durable single-writer log of ``RoomEvent`` records with
  in-memory indexing for report queries.
- ``read_events``: offline reader used by the ``report`` command.
- ``get_store`` / ``set_store``: process-wide store handle for the HTTP routes.

Every append is flushed and fsynced before it returns, so an event the
service has acknowledged survives a restart.  On open, a torn final line
(left by a crash mid-write) is truncated away by the writer; readers always see a
consistent prefix of whole events.
"""

from __future__ import annotations

import bisect
import json
import logging
import os
import threading
from pathlib import Path
from typing import BinaryIO

from pydantic import ValidationError

from src.errors import FormatVersionMismatch, NoData, UnsortedEvents
from src.pipeline.status_engine import accumulate_report, day_bounds
from src.schemas.schemas import FORMAT_VERSION, DailyReport, RoomEvent

logger = logging.getLogger(__name__)


def _parse_line(raw: bytes) -> RoomEvent:
    record = json.loads(raw)
    if record.get("v") != FORMAT_VERSION:
        raise FormatVersionMismatch(f"event version {record.get('v')} != {FORMAT_VERSION}")
    return RoomEvent.model_validate(record)


def _scan(path: Path) -> tuple[list[RoomEvent], int]:
    """Parse whole lines; return events and the byte length of the valid prefix."""
    events: list[RoomEvent] = []
    good = 0
    with path.open("rb") as fh:
        data = fh.read()
    offset = 0
    while offset < len(data):
        end = data.find(b"\n", offset)
        if end < 0:
            logger.warning("Torn final line in %s at byte %d", path, offset)
            break
        line = data[offset:end]
        if line.strip():
            try:
                events.append(_parse_line(line))
            except (json.JSONDecodeError, ValidationError):
                if end + 1 >= len(data):
                    logger.warning("Unreadable final line in %s at byte %d", path, offset)
                    break
                logger.error("Skipping corrupt event line in %s at byte %d", path, offset)
        offset = end + 1
        good = offset
    return events, good


def read_events(path: str | Path) -> list[RoomEvent]:
    """All whole events of a log, without modifying it."""
    path = Path(path)
    if not path.exists():
        return []
    return _scan(path)[0]


class EventStore:
    """Durable, time-ordered event log.

    One writer appends; any number of readers take snapshots.  Appends with
    a timestamp older than the last stored event are rejected.

    A ``read_only`` store never truncates or appends.  It re-reads the file
    whenever its size changed since the last query, so it follows a log
    that another process owns; a line still being written is not visible
    until it is complete.

    Args:
        path: Log file; created with its parent directory if missing.
        fsync: Force each append to stable storage before returning.
        read_only: Follow the log without taking ownership of it.
    """

    def __init__(self, path: str | Path, fsync: bool = True, read_only: bool = False) -> None:
        self.path = Path(path)
        self.fsync = fsync
        self.read_only = read_only
        self._lock = threading.Lock()
        self._events: list[RoomEvent] = []
        self._stamps: list[int] = []
        self._fh: BinaryIO | None = None
        self._seen_size = -1
        if read_only:
            self._refresh()
            logger.info("Event log %s opened read-only with %d events", self.path, len(self._events))
            return

        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            self._events, good = _scan(self.path)
            if good < self.path.stat().st_size:
                logger.warning("Truncating %s to its last whole event (%d bytes)", self.path, good)
                with self.path.open("r+b") as fh:
                    fh.truncate(good)
                    os.fsync(fh.fileno())
            logger.info("Event log %s recovered with %d events", self.path, len(self._events))
        else:
            logger.info("Event log %s created", self.path)
        self._stamps = [e.ts_ms for e in self._events]
        self._fh = self.path.open("ab")

    def _refresh(self) -> None:
        if not self.read_only:
            return
        size = self.path.stat().st_size if self.path.exists() else 0
        with self._lock:
            if size == self._seen_size:
                return
            events, _ = _scan(self.path) if size else ([], 0)
            self._events = events
            self._stamps = [e.ts_ms for e in events]
            self._seen_size = size

    # ------------------------------------------------------------------
    # Writing
    # ------------------------------------------------------------------

    def append(self, event: RoomEvent) -> None:
        """Persist one event.

        Raises:
            UnsortedEvents: ``event`` is older than the last stored event.
            RuntimeError: The store is read-only or closed.
        """
        with self._lock:
            if self._fh is None or self._fh.closed:
                raise RuntimeError(f"event log {self.path} is not open for appending")
            if self._stamps and event.ts_ms < self._stamps[-1]:
                raise UnsortedEvents(f"event at {event.ts_ms} ms is older than {self._stamps[-1]} ms")
            self._fh.write(event.to_line().encode("utf-8") + b"\n")
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
            self._events.append(event)
            self._stamps.append(event.ts_ms)

    def close(self) -> None:
        with self._lock:
            if self._fh is not None and not self._fh.closed:
                self._fh.close()

    def __enter__(self) -> EventStore:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # ------------------------------------------------------------------
    # Reading
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        self._refresh()
        return len(self._stamps)

    @property
    def last_event(self) -> RoomEvent | None:
        self._refresh()
        with self._lock:
            return self._events[-1] if self._events else None

    def events(self) -> list[RoomEvent]:
        """Snapshot of every stored event."""
        self._refresh()
        with self._lock:
            return list(self._events)

    def events_between(self, start_ms: int, end_ms: int) -> list[RoomEvent]:
        """Events with ``start_ms <= ts_ms < end_ms``."""
        self._refresh()
        with self._lock:
            lo = bisect.bisect_left(self._stamps, start_ms)
            hi = bisect.bisect_left(self._stamps, end_ms)
            return self._events[lo:hi]

    def events_for_day(self, day: str) -> list[RoomEvent]:
        """Events of a UTC day plus the neighbours that bound its first and last intervals.

        Raises:
            NoData: No event falls on the day.
        """
        start_ms, end_ms = day_bounds(day)
        self._refresh()
        with self._lock:
            lo = bisect.bisect_left(self._stamps, start_ms)
            hi = bisect.bisect_left(self._stamps, end_ms)
            if lo == hi:
                raise NoData(f"no events on {day}")
            return self._events[max(lo - 1, 0) : hi + 1]

    def report(self, day: str, now_ms: int | None = None) -> DailyReport:
        """Daily report computed from the persisted log.

        A day without events yields an all-zero report flagged ``no_data``.
        """
        try:
            events = self.events_for_day(day)
        except NoData:
            logger.info("No events on %s; returning an empty report", day)
            return accumulate_report([], day)
        return accumulate_report(events, day, now_ms=now_ms)


_store: EventStore | None = None


def set_store(store: EventStore | None) -> None:
    """Install the store the HTTP routes read from."""
    global _store
    _store = store


def get_store() -> EventStore:
    """FastAPI dependency returning the process-wide store."""
    if _store is None:
        raise RuntimeError("event store is not open")
    return _store
