"""Aggregator pipeline tests: routing, classification, dedup and persistence."""

from __future__ import annotations

from collections.abc import Iterable
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from src.models.event_store import EventStore, read_events
from src.models.gru import GruModel
from src.pipeline.ingestion import StatusPipeline
from src.schemas.schemas import Room, RoomEvent, Status
from src.telemetry.protocol import WireMessage

WINDOW = np.random.default_rng(0).uniform(0, 1, (50, 256))


def _walking_model(model: GruModel) -> GruModel:
    model.fc[-1].W[...] = 0.0
    model.fc[-1].b[5] = 10.0
    return model


def _presence(bedroom: bool, livingroom: bool, washroom: bool, ts: int) -> list[WireMessage]:
    return [
        WireMessage.presence(Room.BEDROOM, ts, bedroom),
        WireMessage.presence(Room.LIVINGROOM, ts, livingroom),
        WireMessage.presence(Room.WASHROOM, ts, washroom),
    ]


async def _feed(pipeline: StatusPipeline, messages: Iterable[WireMessage]) -> list[RoomEvent]:
    events = []
    for msg in messages:
        if (event := await pipeline.process_message(msg)) is not None:
            events.append(event)
    return events


@pytest.mark.asyncio
async def test_presence_only_events(store: EventStore, tiny_model: GruModel) -> None:
    pipeline = StatusPipeline(tiny_model, store)
    events = await _feed(
        pipeline,
        [
            *_presence(True, False, False, 1_000),
            WireMessage.presence(Room.WASHROOM, 2_000, True),
            WireMessage.presence(Room.BEDROOM, 2_000, False),
            WireMessage.presence(Room.LIVINGROOM, 2_000, False),
        ],
    )
    assert [e.status for e in store.events()] == [Status.IN_BED, Status.IN_WASHROOM]
    assert events == store.events()
    assert pipeline.processed_count == 6
    assert pipeline.event_count == 2


@pytest.mark.asyncio
async def test_living_room_windows_are_classified(store: EventStore, tiny_model: GruModel) -> None:
    pipeline = StatusPipeline(_walking_model(tiny_model), store, debounce_windows=2)
    await _feed(pipeline, _presence(False, True, False, 1_000))
    assert len(store) == 0

    first = await pipeline.process_message(WireMessage.jtf_window(Room.LIVINGROOM, 1_250, WINDOW))
    assert first is None
    second = await pipeline.process_message(WireMessage.jtf_window(Room.LIVINGROOM, 1_500, WINDOW))
    assert second is not None
    assert second.status is Status.WALKING
    assert second.confidence > 0.99
    assert second.gait is not None
    assert store.last_event == second


@pytest.mark.asyncio
async def test_replayed_messages_are_dropped(store: EventStore, tiny_model: GruModel) -> None:
    pipeline = StatusPipeline(tiny_model, store)
    messages = _presence(True, False, False, 1_000)
    await _feed(pipeline, messages + messages + [WireMessage.presence(Room.BEDROOM, 900, False)])
    assert pipeline.duplicate_count == 4
    assert pipeline.processed_count == 3
    assert len(store) == 1


@pytest.mark.asyncio
async def test_windows_from_other_rooms_ignored(store: EventStore, tiny_model: GruModel) -> None:
    pipeline = StatusPipeline(tiny_model, store)
    assert await pipeline.process_message(WireMessage.jtf_window(Room.BEDROOM, 1_000, WINDOW)) is None
    assert await pipeline.process_message(WireMessage.heartbeat(Room.BEDROOM, 1_000)) is None
    assert pipeline.processed_count == 0


@pytest.mark.asyncio
async def test_unconfigured_rooms_are_dropped(store: EventStore, tiny_model: GruModel) -> None:
    pipeline = StatusPipeline(tiny_model, store, rooms=[Room.BEDROOM, Room.LIVINGROOM])
    await _feed(pipeline, _presence(False, False, True, 1_000))
    assert pipeline.processed_count == 2
    assert [e.status for e in store.events()] == [Status.OUT_OF_HOME]


@pytest.mark.asyncio
async def test_events_are_broadcast(store: EventStore, tiny_model: GruModel) -> None:
    received: list[dict[str, Any]] = []

    async def collect(payload: dict[str, Any]) -> None:
        received.append(payload)

    pipeline = StatusPipeline(tiny_model, store, broadcast_callback=collect)
    await _feed(pipeline, _presence(False, False, False, 5_000))
    assert received == [{"v": 1, "ts_ms": 5_000, "room": "none", "status": "out_of_home", "confidence": 1.0}]


@pytest.mark.asyncio
async def test_restart_resumes_after_the_last_event(tmp_path: Path, tiny_model: GruModel) -> None:
    path = tmp_path / "events.jsonl"
    with EventStore(path, fsync=False) as store:
        await _feed(StatusPipeline(tiny_model, store), _presence(True, False, False, 10_000))

    with EventStore(path, fsync=False) as store:
        pipeline = StatusPipeline(tiny_model, store)
        # a late edge still reporting older horizons must not rewind the log
        event = None
        for msg in _presence(False, False, True, 8_000):
            event = await pipeline.process_message(msg) or event
        assert event is not None
        assert event.ts_ms == 10_000

    assert [e.status for e in read_events(path)] == [Status.IN_BED, Status.IN_WASHROOM]
