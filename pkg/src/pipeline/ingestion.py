"""Message ingestion pipeline for the RoomWave aggregator.

This module provides the ``StatusPipeline`` class that turns wire messages
from the edge nodes into persisted ``RoomEvent`` records: duplicate
suppression, living-room inference, room routing, durable append and an
optional real-time broadcast via WebSocket.  The service drives it one
message at a time through ``process_message``.
"""

from __future__ import annotations

import asyncio
import logging
from collections.abc import Callable, Coroutine, Sequence
from typing import Any

from src.models.event_store import EventStore
from src.models.gru import GruModel, predict
from src.pipeline.presence_pad import PresenceDecision
from src.pipeline.status_engine import StatusRouter
from src.schemas.schemas import MONITORED_ROOMS, Room, RoomEvent
from src.telemetry.protocol import MessageType, WireMessage

logger = logging.getLogger(__name__)

# Type alias for the optional WebSocket broadcast callback.
BroadcastCallback = Callable[[dict[str, Any]], Coroutine[Any, Any, None]]

ACKED_TYPES = frozenset({MessageType.PRESENCE, MessageType.JTF_WINDOW})
"""Message types the service acknowledges with a ``status_result`` frame."""


class StatusPipeline:
    """Edge messages in, durable status events out.

    Presence messages update the router's per-room state; living-room JTF
    windows are classified by the GRU and fed to the router as well.  Every
    event the router emits is appended to the store before the call
    returns, so an acknowledgement sent afterwards implies durability.

    Args:
        model: Trained classifier, shared read-only across windows.
        store: Event log; the router resumes from its last event.
        debounce_windows: Identical classifications required before the
            living-room status changes.
        broadcast_callback: Optional async callable invoked with each new
            event.  Designed for WebSocket push to live dashboards.
        rooms: Rooms with an edge; messages from any other room are dropped.

    Attributes:
        processed_count: Messages accepted (duplicates excluded).
        duplicate_count: Messages dropped as replays.
        event_count: Events appended by this pipeline.
    """

    def __init__(
        self,
        model: GruModel,
        store: EventStore,
        debounce_windows: int = 2,
        broadcast_callback: BroadcastCallback | None = None,
        rooms: Sequence[Room] = MONITORED_ROOMS,
    ) -> None:
        self.model = model
        self.store = store
        self.broadcast_callback = broadcast_callback
        self.router = StatusRouter(debounce_windows=debounce_windows, rooms=rooms)
        self.router.restore(store.last_event)
        self._last_seen: dict[tuple[Room, MessageType], int] = {}
        self._route_lock = asyncio.Lock()
        self.processed_count: int = 0
        self.duplicate_count: int = 0
        self.event_count: int = 0

    def is_duplicate(self, msg: WireMessage) -> bool:
        """True when ``msg`` is not newer than the last message of its room and type."""
        last = self._last_seen.get((msg.room, msg.msg_type))
        return last is not None and msg.timestamp_ms <= last

    async def process_message(self, msg: WireMessage) -> RoomEvent | None:
        """Process a single wire message through the pipeline.

        Steps:
            1. Deduplicate: skip replays of already processed messages.
            2. Classify living-room JTF windows (off the event loop).
            3. Route the room decisions and the classification.
            4. Persist and broadcast the resulting event, if any.

        Args:
            msg: Decoded message from an edge.

        Returns:
            The appended event, or ``None`` when nothing changed.
        """
        if msg.msg_type not in ACKED_TYPES:
            if msg.msg_type is MessageType.STATUS_RESULT:
                logger.warning("Ignoring status_result sent by the %s edge", msg.room)
            return None
        if msg.room not in self.router.rooms:
            logger.warning("Dropping %s from unconfigured room %s", msg.msg_type.name, msg.room)
            return None

        # --- 1. Duplicate check -------------------------------------------
        if self.is_duplicate(msg):
            self.duplicate_count += 1
            logger.warning(
                "Duplicate %s from %s at %d ms -- skipping", msg.msg_type.name, msg.room, msg.timestamp_ms
            )
            return None

        # --- 2. Classify -----------------------------------------------------
        label: str | None = None
        confidence = 1.0
        if msg.msg_type is MessageType.JTF_WINDOW:
            if msg.room is not Room.LIVINGROOM:
                logger.warning("Dropping JTF window from %s: only the living room is classified", msg.room)
                return None
            label, confidence = await asyncio.to_thread(predict, self.model, msg.window())
            logger.debug("Window at %d ms -> %s (%.2f)", msg.timestamp_ms, label, confidence)

        # --- 3. Route and 4. persist ------------------------------------------
        async with self._route_lock:
            self._last_seen[(msg.room, msg.msg_type)] = msg.timestamp_ms
            self.processed_count += 1
            if label is None:
                decision = PresenceDecision(
                    room=msg.room,
                    occupied=msg.occupied,
                    energy=0.0,
                    timestamp_ms=msg.timestamp_ms,
                    raw_occupied=msg.occupied,
                )
                event = self.router.update_presence(decision)
            else:
                event = self.router.update_classification(label, confidence, msg.timestamp_ms)
            if event is None:
                return None
            await asyncio.to_thread(self.store.append, event)
            self.event_count += 1

        logger.info("Event %s/%s at %d ms", event.room, event.status, event.ts_ms)
        if self.broadcast_callback is not None:
            await self.broadcast_callback(event.model_dump(mode="json", exclude_none=True))
        return event
