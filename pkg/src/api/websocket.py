"""Live status push to dashboard WebSockets."""
from __future__ import annotations

import logging
from typing import Any, Literal

from fastapi import WebSocket
from pydantic import BaseModel, ConfigDict

from src.schemas.schemas import CurrentStatus

logger = logging.getLogger(__name__)


class StatusFrame(BaseModel):
    """One message on ``/ws/status``.

    ``connected`` carries the current status and its age; ``event`` carries
    a ``RoomEvent`` just appended to the log.
    """

    model_config = ConfigDict(extra="allow")

    type: Literal["connected", "event"]


class StatusBroadcaster:
    """Dashboard sockets following the status stream.

    ``push_event`` has the shape of the status pipeline's broadcast
    callback, so the service hands it over directly.
    """

    def __init__(self) -> None:
        self.clients: list[WebSocket] = []

    async def connect(self, websocket: WebSocket, status: CurrentStatus) -> None:
        """Accept ``websocket``, greet it with ``status`` and start pushing events to it."""
        await websocket.accept()
        greeting = StatusFrame(type="connected", **status.model_dump(mode="json"))
        await websocket.send_json(greeting.model_dump(mode="json"))
        self.clients.append(websocket)
        logger.info("Status client connected (%d following)", len(self.clients))

    def disconnect(self, websocket: WebSocket) -> None:
        if websocket in self.clients:
            self.clients.remove(websocket)
            logger.info("Status client left (%d following)", len(self.clients))

    async def push_event(self, event: dict[str, Any]) -> None:
        """Send one appended event to every client; clients that fail are dropped."""
        frame = StatusFrame(type="event", **event).model_dump(mode="json")
        for client in list(self.clients):
            try:
                await client.send_json(frame)
            except Exception as exc:
                logger.debug("Dropping status client: %s", exc)
                self.disconnect(client)


broadcaster = StatusBroadcaster()
