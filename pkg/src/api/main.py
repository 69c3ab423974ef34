"""FastAPI application entry point for the RoomWave report and status API."""
from __future__ import annotations

import logging
import time
from collections.abc import AsyncIterator
from contextlib import asynccontextmanager

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware

from src.api.routes.events import events_router
from src.api.routes.reports import reports_router, status_router
from src.api.websocket import broadcaster
from src.config import settings
from src.models.event_store import EventStore, get_store, set_store
from src.pipeline.status_engine import current_status

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI) -> AsyncIterator[None]:
    """Follow the event log for a standalone API process.

    The log is opened read-only: a running service may own it, and every
    request sees what the service has appended since.  When the service
    hosts the app it installs its own store and this handler is not run.

    Args:
        app: The FastAPI application instance.
    """
    store = EventStore(settings.store_path, read_only=True)
    set_store(store)
    logger.info("RoomWave API following %s (%d events)", settings.store_path, len(store))
    try:
        yield
    finally:
        set_store(None)
        store.close()


app = FastAPI(
    title="RoomWave API",
    description="Daily activity reports and live room status from the radar event log",
    version="1.0.0",
    lifespan=lifespan,
)

# CORS middleware for local dashboards
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(reports_router)
app.include_router(status_router)
app.include_router(events_router)


# ---------------------------------------------------------------------------
# WebSocket endpoint
# ---------------------------------------------------------------------------
@app.websocket("/ws/status")
async def websocket_status(websocket: WebSocket) -> None:
    """Current status on connect, then every new event until the client leaves."""
    try:
        last = get_store().last_event
    except RuntimeError:
        last = None
    await broadcaster.connect(websocket, current_status([last] if last else [], now_ms=int(time.time() * 1000)))
    try:
        while True:
            await websocket.receive_text()
    except WebSocketDisconnect:
        broadcaster.disconnect(websocket)
