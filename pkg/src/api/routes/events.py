"""Raw event listing for the RoomWave dashboards."""
from __future__ import annotations

import logging

from fastapi import APIRouter, Depends, HTTPException, Query

from src.models.event_store import EventStore, get_store
from src.pipeline.status_engine import day_bounds
from src.schemas.schemas import Room, RoomEvent

logger = logging.getLogger(__name__)

events_router = APIRouter(prefix="/api/events", tags=["events"])


@events_router.get("", response_model=list[RoomEvent], response_model_exclude_none=True)
async def get_events(
    date: str = Query(..., description="UTC day, YYYY-MM-DD"),
    room: Room | None = Query(default=None, description="Only events of this room"),
    store: EventStore = Depends(get_store),
) -> list[RoomEvent]:
    """List the events of one UTC day in log order.

    Args:
        date: Day in ``YYYY-MM-DD`` form.
        room: Optional room filter.
        store: Event log dependency.

    Returns:
        Events with a timestamp inside the day.
    """
    try:
        start_ms, end_ms = day_bounds(date)
    except ValueError:
        raise HTTPException(status_code=400, detail=f"Invalid date '{date}'. Expected YYYY-MM-DD") from None
    events = store.events_between(start_ms, end_ms)
    if room is not None:
        events = [e for e in events if e.room == room]
    return events
