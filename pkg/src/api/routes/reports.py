"""Daily report and current status endpoints for the RoomWave dashboards."""
from __future__ import annotations

import logging
import time

from fastapi import APIRouter, Depends, HTTPException, Query

from src.models.event_store import EventStore, get_store
from src.pipeline.status_engine import current_status, day_bounds
from src.schemas.schemas import CurrentStatus, DailyReport

logger = logging.getLogger(__name__)

reports_router = APIRouter(prefix="/api/reports", tags=["reports"])
status_router = APIRouter(prefix="/api/status", tags=["status"])


def _now_ms() -> int:
    return int(time.time() * 1000)


@reports_router.get("/{date}", response_model=DailyReport)
async def get_report(
    date: str,
    now_ms: int | None = Query(default=None, ge=0, description="Query time in epoch ms (default: now)"),
    store: EventStore = Depends(get_store),
) -> DailyReport:
    """Compute the daily report of one UTC day from the persisted log.

    A day without events answers with an all-zero report flagged
    ``no_data`` rather than a 404.

    Args:
        date: Day in ``YYYY-MM-DD`` form.
        now_ms: Time the last event of the day counts up to.
        store: Event log dependency.

    Returns:
        The ``DailyReport`` of ``date``.
    """
    try:
        day_bounds(date)
    except ValueError:
        raise HTTPException(status_code=400, detail=f"Invalid date '{date}'. Expected YYYY-MM-DD") from None
    return store.report(date, now_ms=now_ms if now_ms is not None else _now_ms())


@status_router.get("", response_model=CurrentStatus)
async def get_status(store: EventStore = Depends(get_store)) -> CurrentStatus:
    """Latest status and how long ago it was recorded."""
    last = store.last_event
    return current_status([last] if last else [], now_ms=_now_ms())
