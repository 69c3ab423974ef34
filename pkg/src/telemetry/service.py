"""Aggregator service: edge connections in, status events and reports out.

The service listens on two TCP ports:

- the wire port, where edges stream ``WireMessage`` frames and receive a
  ``status_result`` acknowledgement for every presence and JTF message;
- the report port, answering newline-delimited JSON queries
  (``{"op": "report", "date": "YYYY-MM-DD"}`` or ``{"op": "status"}``).

When ``http_port`` is set, the FastAPI app is served from the same event
loop by uvicorn.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import logging
import time

import uvicorn
from pydantic import ValidationError

from src.config import Settings
from src.errors import ProtocolError
from src.formats import load_model
from src.models.event_store import EventStore, set_store
from src.models.gru import GruModel
from src.pipeline.ingestion import ACKED_TYPES, BroadcastCallback, StatusPipeline
from src.pipeline.status_engine import current_status
from src.schemas.schemas import ReportQuery
from src.telemetry.protocol import WireMessage, encode, read_message

logger = logging.getLogger(__name__)


class RoomWaveService:
    """Concurrent edge handlers around one ``StatusPipeline``.

    Args:
        settings: Bind addresses, ports and router settings.
        model: Classifier applied to living-room windows.
        store: Event log; the single writer is the pipeline.
        broadcast_callback: Optional async callable receiving every new event.
    """

    def __init__(
        self,
        settings: Settings,
        model: GruModel,
        store: EventStore,
        broadcast_callback: BroadcastCallback | None = None,
    ) -> None:
        self.settings = settings
        self.store = store
        self.pipeline = StatusPipeline(
            model,
            store,
            debounce_windows=settings.debounce_windows,
            broadcast_callback=broadcast_callback,
            rooms=settings.rooms,
        )
        self._wire: asyncio.AbstractServer | None = None
        self._reports: asyncio.AbstractServer | None = None
        self._http: uvicorn.Server | None = None
        self._http_task: asyncio.Task[None] | None = None
        self._connections: set[asyncio.StreamWriter] = set()
        self.wire_port: int | None = None
        self.report_port: int | None = None

    async def start(self) -> None:
        host = self.settings.bind_host
        self._wire = await asyncio.start_server(self.handle_edge, host, self.settings.bind_port)
        self._reports = await asyncio.start_server(self.handle_query, host, self.settings.report_port)
        self.wire_port = self._wire.sockets[0].getsockname()[1]
        self.report_port = self._reports.sockets[0].getsockname()[1]
        logger.info(
            "RoomWave service listening on %s (wire %d, reports %d) with %d stored events",
            host,
            self.wire_port,
            self.report_port,
            len(self.store),
        )
        if self.settings.http_port is not None:
            from src.api.main import app

            config = uvicorn.Config(
                app,
                host=host,
                port=self.settings.http_port,
                log_level=self.settings.log_level.lower(),
                lifespan="off",
            )
            self._http = uvicorn.Server(config)
            self._http_task = asyncio.create_task(self._http.serve(), name="roomwave-http")
            logger.info("HTTP surface on %s:%d", host, self.settings.http_port)

    async def serve_forever(self) -> None:
        if self._wire is None:
            await self.start()
        assert self._wire is not None
        await self._wire.serve_forever()

    async def stop(self) -> None:
        for server in (self._wire, self._reports):
            if server is not None:
                server.close()
        for writer in list(self._connections):
            writer.close()
        for server in (self._wire, self._reports):
            if server is not None:
                await server.wait_closed()
        if self._http is not None and self._http_task is not None:
            self._http.should_exit = True
            await self._http_task
        logger.info("RoomWave service stopped")

    async def __aenter__(self) -> RoomWaveService:
        await self.start()
        return self

    async def __aexit__(self, *exc: object) -> None:
        await self.stop()

    # ------------------------------------------------------------------
    # Edge connections
    # ------------------------------------------------------------------

    async def handle_edge(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        self._connections.add(writer)
        logger.info("Edge connected from %s", peer)
        try:
            while True:
                msg = await read_message(reader)
                if msg is None:
                    break
                event = await self.pipeline.process_message(msg)
                if msg.msg_type in ACKED_TYPES:
                    ack = WireMessage.status_result(
                        msg.room,
                        msg.timestamp_ms,
                        event.status if event is not None else None,
                        event.confidence if event is not None else 1.0,
                    )
                    writer.write(encode(ack))
                    await writer.drain()
        except ProtocolError as exc:
            logger.warning("Closing edge %s after malformed frame: %s", peer, exc)
        except (ConnectionError, OSError) as exc:
            logger.info("Edge %s disconnected: %s", peer, exc)
        except Exception:
            logger.exception("Edge handler for %s failed", peer)
        finally:
            self._connections.discard(writer)
            writer.close()
            with contextlib.suppress(OSError):
                await writer.wait_closed()

    # ------------------------------------------------------------------
    # Report queries
    # ------------------------------------------------------------------

    def answer(self, line: bytes) -> dict[str, object]:
        """Response to one report-port request line."""
        try:
            query = ReportQuery.model_validate_json(line)
        except ValidationError as exc:
            return {"error": "bad request", "detail": exc.errors(include_url=False)[0]["msg"]}
        now_ms = query.now_ms if query.now_ms is not None else int(time.time() * 1000)
        if query.op == "status":
            last = self.store.last_event
            return current_status([last] if last else [], now_ms=now_ms).model_dump(mode="json")
        if query.date is None:
            return {"error": "bad request", "detail": "report queries need a date"}
        try:
            report = self.store.report(query.date, now_ms=now_ms)
        except ValueError as exc:
            return {"error": "bad request", "detail": str(exc)}
        return report.model_dump(mode="json")

    async def handle_query(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while line := await reader.readline():
                if not line.strip():
                    continue
                response = await asyncio.to_thread(self.answer, line)
                writer.write(json.dumps(response).encode("utf-8") + b"\n")
                await writer.drain()
        except (ConnectionError, OSError) as exc:
            logger.debug("Report client left: %s", exc)
        finally:
            writer.close()
            with contextlib.suppress(OSError):
                await writer.wait_closed()


async def query_report(host: str, port: int, date: str, now_ms: int | None = None) -> dict[str, object]:
    """Ask a running service for the report of ``date``."""
    request = ReportQuery(op="report", date=date, now_ms=now_ms)
    reader, writer = await asyncio.open_connection(host, port)
    try:
        writer.write(request.model_dump_json(exclude_none=True).encode("utf-8") + b"\n")
        await writer.drain()
        return json.loads(await reader.readline())
    finally:
        writer.close()
        with contextlib.suppress(OSError):
            await writer.wait_closed()


async def serve(settings: Settings) -> None:
    """Load the model, open the store and run the service until cancelled."""
    model = load_model(settings.model_path)
    logger.info("Loaded model %s (%d parameters)", settings.model_path, model.num_parameters)
    store = EventStore(settings.store_path)
    set_store(store)
    broadcast = None
    if settings.http_port is not None:
        from src.api.websocket import broadcaster

        broadcast = broadcaster.push_event
    service = RoomWaveService(settings, model, store, broadcast_callback=broadcast)
    try:
        async with service:
            await service.serve_forever()
    finally:
        set_store(None)
        store.close()
