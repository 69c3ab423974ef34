"""Edge node: per-room DSP, presence detection and delivery to the service.

An edge turns its radar's frames into wire messages (``EdgeProcessor``)
and hands them to a sink.  ``EdgeLink`` is the network sink: it keeps a
bounded backlog, reconnects with exponential backoff and resends every
message the service has not acknowledged yet.
"""

from __future__ import annotations

import asyncio
import contextlib
import logging
from collections import deque
from collections.abc import AsyncIterable, AsyncIterator, Iterable
from dataclasses import dataclass
from typing import Protocol

from src.config import Settings
from src.errors import ProtocolError, RoomWaveError
from src.pipeline.dsp_chain import (
    CouplingProfile,
    JtfStream,
    SlidingWindows,
    clutter_removal,
    mutual_coupling_reduction,
    range_fft,
)
from src.pipeline.ingestion import ACKED_TYPES
from src.pipeline.presence_pad import PresenceDetector, ThresholdConfig
from src.pipeline.radar_sim import RadarCube
from src.schemas.schemas import ChirpConfig, PresenceCalibrationRecord, Room
from src.telemetry.protocol import MessageType, WireMessage, encode, read_message

logger = logging.getLogger(__name__)


class EdgeProcessor:
    """Frame-by-frame pipeline of one room.

    Every completed presence horizon yields a ``presence`` message and, every
    ``heartbeat_every`` horizons, a ``heartbeat``.  The living-room edge also
    emits a ``jtf_window`` message every ``stride`` spectrogram columns while
    the room is occupied.

    Args:
        room: Room the radar watches.
        config: Radar waveform.
        calibration: Empty-room baseline of the room.
        coupling: Empty-room coupling profile, if one was recorded.
        threshold: Detector settings; defaults to the calibration's.
        stride: Columns between consecutive classifier windows.
        heartbeat_every: Horizons between heartbeats.

    Raises:
        NotCalibrated: ``calibration`` is missing.
    """

    def __init__(
        self,
        room: Room,
        config: ChirpConfig,
        calibration: PresenceCalibrationRecord | None,
        coupling: CouplingProfile | None = None,
        threshold: ThresholdConfig | None = None,
        stride: int = 10,
        heartbeat_every: int = 5,
    ) -> None:
        self.room = room
        self.coupling = coupling
        self.detector = PresenceDetector(room, calibration, coupling, threshold)
        self.stream: JtfStream | None = None
        self.windows: SlidingWindows | None = None
        if room is Room.LIVINGROOM:
            self.stream = JtfStream(config, coupling)
            self.windows = SlidingWindows(stride, self.stream.column_period_ms)
        self.heartbeat_every = max(1, heartbeat_every)
        self.occupied = False
        self.horizons = 0

    def process_frame(self, cube: RadarCube) -> list[WireMessage]:
        """Messages produced by one frame (or a short run of frames)."""
        messages: list[WireMessage] = []
        profile = range_fft(cube)
        if self.coupling is not None:
            profile = mutual_coupling_reduction(profile, self.coupling)
        for frame in profile.split_frames():
            decision = self.detector.push(clutter_removal(frame))
            if decision is not None:
                self.horizons += 1
                messages.append(WireMessage.presence(self.room, decision.timestamp_ms, decision.occupied))
                if self.occupied and not decision.occupied and self.windows is not None:
                    self.windows.reset()
                self.occupied = decision.occupied
                if self.horizons % self.heartbeat_every == 0:
                    messages.append(WireMessage.heartbeat(self.room, decision.timestamp_ms))
            if self.stream is None or self.windows is None:
                continue
            columns, times = self.stream.push_profile(frame)
            if self.occupied and columns.size:
                for window in self.windows.extend(columns, times):
                    messages.append(WireMessage.jtf_window(self.room, window.end_time_ms, window.matrix))
        return messages


# ---------------------------------------------------------------------------
# Sinks
# ---------------------------------------------------------------------------


class MessageSink(Protocol):
    def enqueue(self, msg: WireMessage) -> None: ...

    def close(self) -> None: ...

    async def wait_closed(self) -> None: ...


class CollectingSink:
    """Keeps every message in memory; used for offline runs."""

    def __init__(self) -> None:
        self.messages: list[WireMessage] = []

    def enqueue(self, msg: WireMessage) -> None:
        self.messages.append(msg)

    def close(self) -> None:
        pass

    async def wait_closed(self) -> None:
        pass

    def of_type(self, msg_type: MessageType) -> list[WireMessage]:
        return [m for m in self.messages if m.msg_type is msg_type]


class EdgeLink:
    """At-least-once delivery of an edge's messages to the service.

    Messages wait in a backlog of at most ``buffer_size`` entries; when it
    overflows the oldest message is dropped.  Presence and JTF messages stay
    in the backlog until the service acknowledges them with a
    ``status_result`` carrying the same timestamp; after a reconnect the
    unacknowledged ones are sent again first.

    Args:
        host: Service host.
        port: Service wire port.
        buffer_size: Backlog bound.
        backoff_base_s: First reconnect delay; doubles per failure.
        backoff_cap_s: Longest reconnect delay.
    """

    def __init__(
        self,
        host: str,
        port: int,
        buffer_size: int = 512,
        backoff_base_s: float = 1.0,
        backoff_cap_s: float = 60.0,
    ) -> None:
        self.host = host
        self.port = port
        self.buffer_size = buffer_size
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self._pending: deque[WireMessage] = deque()
        self._inflight: deque[WireMessage] = deque()
        self._wakeup = asyncio.Event()
        self._closing = False
        self._task: asyncio.Task[None] | None = None
        self.sent_count = 0
        self.acked_count = 0
        self.dropped_count = 0
        self.connect_count = 0

    @property
    def backlog(self) -> int:
        return len(self._pending) + len(self._inflight)

    def start(self) -> None:
        if self._task is None:
            self._task = asyncio.create_task(self.run(), name=f"edge-link-{self.host}:{self.port}")

    def enqueue(self, msg: WireMessage) -> None:
        self._pending.append(msg)
        while self.backlog > self.buffer_size:
            oldest = self._inflight.popleft() if self._inflight else self._pending.popleft()
            self.dropped_count += 1
            logger.warning(
                "Backlog full (%d); dropped %s at %d ms", self.buffer_size, oldest.msg_type.name, oldest.timestamp_ms
            )
        self._wakeup.set()

    def close(self) -> None:
        """Stop once every buffered message has been acknowledged."""
        self._closing = True
        self._wakeup.set()

    async def wait_closed(self) -> None:
        if self._task is not None:
            await self._task

    async def run(self) -> None:
        delay = self.backoff_base_s
        while not (self._closing and self.backlog == 0):
            try:
                reader, writer = await asyncio.open_connection(self.host, self.port)
            except OSError as exc:
                logger.warning(
                    "Connect to %s:%d failed (%s); retrying in %.2f s", self.host, self.port, exc, delay
                )
                await asyncio.sleep(delay)
                delay = min(delay * 2, self.backoff_cap_s)
                continue
            delay = self.backoff_base_s
            self.connect_count += 1
            if self._inflight:
                logger.info("Resending %d unacknowledged messages", len(self._inflight))
                self._pending.extendleft(reversed(self._inflight))
                self._inflight.clear()
            logger.info("Connected to %s:%d", self.host, self.port)
            try:
                await self._session(reader, writer)
            except (OSError, ProtocolError) as exc:
                logger.warning("Connection to %s:%d lost: %s", self.host, self.port, exc)
            finally:
                writer.close()
                with contextlib.suppress(OSError):
                    await writer.wait_closed()
        logger.info(
            "Edge link closed: sent=%d acked=%d dropped=%d", self.sent_count, self.acked_count, self.dropped_count
        )

    async def _session(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        sender = asyncio.create_task(self._send_loop(writer))
        receiver = asyncio.create_task(self._ack_loop(reader))
        done, _ = await asyncio.wait({sender, receiver}, return_when=asyncio.FIRST_COMPLETED)
        for task in (sender, receiver):
            if task not in done:
                task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await task
        for task in done:
            task.result()

    async def _send_loop(self, writer: asyncio.StreamWriter) -> None:
        while True:
            if not self._pending:
                if self._closing and not self._inflight:
                    return
                self._wakeup.clear()
                await self._wakeup.wait()
                continue
            msg = self._pending.popleft()
            if msg.msg_type in ACKED_TYPES:
                self._inflight.append(msg)
            writer.write(encode(msg))
            await writer.drain()
            self.sent_count += 1

    async def _ack_loop(self, reader: asyncio.StreamReader) -> None:
        while True:
            msg = await read_message(reader)
            if msg is None:
                raise ConnectionResetError("service closed the connection")
            if msg.msg_type is MessageType.STATUS_RESULT:
                self._acknowledge(msg)
            self._wakeup.set()

    def _acknowledge(self, ack: WireMessage) -> None:
        for index, msg in enumerate(self._inflight):
            if msg.timestamp_ms == ack.timestamp_ms:
                # acks arrive in send order; anything before the match was lost
                for _ in range(index + 1):
                    self._inflight.popleft()
                self.acked_count += 1
                return
        logger.debug("Acknowledgement for %d ms matches nothing in flight", ack.timestamp_ms)


# ---------------------------------------------------------------------------
# Edge loop
# ---------------------------------------------------------------------------


@dataclass
class EdgeSummary:
    frames: int = 0
    presence: int = 0
    jtf_windows: int = 0
    heartbeats: int = 0
    errors: int = 0


async def _iterate(frames: Iterable[RadarCube] | AsyncIterable[RadarCube]) -> AsyncIterator[RadarCube]:
    if isinstance(frames, AsyncIterable):
        async for cube in frames:
            yield cube
    else:
        for cube in frames:
            yield cube


async def edge_run(
    settings: Settings,
    config: ChirpConfig,
    frames: Iterable[RadarCube] | AsyncIterable[RadarCube],
    calibration: PresenceCalibrationRecord | None,
    coupling: CouplingProfile | None = None,
    sink: MessageSink | None = None,
) -> EdgeSummary:
    """Run one room's edge over a frame source.

    Processing errors are logged and the frame skipped; the loop only ends
    when the source is exhausted, after the sink has delivered its backlog.

    Args:
        settings: Room, service address, detector, backoff and pacing settings.
        config: Radar waveform of the frames.
        frames: Frame source, sync or async.
        calibration: Empty-room baseline of ``settings.room``.
        coupling: Empty-room coupling profile.
        sink: Destination of the messages; defaults to an ``EdgeLink`` to
            ``settings.connect_host:connect_port``.

    Raises:
        NotCalibrated: No calibration was given.
    """
    threshold = ThresholdConfig(
        kappa=settings.kappa,
        horizon_frames=settings.horizon_frames,
        vote_window=settings.vote_window,
        vote_required=settings.vote_required,
    )
    processor = EdgeProcessor(
        settings.room,
        config,
        calibration,
        coupling,
        threshold,
        stride=settings.stride,
        heartbeat_every=settings.heartbeat_every_horizons,
    )
    if sink is None:
        link = EdgeLink(
            settings.connect_host,
            settings.connect_port,
            buffer_size=settings.edge_buffer_size,
            backoff_base_s=settings.backoff_base_s,
            backoff_cap_s=settings.backoff_cap_s,
        )
        link.start()
        sink = link
    logger.info("Edge for %s started", settings.room)

    summary = EdgeSummary()
    loop = asyncio.get_running_loop()
    wall_start = loop.time()
    first_ms: int | None = None
    async for cube in _iterate(frames):
        summary.frames += cube.num_frames
        try:
            messages = processor.process_frame(cube)
        except RoomWaveError as exc:
            summary.errors += 1
            logger.error("Skipping frame at %d ms in %s: %s", cube.start_time_ms, settings.room, exc)
            continue
        for msg in messages:
            sink.enqueue(msg)
            if msg.msg_type is MessageType.PRESENCE:
                summary.presence += 1
            elif msg.msg_type is MessageType.JTF_WINDOW:
                summary.jtf_windows += 1
            elif msg.msg_type is MessageType.HEARTBEAT:
                summary.heartbeats += 1
        if first_ms is None:
            first_ms = cube.start_time_ms
        if settings.speedup > 0:
            due = wall_start + (cube.start_time_ms - first_ms) / 1000.0 / settings.speedup
            await asyncio.sleep(max(0.0, due - loop.time()))
        else:
            await asyncio.sleep(0)

    sink.close()
    await sink.wait_closed()
    logger.info(
        "Edge for %s finished: %d frames, %d presence, %d windows, %d errors",
        settings.room,
        summary.frames,
        summary.presence,
        summary.jtf_windows,
        summary.errors,
    )
    return summary
