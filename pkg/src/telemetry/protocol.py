"""Binary framing between edge nodes and the aggregator service.

Every frame is a 20-byte little-endian header followed by the payload::

    magic "AIGM" | version u8 | msg_type u8 | room_id u8 | reserved u8
    | timestamp_ms u64 | payload_len u32 | payload

Example:
    >>> encode(WireMessage.heartbeat(Room.LIVINGROOM, 0)).hex(" ")
    '41 49 47 4d 01 04 01 00 00 00 00 00 00 00 00 00 00 00 00 00'
"""

from __future__ import annotations

import asyncio
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from src.errors import BadMagic, LengthMismatch, UnknownRoom, UnknownType, UnsupportedVersion
from src.pipeline.dsp_chain import DOPPLER_BINS, WINDOW_STEPS
from src.schemas.schemas import MONITORED_ROOMS, Room, Status

# -- Protocol constants ------------------------------------------------------

MAGIC = b"AIGM"
VERSION = 1
HEADER = struct.Struct("<4sBBBBQI")
JTF_PAYLOAD_LEN = WINDOW_STEPS * DOPPLER_BINS * 4
MAX_PAYLOAD_LEN = 1 << 20

STATUS_CODES: tuple[Status, ...] = tuple(Status)
"""Wire code of a status is its position here."""

STATUS_NONE = 0xFF
"""Status code of an acknowledgement that produced no event."""


class MessageType(IntEnum):
    PRESENCE = 0x01
    JTF_WINDOW = 0x02
    STATUS_RESULT = 0x03
    HEARTBEAT = 0x04


_PAYLOAD_LEN = {
    MessageType.PRESENCE: 1,
    MessageType.JTF_WINDOW: JTF_PAYLOAD_LEN,
    MessageType.STATUS_RESULT: 2,
    MessageType.HEARTBEAT: 0,
}


def room_id(room: Room) -> int:
    try:
        return MONITORED_ROOMS.index(room)
    except ValueError:
        raise UnknownRoom(f"room {room} has no wire id") from None


def room_from_id(value: int) -> Room:
    if not 0 <= value < len(MONITORED_ROOMS):
        raise UnknownRoom(f"room id {value} is not a monitored room")
    return MONITORED_ROOMS[value]


@dataclass(frozen=True, slots=True)
class WireMessage:
    """One decoded frame.

    Use the ``presence`` / ``jtf_window`` / ``status_result`` /
    ``heartbeat`` constructors rather than building payloads by hand.
    """

    msg_type: MessageType
    room: Room
    timestamp_ms: int
    payload: bytes = b""
    version: int = VERSION
    reserved: int = 0

    def __post_init__(self) -> None:
        expected = _PAYLOAD_LEN[self.msg_type]
        if len(self.payload) != expected:
            raise LengthMismatch(f"{self.msg_type.name} payload is {len(self.payload)} bytes, expected {expected}")
        if not 0 <= self.timestamp_ms < 1 << 64:
            raise ValueError(f"timestamp {self.timestamp_ms} does not fit in u64")

    # -- constructors --------------------------------------------------------

    @classmethod
    def presence(cls, room: Room, timestamp_ms: int, occupied: bool) -> WireMessage:
        return cls(MessageType.PRESENCE, room, timestamp_ms, bytes([1 if occupied else 0]))

    @classmethod
    def jtf_window(cls, room: Room, timestamp_ms: int, matrix: np.ndarray) -> WireMessage:
        matrix = np.asarray(matrix)
        if matrix.shape != (WINDOW_STEPS, DOPPLER_BINS):
            raise LengthMismatch(f"window shape {matrix.shape} is not ({WINDOW_STEPS}, {DOPPLER_BINS})")
        return cls(MessageType.JTF_WINDOW, room, timestamp_ms, matrix.astype("<f4").tobytes())

    @classmethod
    def status_result(
        cls,
        room: Room,
        timestamp_ms: int,
        status: Status | None,
        confidence: float = 1.0,
    ) -> WireMessage:
        code = STATUS_NONE if status is None else STATUS_CODES.index(status)
        percent = int(round(min(max(confidence, 0.0), 1.0) * 100))
        return cls(MessageType.STATUS_RESULT, room, timestamp_ms, bytes([code, percent]))

    @classmethod
    def heartbeat(cls, room: Room, timestamp_ms: int) -> WireMessage:
        return cls(MessageType.HEARTBEAT, room, timestamp_ms)

    # -- payload accessors ---------------------------------------------------

    @property
    def occupied(self) -> bool:
        return self.payload[0] != 0

    def window(self) -> np.ndarray:
        """The JTF window as a ``(50, 256)`` float64 array."""
        return np.frombuffer(self.payload, dtype="<f4").reshape(WINDOW_STEPS, DOPPLER_BINS).astype(np.float64)

    @property
    def status(self) -> Status | None:
        code = self.payload[0]
        if code == STATUS_NONE:
            return None
        if code >= len(STATUS_CODES):
            raise UnknownType(f"status code {code} is unknown")
        return STATUS_CODES[code]

    @property
    def confidence(self) -> float:
        return self.payload[1] / 100.0


# -- Encoding ----------------------------------------------------------------


def encode(msg: WireMessage) -> bytes:
    """Serialise a message into one frame."""
    header = HEADER.pack(
        MAGIC,
        msg.version,
        int(msg.msg_type),
        room_id(msg.room),
        msg.reserved,
        msg.timestamp_ms,
        len(msg.payload),
    )
    return header + msg.payload


# -- Decoding ----------------------------------------------------------------


def decode_header(header: bytes) -> tuple[int, MessageType, Room, int, int, int]:
    """Validate a 20-byte header.

    Returns:
        ``(version, msg_type, room, reserved, timestamp_ms, payload_len)``.

    Raises:
        LengthMismatch: Wrong header size or an oversized or mis-sized payload.
        BadMagic: The frame does not start with ``AIGM``.
        UnsupportedVersion: The version byte is not 1.
        UnknownType: The message type byte is unknown.
        UnknownRoom: The room byte is not 0, 1 or 2.
    """
    if len(header) != HEADER.size:
        raise LengthMismatch(f"header is {len(header)} bytes, expected {HEADER.size}")
    magic, version, raw_type, raw_room, reserved, timestamp_ms, payload_len = HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"protocol version {version} is not supported")
    try:
        msg_type = MessageType(raw_type)
    except ValueError:
        raise UnknownType(f"message type 0x{raw_type:02x} is unknown") from None
    room = room_from_id(raw_room)
    if payload_len > MAX_PAYLOAD_LEN or payload_len != _PAYLOAD_LEN[msg_type]:
        raise LengthMismatch(f"{msg_type.name} declares {payload_len} payload bytes")
    return version, msg_type, room, reserved, timestamp_ms, payload_len


def decode(data: bytes) -> WireMessage:
    """Parse exactly one complete frame.

    Raises:
        LengthMismatch: ``data`` is shorter or longer than the declared frame.
        BadMagic, UnsupportedVersion, UnknownType: See ``decode_header``.
    """
    if len(data) < HEADER.size:
        raise LengthMismatch(f"frame of {len(data)} bytes is shorter than the header")
    version, msg_type, room, reserved, timestamp_ms, payload_len = decode_header(data[: HEADER.size])
    payload = data[HEADER.size :]
    if len(payload) != payload_len:
        raise LengthMismatch(f"declared {payload_len} payload bytes, got {len(payload)}")
    return WireMessage(msg_type, room, timestamp_ms, bytes(payload), version, reserved)


async def read_message(reader: asyncio.StreamReader) -> WireMessage | None:
    """Read one frame from a stream; ``None`` on a clean end of stream.

    Raises:
        LengthMismatch: The stream ended inside a frame.
    """
    try:
        header = await reader.readexactly(HEADER.size)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None
        raise LengthMismatch("stream ended inside a frame header") from None
    version, msg_type, room, reserved, timestamp_ms, payload_len = decode_header(header)
    try:
        payload = await reader.readexactly(payload_len)
    except asyncio.IncompleteReadError:
        raise LengthMismatch("stream ended inside a frame payload") from None
    return WireMessage(msg_type, room, timestamp_ms, payload, version, reserved)
