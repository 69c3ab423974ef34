"""Wire framing tests: golden bytes, random frames and malformed input."""

from __future__ import annotations

import asyncio
import struct

import numpy as np
import pytest

from src.errors import BadMagic, LengthMismatch, UnknownRoom, UnknownType, UnsupportedVersion
from src.schemas.schemas import MONITORED_ROOMS, Room, Status
from src.telemetry.protocol import (
    HEADER,
    JTF_PAYLOAD_LEN,
    MessageType,
    WireMessage,
    decode,
    decode_header,
    encode,
    read_message,
)


def _frame(msg_type: int = 4, room: int = 1, version: int = 1, magic: bytes = b"AIGM", payload: bytes = b"") -> bytes:
    return struct.pack("<4sBBBBQI", magic, version, msg_type, room, 0, 1234, len(payload)) + payload


def _random_message(rng: np.random.Generator) -> WireMessage:
    room = MONITORED_ROOMS[int(rng.integers(3))]
    ts = int(rng.integers(0, 1 << 62))
    kind = int(rng.integers(4))
    if kind == 0:
        return WireMessage.presence(room, ts, bool(rng.integers(2)))
    if kind == 1:
        return WireMessage.jtf_window(room, ts, rng.uniform(0, 1e3, (50, 256)))
    if kind == 2:
        statuses = [*Status, None]
        return WireMessage.status_result(room, ts, statuses[int(rng.integers(len(statuses)))], float(rng.random()))
    return WireMessage.heartbeat(room, ts)


class TestEncoding:
    def test_heartbeat_golden_bytes(self) -> None:
        frame = encode(WireMessage.heartbeat(Room.LIVINGROOM, 0))
        assert frame == bytes.fromhex("41 49 47 4d 01 04 01 00") + bytes(12)

    def test_header_layout(self) -> None:
        frame = encode(WireMessage.presence(Room.WASHROOM, 0x0102030405060708, True))
        assert HEADER.size == 20
        assert frame[5] == MessageType.PRESENCE
        assert frame[6] == 2
        assert frame[8:16] == bytes([8, 7, 6, 5, 4, 3, 2, 1])
        assert frame[16:20] == (1).to_bytes(4, "little")
        assert frame[20:] == b"\x01"

    def test_jtf_payload_is_float32_row_major(self) -> None:
        matrix = np.arange(50 * 256, dtype=np.float64).reshape(50, 256)
        frame = encode(WireMessage.jtf_window(Room.LIVINGROOM, 5, matrix))
        assert len(frame) == 20 + JTF_PAYLOAD_LEN == 20 + 51_200
        assert np.frombuffer(frame[20:24], dtype="<f4")[0] == 0.0
        assert np.frombuffer(frame[-4:], dtype="<f4")[0] == 50 * 256 - 1

    def test_status_payload(self) -> None:
        msg = WireMessage.status_result(Room.BEDROOM, 9, Status.IN_BED, 0.874)
        assert msg.payload == bytes([0, 87])
        assert WireMessage.status_result(Room.BEDROOM, 9, None).status is None

    def test_out_of_home_has_no_wire_room(self) -> None:
        with pytest.raises(UnknownRoom):
            encode(WireMessage.heartbeat(Room.NONE, 0))

    def test_wrong_window_shape_rejected(self) -> None:
        with pytest.raises(LengthMismatch):
            WireMessage.jtf_window(Room.LIVINGROOM, 0, np.zeros((49, 256)))


class TestDecoding:
    def test_random_frames_decode_to_their_message(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(1000):
            msg = _random_message(rng)
            decoded = decode(encode(msg))
            assert decoded == msg

    def test_window_values_survive_as_float32(self) -> None:
        matrix = np.random.default_rng(4).uniform(0, 10, (50, 256))
        decoded = decode(encode(WireMessage.jtf_window(Room.LIVINGROOM, 0, matrix)))
        np.testing.assert_array_equal(decoded.window(), matrix.astype(np.float32))

    def test_bad_magic(self) -> None:
        with pytest.raises(BadMagic):
            decode(_frame(magic=b"XXXX"))

    def test_unsupported_version(self) -> None:
        with pytest.raises(UnsupportedVersion):
            decode(_frame(version=2))

    def test_unknown_type(self) -> None:
        with pytest.raises(UnknownType):
            decode(_frame(msg_type=0x7F))

    def test_unknown_room(self) -> None:
        with pytest.raises(UnknownRoom):
            decode(_frame(room=3))
        assert issubclass(UnknownRoom, UnknownType)

    @pytest.mark.parametrize(
        "frame",
        [
            _frame(payload=b"\x00"),
            _frame(msg_type=1, payload=b""),
            _frame(msg_type=1, payload=b"\x01")[:-1],
            _frame(msg_type=1, payload=b"\x01") + b"\x00",
            b"AIGM\x01",
        ],
    )
    def test_length_mismatch(self, frame: bytes) -> None:
        with pytest.raises(LengthMismatch):
            decode(frame)

    def test_header_must_be_twenty_bytes(self) -> None:
        with pytest.raises(LengthMismatch):
            decode_header(bytes(19))

    def test_unknown_status_code(self) -> None:
        msg = WireMessage(MessageType.STATUS_RESULT, Room.LIVINGROOM, 0, bytes([200, 50]))
        with pytest.raises(UnknownType):
            _ = msg.status


class TestStreamReading:
    @staticmethod
    def _reader(data: bytes) -> asyncio.StreamReader:
        reader = asyncio.StreamReader()
        reader.feed_data(data)
        reader.feed_eof()
        return reader

    @pytest.mark.asyncio
    async def test_frames_then_clean_end(self) -> None:
        first = WireMessage.presence(Room.BEDROOM, 10, True)
        second = WireMessage.heartbeat(Room.WASHROOM, 20)
        reader = self._reader(encode(first) + encode(second))
        assert await read_message(reader) == first
        assert await read_message(reader) == second
        assert await read_message(reader) is None

    @pytest.mark.asyncio
    async def test_end_inside_header(self) -> None:
        reader = self._reader(encode(WireMessage.heartbeat(Room.BEDROOM, 0))[:11])
        with pytest.raises(LengthMismatch):
            await read_message(reader)

    @pytest.mark.asyncio
    async def test_end_inside_payload(self) -> None:
        frame = encode(WireMessage.jtf_window(Room.LIVINGROOM, 0, np.zeros((50, 256))))
        with pytest.raises(LengthMismatch):
            await read_message(self._reader(frame[:-100]))

    @pytest.mark.asyncio
    async def test_bad_header_on_stream(self) -> None:
        with pytest.raises(UnknownType):
            await read_message(self._reader(_frame(msg_type=0x7F)))
