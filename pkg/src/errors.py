"""Exception hierarchy for RoomWave.

Every failure the processing chain can report has its own class so callers
can react precisely (the CLI maps them to exit codes, the service closes a
single connection on a protocol error, the HTTP layer turns them into 4xx
responses).  Errors describing a bad *value* additionally derive from
``ValueError`` so generic code can still catch them.
"""

from __future__ import annotations


class RoomWaveError(Exception):
    """Base class for all domain errors raised by RoomWave."""


# ---------------------------------------------------------------------------
# Radar simulation
# ---------------------------------------------------------------------------


class RangeOutOfBound(RoomWaveError, ValueError):
    """A scatterer sits at or beyond the maximum unambiguous range."""


class VelocityAmbiguous(RoomWaveError, ValueError):
    """A scatterer's radial speed reaches the maximum unambiguous velocity."""


class UnknownActivity(RoomWaveError, ValueError):
    """An activity label or class index is outside the known classes."""


# ---------------------------------------------------------------------------
# Signal processing
# ---------------------------------------------------------------------------


class ShapeMismatch(RoomWaveError, ValueError):
    """Array dimensions disagree with the configuration or model."""


class ConfigMismatch(RoomWaveError, ValueError):
    """Two objects that must share a chirp configuration do not."""


class TooFewChirps(RoomWaveError, ValueError):
    """A clutter-removal block holds fewer than two chirps."""


class TooShort(RoomWaveError, ValueError):
    """A slow-time series is shorter than one STFT window."""


# ---------------------------------------------------------------------------
# Learning
# ---------------------------------------------------------------------------


class BadLabel(RoomWaveError, ValueError):
    """A class index is outside ``[0, num_classes)``."""


class EmptyDataset(RoomWaveError, ValueError):
    """A training or evaluation set has no examples."""


class ClassMissing(RoomWaveError, ValueError):
    """A training set lacks examples for at least one class."""


# ---------------------------------------------------------------------------
# Presence detection and status
# ---------------------------------------------------------------------------


class NotCalibrated(RoomWaveError):
    """No empty-room baseline exists for the room being evaluated."""


class TooFewFrames(RoomWaveError, ValueError):
    """Calibration was attempted with less than the minimum empty data."""


class MissingDecision(RoomWaveError, ValueError):
    """Room routing was asked to run without a decision for every room."""


class UnsortedEvents(RoomWaveError, ValueError):
    """Events arrived out of timestamp order."""


class NoData(RoomWaveError):
    """No events exist for the requested day."""


# ---------------------------------------------------------------------------
# Files and wire protocol
# ---------------------------------------------------------------------------


class FormatVersionMismatch(RoomWaveError, ValueError):
    """A file was written by an incompatible format version."""


class ProtocolError(RoomWaveError, ValueError):
    """Base class for wire and container decoding failures."""


class BadMagic(ProtocolError):
    """The leading magic bytes are not the expected ones."""


class UnknownType(ProtocolError):
    """The message type byte is not a known message type."""


class UnknownRoom(UnknownType):
    """The room byte does not name one of the monitored rooms."""


class LengthMismatch(ProtocolError):
    """A declared length disagrees with the bytes available or required."""


class UnsupportedVersion(ProtocolError):
    """The protocol version byte is not supported by this build."""
