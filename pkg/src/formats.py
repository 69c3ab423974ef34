"""Binary containers and sidecar files.

All three containers share one layout::

    magic (4 bytes) | u32 LE header length | UTF-8 JSON header | float32 LE payload

- ``RCUB`` radar cube: interleaved (I, Q) pairs ordered frame, chirp,
  channel, sample.  With ``kind = "coupling_profile"`` the payload is one
  complex value per (channel, range bin) instead.
- ``JTF0`` spectrogram: 256 values per column, column after column.
- ``GRUM`` model: parameter blob in ``GruModel.parameter_order``.

Every header carries ``format_version``; readers reject other versions.
Calibration records are JSON beside a coupling-profile RCUB, and dataset
manifests are JSON lines of ``ManifestEntry``.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from collections.abc import Iterator
from pathlib import Path
from typing import Any, BinaryIO, TypeVar

import numpy as np
from pydantic import BaseModel

from src.errors import BadMagic, FormatVersionMismatch, LengthMismatch
from src.models.gru import GruModel
from src.pipeline.dsp_chain import CouplingProfile, JTFSpectrogram
from src.pipeline.radar_sim import RadarCube
from src.schemas.schemas import (
    FORMAT_VERSION,
    ChirpConfig,
    CubeHeader,
    JtfHeader,
    ManifestEntry,
    ModelHeader,
    PresenceCalibrationRecord,
)

logger = logging.getLogger(__name__)

RCUB_MAGIC = b"RCUB"
JTF_MAGIC = b"JTF0"
GRUM_MAGIC = b"GRUM"

_PREFIX = struct.Struct("<4sI")
_F32 = np.dtype("<f4")

HeaderT = TypeVar("HeaderT", bound=BaseModel)


# ---------------------------------------------------------------------------
# Container primitives
# ---------------------------------------------------------------------------


def _write_container(path: str | Path, magic: bytes, header: BaseModel, payload: np.ndarray) -> None:
    header_bytes = header.model_dump_json().encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_PREFIX.pack(magic, len(header_bytes)))
        fh.write(header_bytes)
        fh.write(np.ascontiguousarray(payload, dtype=_F32).tobytes())


def _read_header(fh: BinaryIO, magic: bytes, model: type[HeaderT]) -> HeaderT:
    prefix = fh.read(_PREFIX.size)
    if len(prefix) < _PREFIX.size:
        raise LengthMismatch(f"truncated {magic.decode()} prefix")
    found, header_len = _PREFIX.unpack(prefix)
    if found != magic:
        raise BadMagic(f"expected {magic!r}, found {found!r}")
    raw = fh.read(header_len)
    if len(raw) != header_len:
        raise LengthMismatch(f"header declares {header_len} bytes, {len(raw)} available")
    fields: dict[str, Any] = json.loads(raw.decode("utf-8"))
    version = fields.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"{magic.decode()} format_version {version}, this build reads {FORMAT_VERSION}"
        )
    return model.model_validate(fields)


def _read_payload(fh: BinaryIO, count: int, what: str) -> np.ndarray:
    raw = fh.read(count * _F32.itemsize)
    if len(raw) != count * _F32.itemsize:
        raise LengthMismatch(f"{what} payload has {len(raw)} bytes, expected {count * _F32.itemsize}")
    if fh.read(1):
        raise LengthMismatch(f"{what} payload has trailing bytes")
    return np.frombuffer(raw, dtype=_F32).astype(np.float64)


def _interleave(data: np.ndarray) -> np.ndarray:
    pairs = np.empty(data.shape + (2,), dtype=_F32)
    pairs[..., 0] = data.real
    pairs[..., 1] = data.imag
    return pairs


def _deinterleave(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    pairs = values.reshape(shape + (2,))
    return pairs[..., 0] + 1j * pairs[..., 1]


# ---------------------------------------------------------------------------
# RCUB
# ---------------------------------------------------------------------------


def _cube_header(config: ChirpConfig, num_frames: int, start_time_ms: int, kind: str) -> CubeHeader:
    return CubeHeader(
        **config.model_dump(include=CubeHeader.waveform_keys()),
        num_frames=num_frames,
        start_time_ms=start_time_ms,
        kind=kind,
    )


def _config_from_header(header: CubeHeader, base: ChirpConfig | None = None) -> ChirpConfig:
    fields = header.model_dump(include=CubeHeader.waveform_keys())
    if base is not None:
        fields = base.model_copy(update=fields).model_dump()
    return ChirpConfig.model_validate(fields)


def write_cube(path: str | Path, cube: RadarCube) -> None:
    """Write a radar cube as RCUB."""
    header = _cube_header(cube.config, cube.num_frames, cube.start_time_ms, "cube")
    _write_container(path, RCUB_MAGIC, header, _interleave(cube.data))
    logger.debug("Wrote %d-frame cube to %s", cube.num_frames, path)


def read_cube(path: str | Path, base_config: ChirpConfig | None = None) -> RadarCube:
    """Read an RCUB radar cube.

    Args:
        path: File to read.
        base_config: Supplies simulator-only fields (noise, leakage) the
            header does not store.
    """
    with Path(path).open("rb") as fh:
        header = _read_header(fh, RCUB_MAGIC, CubeHeader)
        if header.kind != "cube":
            raise FormatVersionMismatch(f"{path} holds a {header.kind}, not a cube")
        config = _config_from_header(header, base_config)
        shape = (header.num_frames, config.chirps_per_frame, config.num_channels, config.samples_per_chirp)
        values = _read_payload(fh, int(np.prod(shape)) * 2, "RCUB")
    return RadarCube(config=config, data=_deinterleave(values, shape), start_time_ms=header.start_time_ms)


def iter_cube_frames(path: str | Path, base_config: ChirpConfig | None = None) -> Iterator[RadarCube]:
    """Stream an RCUB file one single-frame cube at a time."""
    with Path(path).open("rb") as fh:
        header = _read_header(fh, RCUB_MAGIC, CubeHeader)
        config = _config_from_header(header, base_config)
        frame_shape = (1, config.chirps_per_frame, config.num_channels, config.samples_per_chirp)
        frame_bytes = int(np.prod(frame_shape)) * 2 * _F32.itemsize
        for index in range(header.num_frames):
            raw = fh.read(frame_bytes)
            if len(raw) != frame_bytes:
                raise LengthMismatch(f"frame {index} of {path} is truncated")
            values = np.frombuffer(raw, dtype=_F32).astype(np.float64)
            yield RadarCube(
                config=config,
                data=_deinterleave(values, frame_shape),
                start_time_ms=header.start_time_ms + round(index * config.frame_period_s * 1000.0),
            )


class CubeWriter:
    """Append frames to an RCUB file as they are produced.

    The header is rewritten with the final frame count on ``close``.
    """

    def __init__(self, path: str | Path, config: ChirpConfig, start_time_ms: int = 0) -> None:
        self.path = Path(path)
        self.config = config
        self.start_time_ms = start_time_ms
        self.num_frames = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("wb")
        self._header_len = self._write_header()

    def _write_header(self) -> int:
        header = _cube_header(self.config, self.num_frames, self.start_time_ms, "cube")
        # Fixed-width frame count keeps the header length stable across rewrites.
        raw = header.model_dump_json().replace(
            f'"num_frames":{self.num_frames}', f'"num_frames":{self.num_frames:>12}'
        ).encode("utf-8")
        self._fh.seek(0)
        self._fh.write(_PREFIX.pack(RCUB_MAGIC, len(raw)))
        self._fh.write(raw)
        return len(raw)

    def write(self, cube: RadarCube) -> None:
        self._fh.write(_interleave(cube.data).tobytes())
        self.num_frames += cube.num_frames

    def close(self) -> None:
        end = self._fh.tell()
        self._write_header()
        self._fh.seek(end)
        self._fh.close()

    def __enter__(self) -> CubeWriter:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def write_coupling_profile(path: str | Path, profile: CouplingProfile) -> None:
    header = _cube_header(profile.config, 1, 0, "coupling_profile")
    _write_container(path, RCUB_MAGIC, header, _interleave(profile.mean))


def read_coupling_profile(path: str | Path, base_config: ChirpConfig | None = None) -> CouplingProfile:
    with Path(path).open("rb") as fh:
        header = _read_header(fh, RCUB_MAGIC, CubeHeader)
        if header.kind != "coupling_profile":
            raise FormatVersionMismatch(f"{path} holds a {header.kind}, not a coupling profile")
        config = _config_from_header(header, base_config)
        shape = (config.num_channels, config.range_bins)
        values = _read_payload(fh, int(np.prod(shape)) * 2, "coupling profile")
    return CouplingProfile(config=config, mean=_deinterleave(values, shape))


# ---------------------------------------------------------------------------
# JTF0
# ---------------------------------------------------------------------------


def write_jtf(path: str | Path, spectrogram: JTFSpectrogram) -> None:
    """Write a spectrogram (or a single window) as JTF0."""
    header = JtfHeader(
        num_columns=spectrogram.num_columns,
        column_period_ms=spectrogram.column_period_ms,
        v_max=spectrogram.v_max,
        start_time_ms=spectrogram.start_time_ms,
        label=spectrogram.label,
        subject_id=spectrogram.subject_id,
        session_id=spectrogram.session_id,
    )
    _write_container(path, JTF_MAGIC, header, spectrogram.columns)


def read_jtf(path: str | Path) -> JTFSpectrogram:
    with Path(path).open("rb") as fh:
        header = _read_header(fh, JTF_MAGIC, JtfHeader)
        values = _read_payload(fh, header.num_columns * header.bins, "JTF0")
    return JTFSpectrogram(
        columns=values.reshape(header.num_columns, header.bins),
        column_period_ms=header.column_period_ms,
        v_max=header.v_max,
        start_time_ms=header.start_time_ms,
        label=header.label,
        subject_id=header.subject_id,
        session_id=header.session_id,
    )


# ---------------------------------------------------------------------------
# GRUM
# ---------------------------------------------------------------------------


def save_model(path: str | Path, model: GruModel) -> None:
    """Write a model as GRUM; parameters are stored as float32."""
    _write_container(path, GRUM_MAGIC, model.header(), model.to_vector())
    logger.info("Saved model (%d parameters) to %s", model.num_parameters, path)


def load_model(path: str | Path) -> GruModel:
    with Path(path).open("rb") as fh:
        header = _read_header(fh, GRUM_MAGIC, ModelHeader)
        count = GruModel.parameter_count(header)
        values = _read_payload(fh, count, "GRUM")
    model = GruModel.from_vector(header, values)
    logger.info("Loaded model %s from %s", header.class_names, path)
    return model


# ---------------------------------------------------------------------------
# Calibration and manifests
# ---------------------------------------------------------------------------


def save_calibration(
    path: str | Path,
    record: PresenceCalibrationRecord,
    coupling: CouplingProfile,
) -> PresenceCalibrationRecord:
    """Write the calibration JSON plus its coupling-profile sidecar.

    Returns:
        The record as written, with ``profile_path`` pointing at the sidecar
        (relative to the JSON file).
    """
    path = Path(path)
    sidecar = path.with_suffix(".coupling.rcub")
    write_coupling_profile(sidecar, coupling)
    record = record.model_copy(update={"profile_path": sidecar.name})
    path.write_text(record.model_dump_json(indent=2), encoding="utf-8")
    return record


def load_calibration(
    path: str | Path,
    base_config: ChirpConfig | None = None,
) -> tuple[PresenceCalibrationRecord, CouplingProfile | None]:
    path = Path(path)
    fields = json.loads(path.read_text(encoding="utf-8"))
    if fields.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise FormatVersionMismatch(f"calibration {path} has format_version {fields['format_version']}")
    record = PresenceCalibrationRecord.model_validate(fields)
    coupling = None
    if record.profile_path:
        coupling = read_coupling_profile(path.parent / record.profile_path, base_config)
    return record, coupling


def write_manifest(path: str | Path, entries: list[ManifestEntry]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.model_dump_json() + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read a manifest; relative window paths resolve against its directory."""
    path = Path(path)
    entries: list[ManifestEntry] = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            entry = ManifestEntry.model_validate_json(line)
            window = Path(entry.path)
            if not window.is_absolute():
                entry = entry.model_copy(update={"path": str(path.parent / window)})
            entries.append(entry)
    return entries
