"""Radar cube to JTF spectrogram processing chain.

Stages, in order::

    range_fft -> mutual_coupling_reduction -> clutter_removal
              -> coherent_accumulate -> stft -> frame_windows

Every stage is linear up to the final ``|.|^2`` and works on whole frames,
so the same code serves offline files and the edge stream
(``JtfStream``).  Doppler bins are ordered ``-v_max .. +v_max`` with zero
velocity at index 128; receding targets land above it.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.signal.windows import hamming

from src.errors import ConfigMismatch, ShapeMismatch, TooFewChirps, TooShort
from src.pipeline.radar_sim import RadarCube, derive_params
from src.schemas.schemas import ChirpConfig

logger = logging.getLogger(__name__)

STFT_WINDOW = 128
STFT_HOP = 64
DOPPLER_BINS = 256
ZERO_DOPPLER_BIN = DOPPLER_BINS // 2
WINDOW_STEPS = 50
DEFAULT_STRIDE = 10
NOMINAL_CARRIER_HZ = 77e9

_HAMMING = hamming(STFT_WINDOW, sym=True)


@dataclass(frozen=True)
class RangeProfile:
    """Fast-time spectra, indexed ``[chirp, channel, range_bin]``.

    Attributes:
        config: Waveform the chirps were sampled with.
        data: Complex array of shape ``(chirps, L, samples_per_chirp // 2)``.
        start_time_ms: Epoch milliseconds of the first chirp.
    """

    config: ChirpConfig
    data: np.ndarray
    start_time_ms: int = 0

    def __post_init__(self) -> None:
        expected = (self.config.num_channels, self.config.range_bins)
        if self.data.ndim != 3 or self.data.shape[1:] != expected:
            raise ShapeMismatch(f"profile shape {self.data.shape} does not match (chirps, *{expected})")

    @property
    def num_chirps(self) -> int:
        return int(self.data.shape[0])

    @property
    def num_frames(self) -> int:
        return self.num_chirps // self.config.chirps_per_frame

    def with_data(self, data: np.ndarray) -> RangeProfile:
        return replace(self, data=data)

    def energy(self) -> float:
        """Total ``sum |x|^2`` over every chirp, channel and bin."""
        return float(np.vdot(self.data, self.data).real)

    def frame_energies(self) -> np.ndarray:
        """``sum |x|^2`` per whole frame."""
        n = self.config.chirps_per_frame
        whole = self.data[: self.num_frames * n]
        power = (whole.real**2 + whole.imag**2).reshape(self.num_frames, -1)
        return power.sum(axis=1)

    def split_frames(self) -> Iterator[RangeProfile]:
        """Yield one profile per whole frame, in time order."""
        n = self.config.chirps_per_frame
        for index in range(self.num_frames):
            yield RangeProfile(
                config=self.config,
                data=self.data[index * n : (index + 1) * n],
                start_time_ms=self.start_time_ms
                + round(index * self.config.frame_period_s * 1000.0),
            )


@dataclass(frozen=True)
class CouplingProfile:
    """Chirp-averaged complex profile of an empty room, one value per (channel, bin)."""

    config: ChirpConfig
    mean: np.ndarray

    def __post_init__(self) -> None:
        expected = (self.config.num_channels, self.config.range_bins)
        if self.mean.shape != expected:
            raise ShapeMismatch(f"coupling profile shape {self.mean.shape} != {expected}")

    @classmethod
    def from_profile(cls, profile: RangeProfile) -> CouplingProfile:
        return cls(config=profile.config, mean=profile.data.mean(axis=0))

    @classmethod
    def zeros(cls, config: ChirpConfig) -> CouplingProfile:
        return cls(config, np.zeros((config.num_channels, config.range_bins), dtype=np.complex128))


@dataclass(frozen=True)
class SlowTimeSeries:
    """One complex sample per chirp after accumulation over channels and bins."""

    samples: np.ndarray
    chirp_period_s: float
    start_time_ms: int = 0
    v_max: float | None = None


@dataclass(frozen=True)
class JTFSpectrogram:
    """Doppler power spectra over time, indexed ``[column, doppler_bin]``.

    Attributes:
        columns: Non-negative array of shape ``(num_columns, 256)``.
        column_period_ms: Time between column starts (``64 * Tc``).
        v_max: Maximum unambiguous velocity of the waveform.
        start_time_ms: Epoch milliseconds of the first column.
        label: Activity class, for labelled recordings.
        subject_id: Synthetic subject index.
        session_id: Session index within the subject.
    """

    columns: np.ndarray
    column_period_ms: float
    v_max: float
    start_time_ms: int = 0
    label: str | None = None
    subject_id: int | None = None
    session_id: int | None = None

    def __post_init__(self) -> None:
        if self.columns.ndim != 2 or self.columns.shape[1] != DOPPLER_BINS:
            raise ShapeMismatch(f"spectrogram shape {self.columns.shape} is not (columns, 256)")

    @property
    def num_columns(self) -> int:
        return int(self.columns.shape[0])

    def column_time_ms(self, index: int) -> int:
        return self.start_time_ms + round(index * self.column_period_ms)


@dataclass(frozen=True)
class GruInputWindow:
    """Fifty consecutive spectrogram columns fed to the classifier."""

    matrix: np.ndarray
    start_time_ms: int = 0
    label: str | None = None
    subject_id: int | None = None
    session_id: int | None = None
    column_period_ms: float = field(default=24.5, repr=False)

    def __post_init__(self) -> None:
        if self.matrix.shape != (WINDOW_STEPS, DOPPLER_BINS):
            raise ShapeMismatch(f"window shape {self.matrix.shape} != (50, 256)")
        if np.any(self.matrix < 0):
            raise ValueError("window contains negative power")

    @property
    def end_time_ms(self) -> int:
        return self.start_time_ms + round(WINDOW_STEPS * self.column_period_ms)


def bin_velocities(v_max: float) -> np.ndarray:
    """Radial velocity at the centre of each of the 256 Doppler bins."""
    return (np.arange(DOPPLER_BINS) - ZERO_DOPPLER_BIN) * (2.0 * v_max / DOPPLER_BINS)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def range_fft(cube: RadarCube) -> RangeProfile:
    """FFT every chirp over fast time and keep the positive-frequency half.

    Raises:
        ShapeMismatch: The cube's samples disagree with its config.
    """
    config = cube.config
    expected = (config.chirps_per_frame, config.num_channels, config.samples_per_chirp)
    if cube.data.ndim != 4 or cube.data.shape[1:] != expected:
        raise ShapeMismatch(f"cube shape {cube.data.shape} does not match (frames, *{expected})")
    chirps = cube.data.reshape(-1, config.num_channels, config.samples_per_chirp)
    spectra = np.fft.fft(chirps, axis=-1)[..., : config.range_bins]
    return RangeProfile(config=config, data=spectra, start_time_ms=cube.start_time_ms)


def mutual_coupling_reduction(
    profile: RangeProfile,
    calibration: CouplingProfile | RangeProfile,
) -> RangeProfile:
    """Subtract the empty-room chirp-averaged profile from every chirp.

    Raises:
        ConfigMismatch: The calibration was recorded with another waveform.
    """
    if isinstance(calibration, RangeProfile):
        calibration = CouplingProfile.from_profile(calibration)
    if not profile.config.same_waveform(calibration.config):
        raise ConfigMismatch("coupling calibration was recorded with a different chirp config")
    return profile.with_data(profile.data - calibration.mean[None, :, :])


def clutter_removal(profile: RangeProfile, block_chirps: int | None = None) -> RangeProfile:
    """Subtract the slow-time mean of each block (one frame by default).

    A trailing partial block is processed with its own mean.

    Raises:
        TooFewChirps: The profile, or its trailing block, has a single chirp.
    """
    block = block_chirps or profile.config.chirps_per_frame
    total = profile.num_chirps
    if total < 2 or block < 2 or total % block == 1:
        raise TooFewChirps(f"clutter removal needs >= 2 chirps per block (have {total}, block {block})")
    out = np.empty_like(profile.data)
    for start in range(0, total, block):
        chunk = profile.data[start : start + block]
        out[start : start + block] = chunk - chunk.mean(axis=0, keepdims=True)
    return profile.with_data(out)


def coherent_accumulate(profile: RangeProfile) -> SlowTimeSeries:
    """Sum every chirp over channels and range bins."""
    return SlowTimeSeries(
        samples=profile.data.sum(axis=(1, 2)),
        chirp_period_s=profile.config.chirp_period_s,
        start_time_ms=profile.start_time_ms,
        v_max=derive_params(profile.config).max_velocity_mps,
    )


def _stft_columns(samples: np.ndarray) -> np.ndarray:
    count = (samples.size - STFT_WINDOW) // STFT_HOP + 1
    segments = np.lib.stride_tricks.sliding_window_view(samples, STFT_WINDOW)[::STFT_HOP][:count]
    spectra = np.fft.fftshift(np.fft.fft(segments * _HAMMING, n=DOPPLER_BINS, axis=-1), axes=-1)
    return spectra.real**2 + spectra.imag**2


def stft(series: SlowTimeSeries) -> JTFSpectrogram:
    """Hamming-windowed STFT of the slow-time series.

    128-sample windows, hop 64, zero-padded to a 256-point FFT, power
    spectrum with zero Doppler rotated to bin 128.

    Args:
        series: Accumulated slow-time samples.  Without a ``v_max`` the
            velocity span is derived for a 77 GHz carrier.

    Raises:
        TooShort: Fewer than 128 samples.
    """
    if series.samples.size < STFT_WINDOW:
        raise TooShort(f"STFT needs >= {STFT_WINDOW} samples, got {series.samples.size}")
    v_max = series.v_max
    if v_max is None:
        v_max = SPEED_OF_LIGHT / NOMINAL_CARRIER_HZ / (4.0 * series.chirp_period_s)
    return JTFSpectrogram(
        columns=_stft_columns(series.samples),
        column_period_ms=STFT_HOP * series.chirp_period_s * 1000.0,
        v_max=v_max,
        start_time_ms=series.start_time_ms,
    )


def compute_jtf(profile: RangeProfile) -> JTFSpectrogram:
    """Clutter removal, accumulation and STFT of a coupling-reduced profile."""
    series = coherent_accumulate(clutter_removal(profile))
    return stft(series)


def frame_windows(spectrogram: JTFSpectrogram, stride: int = DEFAULT_STRIDE) -> list[GruInputWindow]:
    """Cut the spectrogram into 50-column windows every ``stride`` columns.

    Raises:
        ValueError: ``stride`` is below 1.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    count = max(0, (spectrogram.num_columns - WINDOW_STEPS) // stride + 1)
    return [
        GruInputWindow(
            matrix=spectrogram.columns[start : start + WINDOW_STEPS],
            start_time_ms=spectrogram.column_time_ms(start),
            label=spectrogram.label,
            subject_id=spectrogram.subject_id,
            session_id=spectrogram.session_id,
            column_period_ms=spectrogram.column_period_ms,
        )
        for start in range(0, count * stride, stride)
    ]


def process_cube(
    cube: RadarCube,
    calibration: CouplingProfile | RangeProfile | None = None,
) -> JTFSpectrogram:
    """Run the whole chain on a recording."""
    profile = range_fft(cube)
    if calibration is not None:
        profile = mutual_coupling_reduction(profile, calibration)
    return compute_jtf(profile)


# ---------------------------------------------------------------------------
# Streaming
# ---------------------------------------------------------------------------


class JtfStream:
    """Incremental spectrogram over an unbounded sequence of frames.

    Feeding frames one at a time emits exactly the columns ``compute_jtf``
    would produce on the concatenated recording.  ``SlidingWindows`` turns
    those columns into classifier windows.

    Args:
        config: Waveform of the incoming frames.
        calibration: Empty-room coupling profile; none skips the reduction.
    """

    def __init__(self, config: ChirpConfig, calibration: CouplingProfile | None = None) -> None:
        self.config = config
        self.calibration = calibration
        self.v_max = derive_params(config).max_velocity_mps
        self.column_period_ms = STFT_HOP * config.chirp_period_s * 1000.0
        self._buffer = np.zeros(0, dtype=np.complex128)
        self._start_ms: int | None = None
        self._columns_emitted = 0

    def push_profile(self, profile: RangeProfile) -> tuple[np.ndarray, list[int]]:
        """Consume coupling-reduced frames, return new columns and their start times."""
        if self._start_ms is None:
            self._start_ms = profile.start_time_ms
        series = coherent_accumulate(clutter_removal(profile))
        self._buffer = np.concatenate([self._buffer, series.samples])
        if self._buffer.size < STFT_WINDOW:
            return np.zeros((0, DOPPLER_BINS)), []
        columns = _stft_columns(self._buffer)
        consumed = columns.shape[0] * STFT_HOP
        self._buffer = self._buffer[consumed:]
        times = [
            self._start_ms + round((self._columns_emitted + i) * self.column_period_ms)
            for i in range(columns.shape[0])
        ]
        self._columns_emitted += columns.shape[0]
        return columns, times

    def push(self, cube: RadarCube) -> tuple[np.ndarray, list[int]]:
        """Consume raw frames; see ``push_profile``."""
        profile = range_fft(cube)
        if self.calibration is not None:
            profile = mutual_coupling_reduction(profile, self.calibration)
        return self.push_profile(profile)


class SlidingWindows:
    """Collects spectrogram columns and releases a 50-column window every ``stride`` columns."""

    def __init__(self, stride: int = DEFAULT_STRIDE, column_period_ms: float = 24.5) -> None:
        if stride < 1:
            raise ValueError(f"stride must be >= 1, got {stride}")
        self.stride = stride
        self.column_period_ms = column_period_ms
        self._columns: list[np.ndarray] = []
        self._times: list[int] = []
        self._until_next = 0

    def extend(self, columns: Iterable[np.ndarray], times: Sequence[int]) -> list[GruInputWindow]:
        windows: list[GruInputWindow] = []
        for column, ts in zip(columns, times, strict=True):
            self._columns.append(column)
            self._times.append(ts)
            if len(self._columns) > WINDOW_STEPS:
                del self._columns[0]
                del self._times[0]
            if len(self._columns) < WINDOW_STEPS:
                continue
            if self._until_next == 0:
                windows.append(
                    GruInputWindow(
                        matrix=np.stack(self._columns),
                        start_time_ms=self._times[0],
                        column_period_ms=self.column_period_ms,
                    )
                )
                self._until_next = self.stride
            self._until_next -= 1
        return windows

    def reset(self) -> None:
        """Forget buffered columns (the room was vacated)."""
        self._columns.clear()
        self._times.clear()
        self._until_next = 0
