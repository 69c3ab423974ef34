"""FMCW radar return synthesis.

Builds complex baseband samples for scenes of point scatterers, one chirp
or one frame at a time, and derives the range/velocity figures of merit of a
waveform.  Each scatterer contributes a beat tone whose frequency follows
its range and whose chirp-to-chirp phase follows its path length::

    x_l(t_f, t_s) = sum_i b_i exp(j(2 pi f_b,i t_f + 4 pi R_i(t_s) / lambda
                                    + tau_l,i + alpha_l + dpsi))

with ``f_b = 2 S R / c``.  The positive exponent places range at the
positive fast-time bins and receding targets at positive Doppler.

Everything here is a pure function of its inputs and the generator it is
handed, so runs with the same seed are bit-identical.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from src.errors import RangeOutOfBound, ShapeMismatch, VelocityAmbiguous
from src.schemas.schemas import Activity, ChirpConfig, DerivedParams

logger = logging.getLogger(__name__)

TrajectoryFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]
"""Slow time (s) -> (range m, radial velocity m/s, azimuth rad), vectorised."""

MISMATCH_BOUND_RAD = 0.05


def derive_params(config: ChirpConfig) -> DerivedParams:
    """Compute range and velocity resolution/limits of a waveform.

    Args:
        config: Validated waveform.

    Returns:
        ``DerivedParams`` using ``c = 299 792 458 m/s``.
    """
    v_max = config.wavelength / (4.0 * config.chirp_period_s)
    return DerivedParams(
        range_resolution_m=SPEED_OF_LIGHT / (2.0 * config.bandwidth_hz),
        max_range_m=SPEED_OF_LIGHT * config.fs_hz / (4.0 * config.slope_hz_per_s),
        max_velocity_mps=v_max,
        velocity_resolution_mps=2.0 * v_max / config.chirps_per_frame,
        doppler_bins=config.chirps_per_frame,
    )


@dataclass(frozen=True, slots=True)
class Stationary:
    """Trajectory of a reflector that never moves."""

    range_m: float
    azimuth_rad: float = 0.0

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        shape = np.shape(t)
        return (
            np.full(shape, self.range_m),
            np.zeros(shape),
            np.full(shape, self.azimuth_rad),
        )


@dataclass(frozen=True, slots=True)
class Scatterer:
    """A moving point reflector.

    Attributes:
        trajectory: Vectorised path, see ``TrajectoryFn``.
        amplitude: Linear reflectivity ``b``.
        name: Body part or object label (``torso``, ``limb_0``, ``furniture_2``...).
    """

    trajectory: TrajectoryFn
    amplitude: float
    name: str = "scatterer"

    def sample(self, t_s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Evaluate the path at slow-time instants, broadcasting scalars."""
        t = np.atleast_1d(np.asarray(t_s, dtype=np.float64))
        rng_m, vel, az = self.trajectory(t)
        return (
            np.broadcast_to(np.asarray(rng_m, dtype=np.float64), t.shape),
            np.broadcast_to(np.asarray(vel, dtype=np.float64), t.shape),
            np.broadcast_to(np.asarray(az, dtype=np.float64), t.shape),
        )


def channel_phases(azimuth: np.ndarray, num_channels: int) -> np.ndarray:
    """Per-channel phase ``tau_l`` of a half-wavelength uniform linear array.

    Args:
        azimuth: Angles (rad), any shape.
        num_channels: Virtual channels L.

    Returns:
        Array of shape ``azimuth.shape + (L,)``.
    """
    elements = np.arange(num_channels, dtype=np.float64)
    return np.pi * np.sin(np.asarray(azimuth))[..., None] * elements


@dataclass(frozen=True, slots=True)
class ChannelImpairments:
    """Hardware imperfections fixed for the duration of one run.

    Attributes:
        mismatch: Constant phase ``alpha_l`` per channel (rad).
        leakage: Complex transmitter-to-receiver leakage per channel, placed
            at the first range bin.
    """

    mismatch: np.ndarray
    leakage: np.ndarray

    @classmethod
    def none(cls, num_channels: int) -> ChannelImpairments:
        """Ideal channels: no mismatch, no leakage."""
        return cls(
            mismatch=np.zeros(num_channels),
            leakage=np.zeros(num_channels, dtype=np.complex128),
        )


def draw_impairments(config: ChirpConfig, rng: np.random.Generator) -> ChannelImpairments:
    """Draw channel mismatch and leakage phases for one run."""
    mismatch = rng.uniform(-MISMATCH_BOUND_RAD, MISMATCH_BOUND_RAD, config.num_channels)
    leak_phase = rng.uniform(-np.pi, np.pi, config.num_channels)
    leakage = config.leakage_amplitude * np.exp(1j * leak_phase)
    return ChannelImpairments(mismatch=mismatch, leakage=leakage)


@dataclass(frozen=True, slots=True)
class MotionScript:
    """Scripted scene: the subject's scatterers plus static surroundings.

    Attributes:
        activity: Activity class the scene portrays.
        duration_s: Scene length.
        seed: Seed the template was generated from.
        scatterers: Body scatterers (empty for ``Empty``).
        clutter: Stationary environment reflectors (furniture).
        params: Template parameters drawn for this script (speeds, rates).
    """

    activity: Activity
    duration_s: float
    seed: int
    scatterers: tuple[Scatterer, ...]
    clutter: tuple[Scatterer, ...] = ()
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError(f"duration must be positive, got {self.duration_s}")
        names = [s.name for s in self.scatterers]
        if self.activity is Activity.EMPTY:
            if names:
                raise ValueError("an Empty script cannot contain body scatterers")
            return
        if "torso" not in names or sum(n.startswith("limb") for n in names) < 2:
            raise ValueError(
                f"{self.activity} script needs a torso and at least two limbs, got {names}"
            )

    @property
    def all_scatterers(self) -> tuple[Scatterer, ...]:
        return self.scatterers + self.clutter


@dataclass(frozen=True)
class RadarCube:
    """Complex baseband samples indexed ``[frame, chirp, channel, sample]``.

    Attributes:
        config: Waveform the samples were taken with.
        data: Complex array of shape ``(frames, N, L, samples_per_chirp)``.
        start_time_ms: Epoch milliseconds of the first chirp.
    """

    config: ChirpConfig
    data: np.ndarray
    start_time_ms: int = 0

    def __post_init__(self) -> None:
        expected = (
            self.config.chirps_per_frame,
            self.config.num_channels,
            self.config.samples_per_chirp,
        )
        if self.data.ndim != 4 or self.data.shape[1:] != expected:
            raise ShapeMismatch(
                f"cube shape {self.data.shape} does not match (frames, *{expected})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ShapeMismatch("cube contains non-finite samples")

    @property
    def num_frames(self) -> int:
        return int(self.data.shape[0])

    def frame_time_ms(self, index: int) -> int:
        """Timestamp of frame ``index``."""
        return self.start_time_ms + round(index * self.config.frame_period_s * 1000.0)

    def split_frames(self) -> Iterator[RadarCube]:
        """Yield one single-frame cube per frame, in time order."""
        for index in range(self.num_frames):
            yield RadarCube(
                config=self.config,
                data=self.data[index : index + 1],
                start_time_ms=self.frame_time_ms(index),
            )


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


def _check_bounds(
    scatterer: Scatterer,
    ranges: np.ndarray,
    velocities: np.ndarray,
    params: DerivedParams,
) -> None:
    if np.any(ranges <= 0) or np.any(ranges >= params.max_range_m):
        raise RangeOutOfBound(
            f"{scatterer.name}: range in [{ranges.min():.3f}, {ranges.max():.3f}] m "
            f"outside (0, {params.max_range_m:.4f}) m"
        )
    peak = float(np.max(np.abs(velocities)))
    if peak >= params.max_velocity_mps:
        raise VelocityAmbiguous(
            f"{scatterer.name}: |v| reaches {peak:.3f} m/s >= v_max "
            f"{params.max_velocity_mps:.4f} m/s"
        )


def _add_impairment_noise(
    samples: np.ndarray,
    config: ChirpConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    if config.phase_noise_std > 0:
        samples = samples * np.exp(1j * rng.normal(0.0, config.phase_noise_std, samples.shape))
    if config.noise_floor > 0:
        noise = rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape)
        samples = samples + (config.noise_floor / math.sqrt(2.0)) * noise
    return samples


def synthesize_chirp(
    config: ChirpConfig,
    scatterers: Sequence[Scatterer],
    t_s: float,
    channel: int,
    rng: np.random.Generator,
    impairments: ChannelImpairments | None = None,
) -> np.ndarray:
    """Synthesize one chirp on one channel.

    Args:
        config: Waveform.
        scatterers: Reflectors present in the scene.
        t_s: Slow time of the chirp start (s).
        channel: Virtual channel index ``l``.
        rng: Generator for phase noise and thermal noise.
        impairments: Channel mismatch/leakage; ideal channels when omitted.

    Returns:
        Complex vector of ``samples_per_chirp`` samples.

    Raises:
        RangeOutOfBound: A scatterer is at or beyond ``R_max``.
        VelocityAmbiguous: A scatterer's speed reaches ``v_max``.
    """
    if not 0 <= channel < config.num_channels:
        raise ShapeMismatch(f"channel {channel} outside [0, {config.num_channels})")
    params = derive_params(config)
    impairments = impairments or ChannelImpairments.none(config.num_channels)
    t_f = np.arange(config.samples_per_chirp) / config.fs_hz
    samples = np.zeros(config.samples_per_chirp, dtype=np.complex128)

    for scatterer in scatterers:
        ranges, velocities, azimuths = scatterer.sample(np.array([t_s]))
        _check_bounds(scatterer, ranges, velocities, params)
        beat = 2.0 * config.slope_hz_per_s * ranges[0] / SPEED_OF_LIGHT
        phase = (
            2.0 * np.pi * beat * t_f
            + 4.0 * np.pi * ranges[0] / config.wavelength
            + channel_phases(azimuths, config.num_channels)[0, channel]
            + impairments.mismatch[channel]
        )
        samples += scatterer.amplitude * np.exp(1j * phase)

    if impairments.leakage[channel] != 0:
        samples += impairments.leakage[channel] * _leakage_tone(config, params, t_f)
    return _add_impairment_noise(samples, config, rng)


def _leakage_tone(config: ChirpConfig, params: DerivedParams, t_f: np.ndarray) -> np.ndarray:
    beat = 2.0 * config.slope_hz_per_s * params.range_resolution_m / SPEED_OF_LIGHT
    return np.exp(2j * np.pi * beat * t_f)


def _scatter_sum(
    config: ChirpConfig,
    scatterers: Sequence[Scatterer],
    t_s: np.ndarray,
    impairments: ChannelImpairments,
    params: DerivedParams,
) -> np.ndarray:
    """Noise-free returns of ``scatterers`` for the chirps starting at ``t_s``."""
    n_channels = config.num_channels
    t_f = np.arange(config.samples_per_chirp) / config.fs_hz
    total = np.zeros((t_s.size, n_channels, config.samples_per_chirp), dtype=np.complex128)
    for scatterer in scatterers:
        ranges, velocities, azimuths = scatterer.sample(t_s)
        _check_bounds(scatterer, ranges, velocities, params)
        beat = 2.0 * config.slope_hz_per_s * ranges / SPEED_OF_LIGHT
        base = scatterer.amplitude * np.exp(
            1j
            * (
                2.0 * np.pi * beat[:, None] * t_f[None, :]
                + (4.0 * np.pi / config.wavelength) * ranges[:, None]
            )
        )
        steering = np.exp(1j * (channel_phases(azimuths, n_channels) + impairments.mismatch))
        total += base[:, None, :] * steering[:, :, None]
    return total


def synthesize_frame(
    config: ChirpConfig,
    scatterers: Sequence[Scatterer],
    frame_start_s: float,
    rng: np.random.Generator,
    impairments: ChannelImpairments | None = None,
    static_part: np.ndarray | None = None,
) -> np.ndarray:
    """Synthesize every chirp and channel of one frame.

    Vectorised counterpart of ``synthesize_chirp``; without noise both give
    the same samples.

    Args:
        config: Waveform.
        scatterers: Reflectors to evaluate for this frame.
        frame_start_s: Slow time of the first chirp.
        rng: Generator for phase and thermal noise.
        impairments: Channel mismatch/leakage; ideal channels when omitted.
        static_part: Precomputed noise-free returns of stationary reflectors,
            added before impairment noise.

    Returns:
        Complex array of shape ``(N, L, samples_per_chirp)``.
    """
    params = derive_params(config)
    impairments = impairments or ChannelImpairments.none(config.num_channels)
    t_s = frame_start_s + np.arange(config.chirps_per_frame) * config.chirp_period_s
    frame = _scatter_sum(config, scatterers, t_s, impairments, params)
    if static_part is not None:
        frame += static_part

    if np.any(impairments.leakage != 0):
        t_f = np.arange(config.samples_per_chirp) / config.fs_hz
        tone = _leakage_tone(config, params, t_f)
        frame += impairments.leakage[None, :, None] * tone[None, None, :]
    return _add_impairment_noise(frame, config, rng)


def frame_count(config: ChirpConfig, duration_s: float) -> int:
    """Whole frames that fit in ``duration_s``."""
    return int(math.floor(duration_s / config.frame_period_s + 1e-9))


def iter_frames(
    config: ChirpConfig,
    script: MotionScript,
    seed: int,
    start_time_ms: int = 0,
    device_seed: int | None = None,
) -> Iterator[RadarCube]:
    """Stream a scripted scene one single-frame cube at a time.

    Yields exactly the frames ``simulate`` would stack, so long scenes can be
    processed without holding the whole recording in memory.  Stationary
    reflectors are evaluated once per run.  With a ``device_seed`` the channel
    impairments belong to that radar unit and repeat across its recordings;
    otherwise they are drawn per run.
    """
    num_frames = frame_count(config, script.duration_s)
    if num_frames < 1:
        raise ValueError(
            f"script of {script.duration_s} s is shorter than one "
            f"{config.frame_period_s} s frame"
        )
    rng = np.random.default_rng(seed)
    if device_seed is None:
        impairments = draw_impairments(config, rng)
    else:
        impairments = draw_impairments(config, np.random.default_rng([device_seed, 0x1EA7]))
    params = derive_params(config)
    still = [s for s in script.all_scatterers if isinstance(s.trajectory, Stationary)]
    moving = [s for s in script.all_scatterers if not isinstance(s.trajectory, Stationary)]
    static_part = None
    if still:
        t_s = np.arange(config.chirps_per_frame) * config.chirp_period_s
        static_part = _scatter_sum(config, still, t_s, impairments, params)
    logger.debug(
        "Simulating %s: %d frames, %d moving + %d stationary scatterers, seed=%d",
        script.activity,
        num_frames,
        len(moving),
        len(still),
        seed,
    )
    for index in range(num_frames):
        frame_start = index * config.frame_period_s
        data = synthesize_frame(config, moving, frame_start, rng, impairments, static_part)
        yield RadarCube(
            config=config,
            data=data[None],
            start_time_ms=start_time_ms + round(frame_start * 1000.0),
        )


def simulate(
    config: ChirpConfig,
    script: MotionScript,
    seed: int,
    start_time_ms: int = 0,
    device_seed: int | None = None,
) -> RadarCube:
    """Render a scripted scene into a radar cube.

    Args:
        config: Waveform.
        script: Scene to render.
        seed: Seed for impairments and noise.
        start_time_ms: Epoch milliseconds of the first chirp.
        device_seed: Radar unit whose fixed impairments to use.

    Returns:
        Cube of ``floor(duration / frame_period)`` frames.
    """
    frames = [cube.data[0] for cube in iter_frames(config, script, seed, start_time_ms, device_seed)]
    return RadarCube(config=config, data=np.stack(frames), start_time_ms=start_time_ms)
