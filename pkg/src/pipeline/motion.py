"""Activity motion templates.

Each activity is a small kinematic template: a torso scatterer plus limb
scatterers whose radial motion is the torso's motion plus a periodic
offset, the usual body-plus-appendage micro-Doppler model.  Cluttered
rooms add stationary furniture reflectors.

Trajectories are frozen callables mapping slow time to
``(range, radial velocity, azimuth)`` so they can be evaluated directly in
tests and shared between scatterers (a limb's base is the torso path).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from src._compat import StrEnum

import numpy as np

from src.pipeline.radar_sim import MotionScript, Scatterer, Stationary, TrajectoryFn
from src.schemas.schemas import ACTIVITIES, Activity, parse_activity

logger = logging.getLogger(__name__)

DEFAULT_MAX_SPEED_MPS = 2.4
"""Speed ceiling for any body part; 0.95 x v_max of the bundled waveforms."""

LIMB_AMPLITUDE = 0.3
FURNITURE_RANGE_M = (0.8, 5.0)
TRACE_ANGLES_DEG = (0.0, 15.0, 30.0, 45.0, 60.0)

Template = tuple[TrajectoryFn, list[TrajectoryFn], dict[str, float]]
"""Torso path, limb paths and the parameters drawn for them."""


class Environment(StrEnum):
    """Room the scene is staged in."""

    HOME = "home"
    LOW_CLUTTER = "low_clutter"


@dataclass(frozen=True, slots=True)
class SubjectProfile:
    """Per-subject scaling of template amplitudes, rates and walking speed."""

    amplitude: float = 1.0
    frequency: float = 1.0
    speed: float = 1.0

    @classmethod
    def for_subject(cls, subject: int, base_seed: int = 0) -> SubjectProfile:
        """Deterministic profile of synthetic subject ``subject`` (factors in [0.85, 1.15])."""
        rng = np.random.default_rng([base_seed, 7919, subject])
        amplitude, frequency, speed = rng.uniform(0.85, 1.15, 3)
        return cls(amplitude=float(amplitude), frequency=float(frequency), speed=float(speed))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Breathing:
    """Fixed position with a sinusoidal chest displacement."""

    range_m: float
    azimuth_rad: float
    displacement_m: float
    rate_hz: float
    phase_rad: float = 0.0

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        arg = 2.0 * np.pi * self.rate_hz * t + self.phase_rad
        ranges = self.range_m + self.displacement_m * np.sin(arg)
        velocities = self.displacement_m * 2.0 * np.pi * self.rate_hz * np.cos(arg)
        return ranges, velocities, np.full(np.shape(t), self.azimuth_rad)


@dataclass(frozen=True, slots=True)
class Oscillation:
    """A base path plus a radial sinusoid, optionally gated to bursts.

    Inside a burst ``[a, b)`` the sinusoid is shaped by ``sin^2`` so that
    both offset and velocity rise from and return to zero.
    """

    base: TrajectoryFn
    amplitude_m: float
    rate_hz: float
    phase_rad: float = 0.0
    bursts: tuple[tuple[float, float], ...] = ()

    def _envelope(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.bursts:
            return np.ones_like(t), np.zeros_like(t)
        env = np.zeros_like(t)
        slope = np.zeros_like(t)
        for start, stop in self.bursts:
            inside = (t >= start) & (t < stop)
            width = stop - start
            u = (t[inside] - start) / width
            env[inside] = np.sin(np.pi * u) ** 2
            slope[inside] = (np.pi / width) * np.sin(2.0 * np.pi * u)
        return env, slope

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ranges, velocities, azimuths = self.base(t)
        env, slope = self._envelope(t)
        arg = 2.0 * np.pi * self.rate_hz * t + self.phase_rad
        offset = self.amplitude_m * env * np.sin(arg)
        rate = self.amplitude_m * (
            slope * np.sin(arg) + env * 2.0 * np.pi * self.rate_hz * np.cos(arg)
        )
        return ranges + offset, velocities + rate, azimuths


@dataclass(frozen=True, slots=True)
class Excursions:
    """A base path plus raised-cosine excursions (squat / pick-up proxy).

    ``events`` holds ``(start_s, period_s)`` pairs; each excursion moves
    ``amplitude_m`` away and back within one period.
    """

    base: TrajectoryFn
    amplitude_m: float
    events: tuple[tuple[float, float], ...]

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ranges, velocities, azimuths = self.base(t)
        offset = np.zeros_like(t)
        rate = np.zeros_like(t)
        for start, period in self.events:
            inside = (t >= start) & (t < start + period)
            u = 2.0 * np.pi * (t[inside] - start) / period
            offset[inside] = 0.5 * self.amplitude_m * (1.0 - np.cos(u))
            rate[inside] = self.amplitude_m * np.pi / period * np.sin(u)
        return ranges + offset, velocities + rate, azimuths


@dataclass(frozen=True, slots=True)
class WaypointPath:
    """Back-and-forth walk through radial waypoints with stride-rate speed modulation.

    The radial speed is ``speed * radial_factor * (1 + depth * sin(2 pi f t))``;
    the walker reverses direction at each waypoint.  Distance travelled has
    a closed form, so the path is evaluated without integration.

    Attributes:
        ranges_m: Waypoint ranges; consecutive entries differ.
        azimuths_rad: Azimuth at each waypoint, interpolated along legs.
        speed_mps: Mean walking speed.
        stride_hz: Stride frequency of the speed modulation.
        depth: Modulation depth in [0, 1).
        radial_factor: ``cos`` of the angle between walking direction and line of sight.
    """

    ranges_m: tuple[float, ...]
    azimuths_rad: tuple[float, ...]
    speed_mps: float
    stride_hz: float
    depth: float = 0.15
    radial_factor: float = 1.0

    def distance(self, t: np.ndarray) -> np.ndarray:
        """Radial distance covered since ``t = 0``."""
        omega = 2.0 * np.pi * self.stride_hz
        radial = self.speed_mps * self.radial_factor
        return radial * (t + self.depth / omega * (1.0 - np.cos(omega * t)))

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ranges = np.asarray(self.ranges_m)
        azimuths = np.asarray(self.azimuths_rad)
        legs = np.abs(np.diff(ranges))
        starts = np.concatenate(([0.0], np.cumsum(legs)))
        travelled = self.distance(t)
        leg = np.clip(np.searchsorted(starts, travelled, side="right") - 1, 0, legs.size - 1)
        along = np.minimum(travelled - starts[leg], legs[leg])
        direction = np.sign(ranges[leg + 1] - ranges[leg])
        frac = along / legs[leg]
        speed = (
            self.speed_mps
            * self.radial_factor
            * (1.0 + self.depth * np.sin(2.0 * np.pi * self.stride_hz * t))
        )
        return (
            ranges[leg] + direction * along,
            direction * speed,
            azimuths[leg] + (azimuths[leg + 1] - azimuths[leg]) * frac,
        )


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


def _bursts(
    rng: np.random.Generator,
    duration_s: float,
    gap_s: tuple[float, float] = (4.0, 12.0),
    length_s: tuple[float, float] = (1.0, 3.0),
) -> tuple[tuple[float, float], ...]:
    bursts: list[tuple[float, float]] = []
    start = float(rng.uniform(0.0, gap_s[0]))
    while start < duration_s:
        stop = start + float(rng.uniform(*length_s))
        bursts.append((start, stop))
        start = stop + float(rng.uniform(*gap_s))
    return tuple(bursts)


def _capped(amplitude_m: float, rate_hz: float, budget_mps: float) -> float:
    """Largest amplitude not exceeding ``amplitude_m`` whose peak speed fits the budget."""
    peak = 2.0 * np.pi * rate_hz * amplitude_m
    if peak <= budget_mps or peak == 0:
        return amplitude_m
    return budget_mps / (2.0 * np.pi * rate_hz)


def _torso_breathing(
    rng: np.random.Generator,
    subject: SubjectProfile,
    range_m: float,
    azimuth: float,
) -> Breathing:
    return Breathing(
        range_m=range_m,
        azimuth_rad=azimuth,
        displacement_m=0.006 * subject.amplitude,
        rate_hz=float(rng.uniform(0.2, 0.4)) * subject.frequency,
        phase_rad=float(rng.uniform(0, 2 * np.pi)),
    )


def _sedentary(
    rng: np.random.Generator, duration_s: float, subject: SubjectProfile, max_speed: float
) -> Template:
    r0, az = float(rng.uniform(1.5, 4.0)), float(rng.uniform(-0.6, 0.6))
    torso = _torso_breathing(rng, subject, r0, az)
    limbs = []
    for _ in range(2):
        hand = Stationary(r0 - float(rng.uniform(0.2, 0.4)), az)
        limbs.append(
            Oscillation(
                base=hand,
                amplitude_m=float(rng.uniform(0.005, 0.01)) * subject.amplitude,
                rate_hz=float(rng.uniform(0.5, 1.5)) * subject.frequency,
                phase_rad=float(rng.uniform(0, 2 * np.pi)),
                bursts=_bursts(rng, duration_s),
            )
        )
    return torso, limbs, {"breathing_hz": torso.rate_hz}


def _washing(
    rng: np.random.Generator, duration_s: float, subject: SubjectProfile, max_speed: float
) -> Template:
    r0, az = float(rng.uniform(1.5, 4.0)), float(rng.uniform(-0.6, 0.6))
    torso = _torso_breathing(rng, subject, r0, az)
    sink = Stationary(r0 - 0.3, az)
    limbs = []
    for _ in range(2):
        rate = float(rng.uniform(0.5, 1.5)) * subject.frequency
        limbs.append(
            Oscillation(
                base=sink,
                amplitude_m=_capped(0.2 * subject.amplitude, rate, max_speed),
                rate_hz=rate,
                phase_rad=float(rng.uniform(0, 2 * np.pi)),
            )
        )
    return torso, limbs, {"scrub_hz": limbs[0].rate_hz}


def _vacuuming(
    rng: np.random.Generator, duration_s: float, subject: SubjectProfile, max_speed: float
) -> Template:
    r0, az = float(rng.uniform(2.0, 3.5)), float(rng.uniform(-0.5, 0.5))
    drift = min(1.0 * subject.amplitude, 1.0)
    drift_hz = float(rng.uniform(0.06, 0.6 / (2 * np.pi * drift)))
    torso = Oscillation(
        base=Stationary(r0, az),
        amplitude_m=drift,
        rate_hz=drift_hz,
        phase_rad=float(rng.uniform(0, 2 * np.pi)),
    )
    stroke_hz = 1.0 * subject.frequency
    budget = max_speed - 2 * np.pi * drift_hz * drift
    arm = Oscillation(
        base=torso,
        amplitude_m=_capped(0.2 * subject.amplitude, stroke_hz, budget),
        rate_hz=stroke_hz,
        phase_rad=float(rng.uniform(0, 2 * np.pi)),
    )
    leg = Oscillation(
        base=torso,
        amplitude_m=0.05 * subject.amplitude,
        rate_hz=0.5 * subject.frequency,
        phase_rad=float(rng.uniform(0, 2 * np.pi)),
    )
    return torso, [arm, leg], {"drift_hz": drift_hz, "stroke_hz": stroke_hz}


def _in_place_movement(
    rng: np.random.Generator, duration_s: float, subject: SubjectProfile, max_speed: float
) -> Template:
    r0, az = float(rng.uniform(1.5, 4.0)), float(rng.uniform(-0.6, 0.6))
    events: list[tuple[float, float]] = []
    start = float(rng.uniform(0.0, 0.5))
    while start < duration_s:
        rate = min(float(rng.uniform(0.5, 0.8)) * subject.frequency, 0.8)
        events.append((start, 1.0 / rate))
        start += 1.0 / rate + float(rng.uniform(0.2, 1.5))
    torso = Excursions(
        base=_torso_breathing(rng, subject, r0, az),
        amplitude_m=0.3 * subject.amplitude,
        events=tuple(events),
    )
    reach = Excursions(base=torso, amplitude_m=0.25 * subject.amplitude, events=tuple(events))
    fidget = Oscillation(
        base=torso,
        amplitude_m=0.02 * subject.amplitude,
        rate_hz=float(rng.uniform(0.5, 1.5)) * subject.frequency,
        phase_rad=float(rng.uniform(0, 2 * np.pi)),
    )
    return torso, [reach, fidget], {"excursions": float(len(events))}


def _walk_waypoints(
    rng: np.random.Generator,
    environment: Environment,
    reach_m: float,
) -> tuple[tuple[float, ...], tuple[float, ...], float]:
    if environment is Environment.LOW_CLUTTER:
        angle = math.radians(float(rng.choice(TRACE_ANGLES_DEG)))
        near, far = float(rng.uniform(1.0, 1.5)), float(rng.uniform(3.5, 4.5))
        count = int(reach_m // (far - near)) + 2
        ranges = tuple(near if i % 2 == 0 else far for i in range(count))
        azimuth = float(rng.uniform(-0.3, 0.3))
        return ranges, tuple(azimuth for _ in ranges), math.cos(angle)

    ranges = [float(rng.uniform(1.0, 4.5))]
    covered = 0.0
    while covered <= reach_m:
        nxt = float(rng.uniform(1.0, 4.5))
        while abs(nxt - ranges[-1]) < 1.0:
            nxt = float(rng.uniform(1.0, 4.5))
        covered += abs(nxt - ranges[-1])
        ranges.append(nxt)
    azimuths = tuple(float(a) for a in rng.uniform(-0.6, 0.6, len(ranges)))
    return tuple(ranges), azimuths, 1.0


def _walking(
    rng: np.random.Generator,
    duration_s: float,
    subject: SubjectProfile,
    max_speed: float,
    environment: Environment,
) -> Template:
    speed = float(np.clip(rng.uniform(0.8, 1.6) * subject.speed, 0.85, 1.55))
    stride = float(np.clip(rng.uniform(0.9, 1.1) * subject.frequency, 0.8, 1.2))
    depth = 0.15
    reach = speed * (duration_s + depth / (2 * np.pi * stride) * 2) + 1.0
    ranges, azimuths, radial = _walk_waypoints(rng, environment, reach)
    torso = WaypointPath(
        ranges_m=ranges,
        azimuths_rad=azimuths,
        speed_mps=speed,
        stride_hz=stride,
        depth=depth,
        radial_factor=radial,
    )
    budget = max_speed - speed * radial * (1 + depth)
    limbs = []
    # arms swing less than legs; opposite limbs in anti-phase
    for gain, phase in ((0.5, 0.0), (0.5, np.pi), (1.0, np.pi / 2), (1.0, 3 * np.pi / 2)):
        peak = min(gain * speed * radial, budget)
        limbs.append(
            Oscillation(
                base=torso,
                amplitude_m=peak / (2 * np.pi * 2 * stride),
                rate_hz=2 * stride,
                phase_rad=phase,
            )
        )
    return torso, limbs, {"speed_mps": speed, "stride_hz": stride, "radial_factor": radial}


def _furniture(rng: np.random.Generator) -> tuple[Scatterer, ...]:
    count = int(rng.integers(3, 7))
    return tuple(
        Scatterer(
            trajectory=Stationary(
                float(rng.uniform(*FURNITURE_RANGE_M)),
                float(rng.uniform(-1.0, 1.0)),
            ),
            amplitude=float(rng.uniform(0.5, 1.5)),
            name=f"furniture_{i}",
        )
        for i in range(count)
    )


def generate_motion(
    activity: Activity | str | int,
    duration_s: float,
    seed: int,
    *,
    environment: Environment = Environment.HOME,
    subject: SubjectProfile | None = None,
    room_seed: int | None = None,
    max_speed_mps: float = DEFAULT_MAX_SPEED_MPS,
) -> MotionScript:
    """Build the scripted scene for one activity.

    Args:
        activity: Class name or index.
        duration_s: Scene length; must be positive.
        seed: Template seed; distinct seeds give distinct torso paths.
        environment: ``home`` adds furniture; ``low_clutter`` walks straight traces.
        subject: Per-subject perturbation; neutral when omitted.
        room_seed: Seed of the furniture layout (defaults to ``seed``) so every
            recording of one room can share its clutter.
        max_speed_mps: Ceiling on any body part's radial speed.

    Returns:
        A deterministic ``MotionScript``.

    Raises:
        UnknownActivity: ``activity`` is not one of the six classes.
        ValueError: ``duration_s`` is not positive.
    """
    activity = parse_activity(activity)
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    subject = subject or SubjectProfile()
    environment = Environment(environment)
    rng = np.random.default_rng([seed, ACTIVITIES.index(activity)])
    clutter: tuple[Scatterer, ...] = ()
    if environment is Environment.HOME:
        clutter = _furniture(np.random.default_rng([seed if room_seed is None else room_seed, 101]))

    if activity is Activity.EMPTY:
        return MotionScript(activity, duration_s, seed, (), clutter)

    if activity is Activity.WALKING:
        torso, limbs, params = _walking(rng, duration_s, subject, max_speed_mps, environment)
    else:
        template = {
            Activity.SEDENTARY: _sedentary,
            Activity.WASHING: _washing,
            Activity.VACUUMING: _vacuuming,
            Activity.IN_PLACE_MOVEMENT: _in_place_movement,
        }[activity]
        torso, limbs, params = template(rng, duration_s, subject, max_speed_mps)

    scatterers = (Scatterer(torso, 1.0, "torso"),) + tuple(
        Scatterer(limb, LIMB_AMPLITUDE, f"limb_{i}") for i, limb in enumerate(limbs)
    )
    logger.debug("Generated %s script (%s, seed=%d): %s", activity, environment, seed, params)
    return MotionScript(activity, duration_s, seed, scatterers, clutter, params)


def sample_path(scatterer: Scatterer, duration_s: float, step_s: float = 0.01) -> np.ndarray:
    """Evaluate a scatterer on a uniform grid; columns are t, R, v, azimuth."""
    t = np.arange(0.0, duration_s, step_s)
    ranges, velocities, azimuths = scatterer.sample(t)
    return np.column_stack([t, ranges, velocities, azimuths])

