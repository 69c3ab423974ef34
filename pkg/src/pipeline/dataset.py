"""Synthetic training corpora.

A corpus is a directory of JTF0 spectrograms (one per simulated recording)
plus a JSON-lines manifest listing every 50-column window with its label,
subject and session.  "Subjects" are seed ranges that perturb template
amplitudes and frequencies; "sessions" are further seed offsets, so the
session-independent and unseen-subject splits can be reproduced without
human recordings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from tqdm import tqdm

from src.formats import write_jtf, write_manifest
from src.pipeline.dsp_chain import (
    DEFAULT_STRIDE,
    DOPPLER_BINS,
    WINDOW_STEPS,
    CouplingProfile,
    JTFSpectrogram,
    JtfStream,
    range_fft,
)
from src.pipeline.motion import Environment, SubjectProfile, generate_motion
from src.pipeline.radar_sim import iter_frames
from src.schemas.schemas import ACTIVITIES, LOW_CLUTTER_ACTIVITIES, Activity, ChirpConfig, ManifestEntry

logger = logging.getLogger(__name__)

CALIBRATION_SECONDS = 3.0


@dataclass(frozen=True)
class CorpusSpec:
    """Size and seeding of a synthetic corpus.

    Attributes:
        subjects: Synthetic subjects.
        sessions: Sessions per subject.
        minutes_per_class: Recorded minutes per class and subject, spread
            evenly over the sessions.
        classes: 6 for the cluttered home corpus, 4 for the open-hall corpus.
        seed: Base seed of every recording.
        stride: Columns between consecutive windows.
        max_recording_s: Longest single recording; longer session chunks
            are split.
    """

    subjects: int = 2
    sessions: int = 5
    minutes_per_class: float = 8.0
    classes: int = 6
    seed: int = 0
    stride: int = DEFAULT_STRIDE
    max_recording_s: float = 60.0

    def __post_init__(self) -> None:
        if self.classes not in (4, 6):
            raise ValueError(f"corpus class count must be 4 or 6, got {self.classes}")
        if self.subjects < 1 or self.sessions < 1 or self.minutes_per_class <= 0:
            raise ValueError("subjects, sessions and minutes_per_class must be positive")

    @property
    def activities(self) -> tuple[Activity, ...]:
        return ACTIVITIES if self.classes == 6 else LOW_CLUTTER_ACTIVITIES

    @property
    def environment(self) -> Environment:
        return Environment.HOME if self.classes == 6 else Environment.LOW_CLUTTER


def recording_seed(*keys: int) -> int:
    """Stable 32-bit seed derived from a tuple of integers."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def empty_room_coupling(
    config: ChirpConfig,
    environment: Environment,
    room_seed: int,
    device_seed: int,
    seconds: float = CALIBRATION_SECONDS,
) -> CouplingProfile:
    """Coupling profile of the empty room, as an installer would record it."""
    script = generate_motion(
        Activity.EMPTY, seconds, recording_seed(room_seed, 0xE), environment=environment, room_seed=room_seed
    )
    total = np.zeros((config.num_channels, config.range_bins), dtype=np.complex128)
    chirps = 0
    for frame in iter_frames(config, script, recording_seed(device_seed, 0xE), device_seed=device_seed):
        profile = range_fft(frame)
        total += profile.data.sum(axis=0)
        chirps += profile.num_chirps
    return CouplingProfile(config=config, mean=total / chirps)


def record_spectrogram(
    config: ChirpConfig,
    activity: Activity,
    duration_s: float,
    seed: int,
    *,
    environment: Environment,
    subject: SubjectProfile,
    room_seed: int,
    device_seed: int,
    coupling: CouplingProfile | None,
) -> JTFSpectrogram:
    """Simulate one recording and stream it through the DSP chain."""
    script = generate_motion(
        activity, duration_s, seed, environment=environment, subject=subject, room_seed=room_seed
    )
    stream = JtfStream(config, coupling)
    chunks: list[np.ndarray] = []
    for frame in iter_frames(config, script, seed, device_seed=device_seed):
        columns, _ = stream.push(frame)
        if columns.size:
            chunks.append(columns)
    columns = np.concatenate(chunks) if chunks else np.zeros((0, DOPPLER_BINS))
    return JTFSpectrogram(
        columns=columns,
        column_period_ms=stream.column_period_ms,
        v_max=stream.v_max,
        start_time_ms=0,
        label=activity.value,
    )


def generate_corpus(
    out_dir: str | Path,
    config: ChirpConfig,
    corpus: CorpusSpec,
    progress: bool = False,
) -> Path:
    """Simulate a labelled corpus and write its manifest.

    Every subject lives in the same room seen by the same radar; the room's
    empty-scene coupling profile is recorded once and subtracted from every
    recording.

    Returns:
        Path of ``manifest.jsonl`` inside ``out_dir``.
    """
    out_dir = Path(out_dir)
    (out_dir / "spectrograms").mkdir(parents=True, exist_ok=True)
    coupling = empty_room_coupling(config, corpus.environment, corpus.seed, corpus.seed)

    seconds = corpus.minutes_per_class * 60.0 / corpus.sessions
    parts = max(1, int(np.ceil(seconds / corpus.max_recording_s)))
    jobs = [
        (subject, session, activity, part)
        for subject in range(corpus.subjects)
        for session in range(corpus.sessions)
        for activity in corpus.activities
        for part in range(parts)
    ]
    entries: list[ManifestEntry] = []
    logger.info(
        "Generating %d-class corpus: %d subjects x %d sessions, %.1f s per class and session",
        corpus.classes,
        corpus.subjects,
        corpus.sessions,
        seconds,
    )
    for subject, session, activity, part in tqdm(jobs, desc="recordings", disable=None if progress else True):
        class_index = ACTIVITIES.index(activity)
        seed = recording_seed(corpus.seed, subject, session, class_index, part)
        spectrogram = record_spectrogram(
            config,
            activity,
            seconds / parts,
            seed,
            environment=corpus.environment,
            subject=SubjectProfile.for_subject(subject, corpus.seed),
            room_seed=corpus.seed,
            device_seed=corpus.seed,
            coupling=coupling,
        )
        spectrogram = replace(spectrogram, subject_id=subject, session_id=session)
        name = f"s{subject}_k{session}_{activity.value}_{part}.jtf"
        write_jtf(out_dir / "spectrograms" / name, spectrogram)
        count = max(0, (spectrogram.num_columns - WINDOW_STEPS) // corpus.stride + 1)
        entries.extend(
            ManifestEntry(
                path=f"spectrograms/{name}",
                label=activity.value,
                subject=subject,
                session=session,
                column=column,
            )
            for column in range(0, count * corpus.stride, corpus.stride)
        )

    manifest = out_dir / "manifest.jsonl"
    write_manifest(manifest, entries)
    logger.info("Corpus written to %s: %d windows from %d recordings", out_dir, len(entries), len(jobs))
    return manifest
