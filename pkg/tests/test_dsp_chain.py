"""DSP chain tests.

Group 1: coupling reduction and clutter removal.
Group 2: STFT placement, energy and framing.
Group 3: windows and streaming against the batch chain.
"""

from __future__ import annotations

import numpy as np
import pytest

from src.errors import ConfigMismatch, ShapeMismatch, TooFewChirps, TooShort
from src.pipeline.dsp_chain import (
    DOPPLER_BINS,
    STFT_HOP,
    STFT_WINDOW,
    ZERO_DOPPLER_BIN,
    CouplingProfile,
    GruInputWindow,
    JTFSpectrogram,
    JtfStream,
    RangeProfile,
    SlidingWindows,
    SlowTimeSeries,
    bin_velocities,
    clutter_removal,
    compute_jtf,
    frame_windows,
    mutual_coupling_reduction,
    process_cube,
    range_fft,
    stft,
)
from src.pipeline.motion import generate_motion
from src.pipeline.radar_sim import RadarCube, Scatterer, derive_params, iter_frames, simulate, synthesize_frame
from src.schemas.schemas import Activity, ChirpConfig
from tests.conftest import moving_target, static_target


def _profile(config: ChirpConfig, scatterers: list[Scatterer], frames: int = 1) -> RangeProfile:
    rng = np.random.default_rng(0)
    data = np.stack(
        [synthesize_frame(config, scatterers, i * config.frame_period_s, rng) for i in range(frames)]
    )
    return range_fft(RadarCube(config=config, data=data))


def _tone(config: ChirpConfig, velocity_mps: float, samples: int = 512) -> SlowTimeSeries:
    t = np.arange(samples) * config.chirp_period_s
    return SlowTimeSeries(
        samples=np.exp(4j * np.pi * velocity_mps * t / config.wavelength),
        chirp_period_s=config.chirp_period_s,
        v_max=derive_params(config).max_velocity_mps,
    )


def _spectrogram(columns: int) -> JTFSpectrogram:
    grid = np.arange(columns, dtype=np.float64)[:, None] * np.ones(DOPPLER_BINS)
    return JTFSpectrogram(columns=grid, column_period_ms=24.5, v_max=2.54, start_time_ms=1000)


# ---------------------------------------------------------------------------
# Group 1: coupling and clutter
# ---------------------------------------------------------------------------


class TestCouplingReduction:
    def test_empty_calibration_cancels_identical_scene(self, desk_config: ChirpConfig) -> None:
        config = desk_config.model_copy(update={"noise_floor": 0.0, "phase_noise_std": 0.0})
        scene = _profile(config, [static_target(1.2), static_target(3.4, 0.8)], frames=2)
        reduced = mutual_coupling_reduction(scene, scene)
        assert np.max(np.abs(reduced.data)) < 1e-9

    def test_calibration_from_another_waveform_rejected(
        self, desk_config: ChirpConfig, radar_config: ChirpConfig
    ) -> None:
        scene = _profile(desk_config, [static_target(2.0)])
        with pytest.raises(ConfigMismatch):
            mutual_coupling_reduction(scene, CouplingProfile.zeros(radar_config))

    def test_coupling_profile_shape_checked(self, desk_config: ChirpConfig) -> None:
        with pytest.raises(ShapeMismatch):
            CouplingProfile(desk_config, np.zeros((3, desk_config.range_bins), dtype=np.complex128))


class TestClutterRemoval:
    def test_static_target_suppressed_by_40_db(self, clean_config: ChirpConfig) -> None:
        profile = _profile(clean_config, [static_target(2.0)])
        before = np.sum(np.abs(profile.data[:, :, 52]) ** 2)
        after = np.sum(np.abs(clutter_removal(profile).data[:, :, 52]) ** 2)
        assert 10 * np.log10(before / max(after, 1e-300)) >= 40

    def test_moving_target_keeps_its_energy(self, clean_config: ChirpConfig) -> None:
        profile = _profile(clean_config, [moving_target(2.0, 0.5)])
        bins = slice(45, 60)
        before = np.sum(np.abs(profile.data[:, :, bins]) ** 2)
        after = np.sum(np.abs(clutter_removal(profile).data[:, :, bins]) ** 2)
        assert after >= 0.9 * before

    def test_block_mean_is_zero(self, desk_config: ChirpConfig) -> None:
        cube = simulate(desk_config, generate_motion(Activity.WASHING, 0.3, seed=2), seed=2)
        profile = range_fft(cube)
        removed = clutter_removal(profile).data
        rms = np.sqrt(np.mean(np.abs(profile.data) ** 2))
        for start in range(0, removed.shape[0], desk_config.chirps_per_frame):
            block = removed[start : start + desk_config.chirps_per_frame]
            assert np.max(np.abs(block.mean(axis=0))) < 1e-9 * rms

    def test_trailing_block_uses_its_own_mean(self, desk_config: ChirpConfig) -> None:
        data = np.random.default_rng(1).standard_normal((300, 2, 32)) + 0j
        removed = clutter_removal(RangeProfile(desk_config, data)).data
        np.testing.assert_allclose(removed[256:].mean(axis=0), 0.0, atol=1e-12)

    def test_single_chirp_rejected(self, desk_config: ChirpConfig) -> None:
        with pytest.raises(TooFewChirps):
            clutter_removal(RangeProfile(desk_config, np.zeros((1, 2, 32), dtype=np.complex128)))

    def test_single_trailing_chirp_rejected(self, desk_config: ChirpConfig) -> None:
        with pytest.raises(TooFewChirps):
            clutter_removal(RangeProfile(desk_config, np.zeros((257, 2, 32), dtype=np.complex128)))


# ---------------------------------------------------------------------------
# Group 2: STFT
# ---------------------------------------------------------------------------


class TestStft:
    def test_receding_target_at_one_metre_per_second(self, radar_config: ChirpConfig) -> None:
        spectrogram = stft(_tone(radar_config, 1.0))
        peaks = spectrogram.columns.argmax(axis=1)
        assert np.all(np.abs(peaks - 178) <= 1)

    def test_approaching_target_below_zero_doppler(self, radar_config: ChirpConfig) -> None:
        spectrogram = stft(_tone(radar_config, -1.0))
        assert np.all(np.abs(spectrogram.columns.argmax(axis=1) - 78) <= 1)

    def test_parseval_per_column(self) -> None:
        rng = np.random.default_rng(5)
        samples = rng.standard_normal(640) + 1j * rng.standard_normal(640)
        spectrogram = stft(SlowTimeSeries(samples=samples, chirp_period_s=3.828125e-4, v_max=2.54))
        window = np.hamming(STFT_WINDOW)
        for index, column in enumerate(spectrogram.columns):
            segment = samples[index * 64 : index * 64 + STFT_WINDOW]
            assert column.sum() == pytest.approx(DOPPLER_BINS * np.sum(np.abs(window * segment) ** 2), rel=1e-10)

    def test_column_count_and_period(self, radar_config: ChirpConfig) -> None:
        spectrogram = stft(_tone(radar_config, 0.3, samples=512))
        assert spectrogram.num_columns == 7
        assert spectrogram.column_period_ms == pytest.approx(24.5)
        assert np.all(spectrogram.columns >= 0)

    def test_delaying_by_one_frame_shifts_columns(self, desk_config: ChirpConfig) -> None:
        profile = range_fft(simulate(desk_config, generate_motion(Activity.WALKING, 2.0, seed=7), seed=7))
        lead = range_fft(simulate(desk_config, generate_motion(Activity.SEDENTARY, 0.1, seed=8), seed=8))
        assert lead.num_frames == 1
        delayed = profile.with_data(np.concatenate([lead.data, profile.data]))

        original, shifted = compute_jtf(profile), compute_jtf(delayed)
        offset = desk_config.chirps_per_frame // STFT_HOP
        assert shifted.num_columns == original.num_columns + offset
        np.testing.assert_allclose(
            shifted.columns[offset:], original.columns, rtol=1e-9, atol=1e-9 * original.columns.max()
        )

    def test_short_series_rejected(self) -> None:
        with pytest.raises(TooShort):
            stft(SlowTimeSeries(samples=np.zeros(127, dtype=np.complex128), chirp_period_s=1e-3))

    def test_velocity_axis_is_centred(self) -> None:
        velocities = bin_velocities(2.5)
        assert velocities[ZERO_DOPPLER_BIN] == 0.0
        assert velocities[0] == pytest.approx(-2.5)
        assert velocities[1] - velocities[0] == pytest.approx(2 * 2.5 / DOPPLER_BINS)

    def test_random_velocities_end_to_end(self, desk_config: ChirpConfig) -> None:
        config = desk_config.model_copy(update={"noise_floor": 0.0, "phase_noise_std": 0.0, "leakage_amplitude": 0.0})
        resolution = 2 * derive_params(config).max_velocity_mps / DOPPLER_BINS
        rng = np.random.default_rng(21)
        for _ in range(10):
            velocity = float(rng.uniform(0.2, 2.0)) * float(rng.choice([-1.0, 1.0]))
            frame = synthesize_frame(config, [moving_target(2.5, velocity)], 0.0, rng)
            spectrogram = process_cube(RadarCube(config=config, data=frame[None]))
            expected = ZERO_DOPPLER_BIN + round(velocity / resolution)
            assert np.all(np.abs(spectrogram.columns.argmax(axis=1) - expected) <= 1)


# ---------------------------------------------------------------------------
# Group 3: windows and streaming
# ---------------------------------------------------------------------------


class TestWindows:
    @pytest.mark.parametrize(("columns", "starts"), [(50, [0]), (49, []), (70, [0, 10, 20])])
    def test_window_counts(self, columns: int, starts: list[int]) -> None:
        windows = frame_windows(_spectrogram(columns), stride=10)
        assert [int(w.matrix[0, 0]) for w in windows] == starts
        assert [w.start_time_ms for w in windows] == [1000 + round(s * 24.5) for s in starts]

    def test_stride_must_be_positive(self) -> None:
        with pytest.raises(ValueError):
            frame_windows(_spectrogram(60), stride=0)

    def test_window_shape_and_sign_checked(self) -> None:
        with pytest.raises(ShapeMismatch):
            GruInputWindow(matrix=np.zeros((49, 256)))
        with pytest.raises(ValueError):
            GruInputWindow(matrix=-np.ones((50, 256)))

    def test_sliding_windows_match_batch_framing(self) -> None:
        spectrogram = _spectrogram(70)
        times = [spectrogram.column_time_ms(i) for i in range(70)]
        sliding = SlidingWindows(stride=10)
        windows = sliding.extend(spectrogram.columns[:33], times[:33]) + sliding.extend(spectrogram.columns[33:], times[33:])
        batch = frame_windows(spectrogram, stride=10)
        assert len(windows) == len(batch) == 3
        for streamed, expected in zip(windows, batch):
            assert np.array_equal(streamed.matrix, expected.matrix)
            assert streamed.start_time_ms == expected.start_time_ms

    def test_reset_forgets_buffered_columns(self) -> None:
        spectrogram = _spectrogram(60)
        sliding = SlidingWindows(stride=10)
        sliding.extend(spectrogram.columns[:45], list(range(45)))
        sliding.reset()
        assert sliding.extend(spectrogram.columns[45:], list(range(45, 60))) == []


class TestStreaming:
    def test_stream_matches_batch_spectrogram(self, desk_config: ChirpConfig) -> None:
        script = generate_motion(Activity.WALKING, 2.0, seed=6)
        cube = simulate(desk_config, script, seed=6, start_time_ms=10_000)
        batch = compute_jtf(range_fft(cube))

        stream = JtfStream(desk_config)
        columns, times = [], []
        for frame in iter_frames(desk_config, script, seed=6, start_time_ms=10_000):
            new, stamps = stream.push(frame)
            columns.extend(new)
            times.extend(stamps)
        np.testing.assert_allclose(np.array(columns), batch.columns, rtol=1e-9, atol=1e-9)
        assert times == [batch.column_time_ms(i) for i in range(batch.num_columns)]

    def test_walking_ridges_swing_both_ways(self, desk_config: ChirpConfig) -> None:
        script = generate_motion(Activity.WALKING, 20.0, seed=4)
        spectrogram = process_cube(simulate(desk_config, script, seed=4))
        peak_velocity = bin_velocities(spectrogram.v_max)[spectrogram.columns.argmax(axis=1)]
        assert peak_velocity.max() > 0.6
        assert peak_velocity.min() < -0.6

    def test_sedentary_energy_stays_near_zero_doppler(self, desk_config: ChirpConfig) -> None:
        script = generate_motion(Activity.SEDENTARY, 4.0, seed=3)
        spectrogram = process_cube(simulate(desk_config, script, seed=3))
        slow = np.abs(bin_velocities(spectrogram.v_max)) <= 0.2
        energy = spectrogram.columns.sum(axis=0)
        assert energy[slow].sum() >= 0.95 * energy.sum()
