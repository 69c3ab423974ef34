"""Shared fixtures: waveforms, a small classifier and a scratch event log."""

from __future__ import annotations

from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

from src.models.event_store import EventStore
from src.models.gru import GruModel
from src.pipeline.radar_sim import Scatterer, Stationary
from src.schemas.schemas import ArchitectureConfig, ChirpConfig, Room, RoomEvent, Status

DATA_DIR = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture(scope="session")
def radar_config() -> ChirpConfig:
    """The bundled 77 GHz evaluation-board waveform."""
    return ChirpConfig.from_json(DATA_DIR / "ti_awr1443.json")


@pytest.fixture(scope="session")
def clean_config(radar_config: ChirpConfig) -> ChirpConfig:
    """Same waveform without noise, phase noise or leakage."""
    return radar_config.model_copy(
        update={"noise_floor": 0.0, "phase_noise_std": 0.0, "leakage_amplitude": 0.0}
    )


@pytest.fixture(scope="session")
def desk_config() -> ChirpConfig:
    """Reduced waveform used for corpus-scale simulation."""
    return ChirpConfig.from_json(DATA_DIR / "desk_scale.json")


@pytest.fixture
def tiny_model() -> GruModel:
    arch = ArchitectureConfig(num_layers=1, hidden_size=4, fc_hidden=[], input_dim=256, time_steps=50)
    return GruModel.create(arch, seed=0)


@pytest.fixture
def store(tmp_path: Path) -> Iterator[EventStore]:
    with EventStore(tmp_path / "events.jsonl", fsync=False) as event_store:
        yield event_store


def static_target(range_m: float, amplitude: float = 1.0) -> Scatterer:
    return Scatterer(Stationary(range_m), amplitude, "target")


def moving_target(range_m: float, velocity_mps: float, amplitude: float = 1.0) -> Scatterer:
    def path(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=np.float64)
        return range_m + velocity_mps * t, np.full(t.shape, velocity_mps), np.zeros(t.shape)

    return Scatterer(path, amplitude, "target")


def event(ts_ms: int, status: Status) -> RoomEvent:
    """Event with the room its status implies."""
    room = {
        Status.IN_BED: Room.BEDROOM,
        Status.IN_WASHROOM: Room.WASHROOM,
        Status.OUT_OF_HOME: Room.NONE,
    }.get(status, Room.LIVINGROOM)
    return RoomEvent(ts_ms=ts_ms, room=room, status=status)
