"""Application configuration settings.

All values can be overridden via environment variables, a `.env` file in the
working directory, or a per-process JSON config file passed to
``load_settings``.  The ``pydantic-settings`` library handles parsing, type
coercion, and validation automatically.  Precedence, highest first:
explicit keyword arguments, environment, `.env`, JSON file, defaults.

Example `.env` override::

    KAPPA=4.0
    MODEL_PATH=artifacts/model.grum
    STORE_PATH=/var/lib/roomwave/events.jsonl
"""

from __future__ import annotations

from pathlib import Path

from pydantic_settings import (
    BaseSettings,
    JsonConfigSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from src.schemas.schemas import Room


class Settings(BaseSettings):
    """Central configuration object for RoomWave processes.

    One JSON file per process (edge or service) populates this class; the
    environment overrides any top-level key by its upper-snake name.

    Attributes:
        rooms: Rooms the service expects decisions from before routing.
        room: Room an edge process monitors.
        bind_host: Interface the service listens on.
        bind_port: Wire-protocol port of the service.
        report_port: Port answering newline-delimited JSON report queries.
        http_port: Optional port for the HTTP/WebSocket surface (``None`` disables it).
        connect_host: Service host an edge connects to.
        connect_port: Service wire port an edge connects to.
        model_path: GRUM model file loaded by the service.
        store_path: Append-only event log.
        calibration_path: Presence calibration JSON used by an edge.
        radar_config_path: ``ChirpConfig`` JSON describing the edge radar.
        kappa: Presence threshold multiplier over the empty-room baseline.
        horizon_frames: Frames per presence decision.
        vote_window: Horizons considered by the majority vote.
        vote_required: Occupied horizons required within a full vote window.
        stride: Spectrogram columns between consecutive GRU windows.
        debounce_windows: Consecutive identical windows before a living-room
            status change is emitted.
        backoff_base_s: First reconnect delay of an edge.
        backoff_cap_s: Upper bound of the reconnect delay.
        edge_buffer_size: Maximum undelivered messages an edge keeps.
        heartbeat_every_horizons: Horizons between edge heartbeats.
        speedup: Replay acceleration of simulated streams (0 = as fast as possible).
        log_level: Root logging level for entry points.
    """

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    rooms: list[Room] = [Room.BEDROOM, Room.LIVINGROOM, Room.WASHROOM]
    room: Room = Room.LIVINGROOM
    bind_host: str = "127.0.0.1"
    bind_port: int = 7400
    report_port: int = 7401
    http_port: int | None = None
    connect_host: str = "127.0.0.1"
    connect_port: int = 7400
    model_path: str = "artifacts/model.grum"
    store_path: str = "artifacts/events.jsonl"
    calibration_path: str | None = None
    radar_config_path: str = "data/ti_awr1443.json"
    kappa: float = 3.0
    horizon_frames: int = 10  # ~1 s at a 98 ms frame period
    vote_window: int = 5
    vote_required: int = 3
    stride: int = 10
    debounce_windows: int = 2
    backoff_base_s: float = 1.0
    backoff_cap_s: float = 60.0
    edge_buffer_size: int = 512
    heartbeat_every_horizons: int = 5
    speedup: float = 0.0
    log_level: str = "INFO"

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Insert the JSON config file below the environment sources."""
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            JsonConfigSettingsSource(settings_cls),
            file_secret_settings,
        )


def load_settings(config_path: str | Path | None = None, **overrides: object) -> Settings:
    """Build ``Settings`` from an optional JSON config file.

    Args:
        config_path: JSON file with top-level keys named like the fields.
        **overrides: Values that win over every other source (CLI flags).

    Returns:
        A validated ``Settings`` instance.
    """
    if config_path is None:
        return Settings(**overrides)

    class _FileSettings(Settings):
        model_config = SettingsConfigDict(
            env_file=".env",
            extra="ignore",
            json_file=str(config_path),
        )

    return _FileSettings(**overrides)


settings = Settings()
