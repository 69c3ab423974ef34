"""RoomWave command-line interface.

One entry point for every stage, from simulated recordings to the
long-running edge and service loops::

    roomwave params   --config data/ti_awr1443.json
    roomwave simulate --activity walking --duration 10 --seed 7 --out walk.rcub
    roomwave process  --input walk.rcub --out walk.jtf --calibration calib.json
    roomwave dataset  --out corpus --subjects 2 --sessions 5 --minutes-per-class 8
    roomwave train    --manifest corpus/manifest.jsonl --out model.grum --metrics train.json
    roomwave eval     --manifest corpus/manifest.jsonl --model model.grum --split unseen-subject
    roomwave serve    --settings service.json
    roomwave edge     --settings living.json --cube living.rcub
    roomwave report   --store events.jsonl --date 2026-01-01

Exit codes: 0 success, 1 usage, 2 I/O failure, 3 validation failure
(bad config, format or version mismatch, any domain error).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from collections.abc import Iterator, Sequence
from pathlib import Path
from typing import NoReturn

import numpy as np
from pydantic import BaseModel, ValidationError

from src.config import Settings, load_settings
from src.errors import NotCalibrated, RoomWaveError
from src.formats import (
    CubeWriter,
    iter_cube_frames,
    load_calibration,
    load_model,
    save_calibration,
    save_model,
    write_jtf,
)
from src.models.event_store import read_events
from src.models.gru import GruModel
from src.models.training import Split, evaluate, load_dataset, split_dataset, train
from src.pipeline.dataset import CorpusSpec, generate_corpus
from src.pipeline.day_script import scripted_day
from src.pipeline.dsp_chain import DOPPLER_BINS, JTFSpectrogram, JtfStream, range_fft
from src.pipeline.motion import Environment, generate_motion
from src.pipeline.presence_pad import ThresholdConfig, calibrate_empty
from src.pipeline.radar_sim import RadarCube, derive_params, iter_frames
from src.pipeline.status_engine import accumulate_report
from src.schemas.schemas import (
    ACTIVITIES,
    ArchitectureConfig,
    ChirpConfig,
    Room,
    TrainConfig,
    TrainingReport,
    parse_activity,
)
from src.telemetry.edge import edge_run
from src.telemetry.service import query_report, serve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3

DEFAULT_CONFIG = "data/ti_awr1443.json"
DESK_CONFIG = "data/desk_scale.json"


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with the usage code instead of argparse's 2."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configure_logging(level: str) -> None:
    """Set up root logger with a clean console format."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,
    )


def _write_json(path: str | Path | None, payload: BaseModel | dict[str, object]) -> None:
    text = payload.model_dump_json(indent=2) if isinstance(payload, BaseModel) else json.dumps(payload, indent=2)
    if path is None:
        print(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def cmd_params(args: argparse.Namespace) -> int:
    config = ChirpConfig.from_json(args.config)
    _write_json(args.out, derive_params(config))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    """Deterministic in ``--seed`` (and ``--device-seed``)."""
    config = ChirpConfig.from_json(args.config)
    script = generate_motion(
        args.activity,
        args.duration,
        args.seed,
        environment=Environment(args.environment),
        room_seed=args.room_seed,
    )
    with CubeWriter(args.out, config, args.start_ms) as writer:
        for frame in iter_frames(config, script, args.seed, args.start_ms, device_seed=args.device_seed):
            writer.write(frame)
    logger.info("Simulated %d frames of %s into %s", writer.num_frames, args.activity, args.out)
    return EXIT_OK


def cmd_process(args: argparse.Namespace) -> int:
    """Spectrogram of a recording, or an empty-room calibration with ``--calibrate-out``."""
    base = ChirpConfig.from_json(args.config) if args.config else None
    if args.calibrate_out:
        profiles = [range_fft(frame) for frame in iter_cube_frames(args.input, base)]
        threshold = ThresholdConfig(kappa=args.kappa, horizon_frames=args.horizon_frames)
        record, coupling = calibrate_empty(profiles, Room(args.room), threshold)
        record = save_calibration(args.calibrate_out, record, coupling)
        logger.info("Calibration for %s written to %s", record.room, args.calibrate_out)
        if not args.out:
            return EXIT_OK

    if not args.out:
        raise argparse.ArgumentTypeError("process needs --out or --calibrate-out")
    coupling = None
    if args.calibration:
        _, coupling = load_calibration(args.calibration, base)
    stream: JtfStream | None = None
    chunks: list[np.ndarray] = []
    start_ms = 0
    for frame in iter_cube_frames(args.input, base):
        if stream is None:
            stream = JtfStream(frame.config, coupling)
            start_ms = frame.start_time_ms
        columns, _ = stream.push(frame)
        if columns.size:
            chunks.append(columns)
    if stream is None:
        raise RoomWaveError(f"{args.input} holds no frames")
    spectrogram = JTFSpectrogram(
        columns=np.concatenate(chunks) if chunks else np.zeros((0, DOPPLER_BINS)),
        column_period_ms=stream.column_period_ms,
        v_max=stream.v_max,
        start_time_ms=start_ms,
        label=args.label,
    )
    write_jtf(args.out, spectrogram)
    logger.info("Wrote %d spectrogram columns to %s", spectrogram.num_columns, args.out)
    return EXIT_OK


def cmd_dataset(args: argparse.Namespace) -> int:
    """Deterministic in ``--seed``."""
    config = ChirpConfig.from_json(args.config)
    corpus = CorpusSpec(
        subjects=args.subjects,
        sessions=args.sessions,
        minutes_per_class=args.minutes_per_class,
        classes=args.classes,
        seed=args.seed,
        stride=args.stride,
    )
    manifest = generate_corpus(args.out, config, corpus, progress=args.progress)
    print(manifest)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Deterministic in ``--seed`` (initialisation and shuffling)."""
    dataset = load_dataset(args.manifest)
    sets = split_dataset(dataset, args.split)
    arch = ArchitectureConfig(
        num_layers=args.layers,
        hidden_size=args.hidden,
        fc_hidden=args.fc,
    )
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        patience=args.patience,
    )
    model = GruModel.create(arch, dataset.class_names, seed=args.seed)
    result = train(model, sets.train, config, sets.validation, progress=args.progress)
    save_model(args.out, result.model)
    report = TrainingReport(
        split=Split(args.split).value,
        class_names=dataset.class_names,
        num_train=len(sets.train),
        num_validation=len(sets.validation),
        epochs_run=len(result.history),
        best_epoch=result.best_epoch,
        history=result.history,
    )
    _write_json(args.metrics, report)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.manifest, class_names=model.class_names, time_steps=model.time_steps)
    target = dataset if args.split == "all" else split_dataset(dataset, args.split).test
    _write_json(args.out, evaluate(model, target, args.split))
    return EXIT_OK


def _settings(args: argparse.Namespace, **overrides: object) -> Settings:
    overrides = {key: value for key, value in overrides.items() if value is not None}
    return load_settings(args.settings, **overrides)


def cmd_serve(args: argparse.Namespace) -> int:
    settings = _settings(
        args,
        model_path=args.model,
        store_path=args.store,
        bind_port=args.port,
        report_port=args.report_port,
        http_port=args.http_port,
    )
    try:
        asyncio.run(serve(settings))
    except KeyboardInterrupt:
        logger.info("Service interrupted")
    return EXIT_OK


def cmd_edge(args: argparse.Namespace) -> int:
    settings = _settings(
        args,
        room=args.room,
        connect_host=args.host,
        connect_port=args.port,
        calibration_path=args.calibration,
        speedup=args.speedup,
    )
    if not args.cube and args.day_seed is None:
        raise argparse.ArgumentTypeError("edge needs --cube or --day-seed")
    config = ChirpConfig.from_json(args.config or settings.radar_config_path)
    script = scripted_day(args.day_seed, args.day_hours) if args.day_seed is not None else None
    if settings.calibration_path:
        calibration, coupling = load_calibration(settings.calibration_path, config)
    elif script is not None:
        threshold = ThresholdConfig(kappa=settings.kappa, horizon_frames=settings.horizon_frames)
        calibration, coupling = script.calibrate(config, settings.room, threshold)
    else:
        raise NotCalibrated(f"edge for {settings.room} needs --calibration")
    frames: Iterator[RadarCube] = (
        iter_cube_frames(args.cube, config) if args.cube else script.frames(config, settings.room)  # type: ignore[union-attr]
    )
    try:
        asyncio.run(edge_run(settings, config, frames, calibration, coupling))
    except KeyboardInterrupt:
        logger.info("Edge interrupted")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    if args.service:
        host, _, port = args.service.rpartition(":")
        payload = asyncio.run(query_report(host or "127.0.0.1", int(port), args.date, args.now_ms))
        _write_json(args.out, payload)
        return EXIT_OK if "error" not in payload else EXIT_VALIDATION
    events = read_events(args.store)
    _write_json(args.out, accumulate_report(events, args.date, now_ms=args.now_ms))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roomwave", description="Radar in-home activity monitoring")
    parser.add_argument("--log-level", default=None, help="Root log level (default: settings.log_level)")
    verbs = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = verbs.add_parser("params", help="Derived radar parameters of a chirp config")
    p.add_argument("--config", default=DEFAULT_CONFIG)
    p.add_argument("--out", default=None, help="JSON output (default: stdout)")
    p.set_defaults(func=cmd_params)

    p = verbs.add_parser("simulate", help="Simulate a recording into an RCUB file")
    p.add_argument("--config", default=DEFAULT_CONFIG)
    p.add_argument(
        "--activity", required=True, type=parse_activity, help="Class name, any case: " + ", ".join(ACTIVITIES)
    )
    p.add_argument("--duration", type=float, required=True, help="Seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device-seed", type=int, default=None, help="Radar unit (fixed impairments)")
    p.add_argument("--room-seed", type=int, default=None, help="Room layout")
    p.add_argument("--environment", choices=[e.value for e in Environment], default=Environment.HOME.value)
    p.add_argument("--start-ms", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = verbs.add_parser("process", help="Spectrogram or calibration from an RCUB recording")
    p.add_argument("--input", required=True, help="RCUB recording")
    p.add_argument("--out", default=None, help="JTF0 output")
    p.add_argument("--config", default=None, help="Chirp config supplying fields the file omits")
    p.add_argument("--calibration", default=None, help="Calibration JSON whose coupling profile to subtract")
    p.add_argument("--calibrate-out", default=None, help="Treat the input as empty and write a calibration")
    p.add_argument("--room", default="livingroom", choices=["bedroom", "livingroom", "washroom"])
    p.add_argument("--kappa", type=float, default=3.0)
    p.add_argument("--horizon-frames", type=int, default=10)
    p.add_argument("--label", default=None)
    p.set_defaults(func=cmd_process)

    p = verbs.add_parser("dataset", help="Generate a labelled synthetic corpus")
    p.add_argument("--config", default=DESK_CONFIG)
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=2)
    p.add_argument("--sessions", type=int, default=5)
    p.add_argument("--minutes-per-class", type=float, default=8.0)
    p.add_argument("--classes", type=int, choices=[4, 6], default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_dataset)

    p = verbs.add_parser("train", help="Train a GRU classifier on a corpus split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=[s.value for s in Split], default=Split.SESSION_INDEPENDENT.value)
    p.add_argument("--out", required=True, help="GRUM model output")
    p.add_argument("--metrics", default=None, help="Training metrics JSON (default: stdout)")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--fc", type=int, nargs="*", default=[32])
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = verbs.add_parser("eval", help="Score a model on a corpus split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=[*[s.value for s in Split], "all"], default=Split.SESSION_INDEPENDENT.value)
    p.add_argument("--out", default=None, help="Metrics JSON (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = verbs.add_parser("serve", help="Run the aggregator service")
    p.add_argument("--settings", default=None, help="Service JSON config")
    p.add_argument("--model", default=None)
    p.add_argument("--store", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--report-port", type=int, default=None)
    p.add_argument("--http-port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    p = verbs.add_parser("edge", help="Run one room's edge node")
    p.add_argument("--settings", default=None, help="Edge JSON config")
    p.add_argument("--room", default=None, choices=["bedroom", "livingroom", "washroom"])
    p.add_argument("--config", default=None, help="Chirp config (default: settings.radar_config_path)")
    p.add_argument("--calibration", default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--speedup", type=float, default=None)
    p.add_argument("--cube", default=None, help="Replay an RCUB recording")
    p.add_argument("--day-seed", type=int, default=None, help="Replay a scripted day for the room")
    p.add_argument("--day-hours", type=float, default=2.0)
    p.set_defaults(func=cmd_edge)

    p = verbs.add_parser("report", help="Daily report from an event log or a running service")
    p.add_argument("--date", required=True, help="YYYY-MM-DD (UTC)")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--store", help="Event log to read offline")
    source.add_argument("--service", help="host:port of a service report port")
    p.add_argument("--now-ms", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run one verb; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging(args.log_level or Settings().log_level)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"roomwave: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO
    except (RoomWaveError, ValidationError, ValueError) as exc:
        logger.error("Validation error: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
