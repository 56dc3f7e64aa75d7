"""Command-line entry point: train, serve, device, bench, score, extract, classify."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .audio import load_wav
from .bench import (
    emit_report, run_benchmark, scenario_from_dict, score_from_csv,
)
from .classifier import (
    CLASS_LABELS, LabeledDataset, classify as classify_features, init_model,
    load_model, save_model, train as train_model,
)
from .device import (
    Configuration, DeviceSession, NetworkProfile, SynthSource, WavSource,
    acquire_clip,
)
from .dsp import ANALYSIS_SAMPLE_RATE, extract_features
from .protocol import ProtocolError
from .server import SoundServer
from .synth import synth_clip

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

ENV_PREFIX = "USC_"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this testbed reserves 2 for runtime."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))
    sys.stdout.flush()


# -- train -----------------------------------------------------------------

def _load_wav_dataset(root: str, mixdown: bool):
    entries = sorted(os.listdir(root))
    unknown = [e for e in entries
               if os.path.isdir(os.path.join(root, e)) and e not in CLASS_LABELS]
    if unknown:
        raise ValueError(f"{root}: unknown class directories {unknown}; "
                         f"expected names from {list(CLASS_LABELS)}")
    features, labels = [], []
    for class_index, label in enumerate(CLASS_LABELS):
        class_dir = os.path.join(root, label)
        if not os.path.isdir(class_dir):
            raise ValueError(f"{root}: missing class directory {label!r}")
        wavs = sorted(f for f in os.listdir(class_dir)
                      if f.lower().endswith(".wav"))
        if not wavs:
            raise ValueError(f"{class_dir}: no .wav files for class {label!r}")
        for name in wavs:
            clip = load_wav(os.path.join(class_dir, name), mixdown=mixdown)
            features.append(extract_features(clip))
            labels.append(class_index)
    return np.array(features), np.array(labels)


def _synth_dataset(clips_per_class: int, duration_s: float, seed: int):
    features, labels = [], []
    for class_id in range(len(CLASS_LABELS)):
        for k in range(clips_per_class):
            clip = synth_clip(class_id, duration_s, ANALYSIS_SAMPLE_RATE,
                              seed=seed * 1000 + k)
            features.append(extract_features(clip))
            labels.append(class_id)
    return np.array(features), np.array(labels)


def cmd_train(args) -> int:
    if args.dataset:
        features, labels = _load_wav_dataset(args.dataset, args.mixdown)
    else:
        features, labels = _synth_dataset(args.synthetic, args.duration, args.seed)
    data = LabeledDataset(features, labels, split=args.split)
    model = init_model(seed=args.seed)
    trained, report = train_model(model, data, epochs=args.epochs, lr=args.lr,
                                  seed=args.seed)
    save_model(trained, args.out)
    summary = report.summary()
    summary["model_path"] = args.out
    summary["n_clips"] = len(data)
    _emit(summary)
    return EXIT_OK


# -- extract / classify ------------------------------------------------------

def cmd_extract(args) -> int:
    clip = load_wav(args.wav, mixdown=args.mixdown)
    _emit(list(extract_features(clip)))
    return EXIT_OK


def cmd_classify(args) -> int:
    model = load_model(args.model)
    clip = load_wav(args.wav, mixdown=args.mixdown)
    label, index, confidence = classify_features(model, extract_features(clip))
    _emit({"label": label, "class_index": index, "confidence": confidence})
    return EXIT_OK


# -- serve -------------------------------------------------------------------

def cmd_serve(args) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    model = load_model(args.model) if args.model else None
    server = SoundServer(args.host, args.port, model=model,
                         store_path=args.store,
                         deterministic_ts=args.deterministic_ts)
    server.start()
    print(f"listening on {server.address[0]}:{server.address[1]}",
          file=sys.stderr)
    try:
        server.wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


# -- device ------------------------------------------------------------------

def cmd_device(args) -> int:
    config = Configuration.from_string(args.config)
    model = None
    if config is Configuration.DEVICE_CLASSIFIES:
        if not args.model:
            raise ValueError("configuration A classifies on the device; "
                             "pass --model")
        model = load_model(args.model)
    network = NetworkProfile(bandwidth_bytes_per_s=args.bandwidth,
                             base_delay_s=args.base_delay)
    import time as _time
    failures = 0
    with DeviceSession((args.host, args.port), args.device_id,
                       network=network, timeout_s=args.timeout) as session:
        for i in range(args.clips):
            if args.wav:
                source = WavSource(args.wav, mixdown=args.mixdown)
            else:
                source = SynthSource(args.synth_class, seed=args.seed + i)
            start_us = _time.monotonic_ns() // 1000
            clip = acquire_clip(source, args.duration, args.sr, pace=args.pace)
            end_us = _time.monotonic_ns() // 1000
            report = session.run(config, clip, model=model, clip_id=i,
                                 compute_scale=args.compute_scale,
                                 record_window=(start_us, end_us))
            _emit(report.to_record(args.deterministic_ts))
            if report.failed:
                failures += 1
    return EXIT_RUNTIME if failures else EXIT_OK


# -- bench / score -------------------------------------------------------------

def _merge_tables(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if key in ("network", "power", "train") and isinstance(value, dict):
            merged = dict(out.get(key, {}))
            merged.update(value)
            out[key] = merged
        else:
            out[key] = value
    return out


def _bench_env_overrides() -> dict:
    raw = {}
    if _env("SEED") is not None:
        raw["seed"] = int(_env("SEED"))
    if _env("OUT_DIR") is not None:
        raw["out_dir"] = _env("OUT_DIR")
    if _env("MODEL") is not None:
        raw["model_path"] = _env("MODEL")
    if _env("ITERATIONS") is not None:
        raw["iterations"] = int(_env("ITERATIONS"))
    if _env("COMPUTE_SCALE") is not None:
        raw["device_compute_scale"] = float(_env("COMPUTE_SCALE"))
    network = {}
    if _env("BANDWIDTH") is not None:
        network["bandwidth_bytes_per_s"] = float(_env("BANDWIDTH"))
    if _env("BASE_DELAY") is not None:
        network["base_delay_s"] = float(_env("BASE_DELAY"))
    if network:
        raw["network"] = network
    return raw


def _bench_flag_overrides(args) -> dict:
    raw = {}
    if args.configs is not None:
        raw["configs"] = [c.strip() for c in args.configs.split(",") if c.strip()]
    if args.fleet_sizes is not None:
        raw["fleet_sizes"] = [int(n) for n in args.fleet_sizes.split(",") if n]
    for flag, key in (
        ("iterations", "iterations"),
        ("runtime_iterations", "runtime_iterations"),
        ("compute_scale", "device_compute_scale"),
        ("duration", "clip_duration_s"),
        ("sr", "clip_sr"),
        ("seed", "seed"),
        ("out", "out_dir"),
        ("model", "model_path"),
    ):
        value = getattr(args, flag)
        if value is not None:
            raw[key] = value
    network = {}
    if args.bandwidth is not None:
        network["bandwidth_bytes_per_s"] = args.bandwidth
    if args.base_delay is not None:
        network["base_delay_s"] = args.base_delay
    if network:
        raw["network"] = network
    if args.deterministic_ts:
        raw["deterministic_ts"] = True
    return raw


def cmd_bench(args) -> int:
    raw = _bench_env_overrides()
    if args.scenario:
        with open(args.scenario, "rb") as fh:
            raw = _merge_tables(raw, tomllib.load(fh))
    raw = _merge_tables(raw, _bench_flag_overrides(args))
    scenario = scenario_from_dict(raw, context=args.scenario or "bench flags")

    def progress(message: str) -> None:
        print(message, file=sys.stderr)
        sys.stderr.flush()

    result = run_benchmark(scenario, progress=progress)
    paths = emit_report(result)
    payload = result.card.to_dict()
    payload["paths"] = paths
    _emit(payload)
    return EXIT_OK


def cmd_score(args) -> int:
    card = score_from_csv(args.csv)
    _emit(card.to_dict())
    return EXIT_OK


# -- parser wiring -------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(
        prog="edgesound",
        description="Urban-sound classification testbed: place compute on the "
                    "device (A), the server (B), or split at features (C), and "
                    "benchmark the trade-offs.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("train", help="train a model on WAVs or synthetic clips")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--dataset", help="directory with one subdirectory per class")
    group.add_argument("--synthetic", type=_positive_int, default=30, metavar="N",
                       help="clips per class from the synthetic generator "
                            "(default: 30)")
    p.add_argument("--duration", type=_positive_float, default=4.0,
                   help="synthetic clip length in seconds (default: 4)")
    p.add_argument("--epochs", type=_positive_int, default=5000)
    p.add_argument("--lr", type=_positive_float, default=0.1)
    p.add_argument("--split", type=float, default=0.7,
                   help="training fraction (default: 0.7)")
    p.add_argument("--seed", type=int, default=int(_env("SEED", 0)))
    p.add_argument("--mixdown", action="store_true",
                   help="average stereo WAVs to mono instead of rejecting them")
    p.add_argument("--out", default=_env("MODEL", "model.bin"),
                   help="model file to write (default: model.bin, env USC_MODEL)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="print the 193-value feature vector of a WAV")
    p.add_argument("--wav", required=True)
    p.add_argument("--mixdown", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("classify", help="classify a WAV with a trained model")
    p.add_argument("--wav", required=True)
    p.add_argument("--model", default=_env("MODEL"), required=_env("MODEL") is None)
    p.add_argument("--mixdown", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("serve", help="run the classification server")
    p.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(_env("PORT", 7071)))
    p.add_argument("--model", default=_env("MODEL"),
                   help="model file (omit to accept only device-classified results)")
    p.add_argument("--store", default=_env("STORE"),
                   help="JSON-lines file for classification records")
    p.add_argument("--deterministic-ts", action="store_true",
                   help="zero absolute timestamps in stored records")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("device", help="emulate one device sending clips")
    p.add_argument("--config", required=True, help="A, B, or C")
    p.add_argument("--host", default=_env("HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(_env("PORT", 7071)))
    p.add_argument("--device-id", type=int, default=1)
    p.add_argument("--clips", type=_positive_int, default=1)
    source = p.add_mutually_exclusive_group()
    source.add_argument("--wav", help="send this WAV file")
    source.add_argument("--synth-class", type=int, default=0, metavar="ID",
                        help="synthetic class id 0-9 (default: 0)")
    p.add_argument("--duration", type=_positive_float, default=10.0)
    p.add_argument("--sr", type=_positive_int, default=16000)
    p.add_argument("--seed", type=int, default=int(_env("SEED", 0)))
    p.add_argument("--model", default=_env("MODEL"),
                   help="model file (required for config A)")
    p.add_argument("--mixdown", action="store_true")
    p.add_argument("--compute-scale", type=float, default=1.0,
                   help="stretch on-device compute phases by this factor")
    p.add_argument("--bandwidth", type=float,
                   default=float(_env("BANDWIDTH", NetworkProfile().bandwidth_bytes_per_s)),
                   help="emulated uplink bytes/s")
    p.add_argument("--base-delay", type=float,
                   default=float(_env("BASE_DELAY", NetworkProfile().base_delay_s)),
                   help="emulated per-message delay in seconds")
    p.add_argument("--timeout", type=float, default=30.0)
    pace = p.add_mutually_exclusive_group()
    pace.add_argument("--pace", dest="pace", action="store_true", default=True,
                      help="record in real time (default)")
    pace.add_argument("--no-pace", dest="pace", action="store_false",
                      help="deliver recording chunks without sleeping")
    p.add_argument("--deterministic-ts", action="store_true")
    p.set_defaults(func=cmd_device)

    p = sub.add_parser("bench", help="run the placement benchmark and score it")
    p.add_argument("--scenario", help="TOML scenario file")
    p.add_argument("--configs", help="comma list, e.g. A,B,C")
    p.add_argument("--fleet-sizes", help="comma list, e.g. 4,8,12")
    p.add_argument("--iterations", type=_positive_int)
    p.add_argument("--runtime-iterations", type=_positive_int)
    p.add_argument("--compute-scale", type=float)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--base-delay", type=float)
    p.add_argument("--duration", type=_positive_float)
    p.add_argument("--sr", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--model", help="model file (omit to train a quick one)")
    p.add_argument("--deterministic-ts", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("score", help="recompute the scorecard from results.csv")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except (ValueError, OSError, RuntimeError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
