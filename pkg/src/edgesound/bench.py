"""Fleet benchmark: runtime/power stage, latency-vs-fleet-size stage, and scoring."""

from __future__ import annotations

import csv
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import (
    CLASS_LABELS, LabeledDataset, MlpModel, init_model, load_model, train,
)
from .device import (
    Configuration, DeviceRunReport, DeviceSession, NetworkProfile,
    RECORD_CHUNK_SAMPLES,
)
from .dsp import extract_features
from .server import SoundServer
from .synth import synth_clip

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

DEFAULT_FLEET_SIZES = (4, 8, 12)
DEFAULT_ITERATIONS = 20
DEFAULT_COMPUTE_SCALE = 6.0

CSV_COLUMNS = (
    "stage", "config", "n_devices", "device_id", "iteration", "clip_id",
    "record_s", "extract_s", "classify_s", "total_runtime_s", "latency_ms",
    "bytes_sent", "bandwidth_bytes_per_s", "avg_power_mw",
    "send_start_us", "ack_received_us", "failed", "phase_reached",
)

RUNTIME_STAGE = "runtime"
LATENCY_STAGE = "latency"


@dataclass(frozen=True)
class PowerModel:
    """Three-term draw model: constant idle plus compute- and radio-active terms."""

    idle_mw: float = 1300.0
    cpu_mw: float = 700.0
    tx_mw: float = 450.0

    def __post_init__(self):
        for name, value in (("idle_mw", self.idle_mw), ("cpu_mw", self.cpu_mw),
                            ("tx_mw", self.tx_mw)):
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")


def estimate_energy(report: DeviceRunReport, power: PowerModel) -> float:
    """Average draw in mW over one run: idle always, cpu while computing, tx on air."""
    t_total = report.total_runtime_s
    if t_total is None or t_total <= 0:
        raise ValueError("report has no positive total runtime; run incomplete?")
    t_compute = report.device_compute_s
    t_tx = report.tx_time_s
    return (power.idle_mw * t_total + power.cpu_mw * t_compute
            + power.tx_mw * t_tx) / t_total


@dataclass(frozen=True)
class FleetSpec:
    """One fleet run: how many devices, which placement, and the knobs."""

    n_devices: int
    config: Configuration
    iterations: int = DEFAULT_ITERATIONS
    device_compute_scale: float = DEFAULT_COMPUTE_SCALE
    network: NetworkProfile = field(default_factory=NetworkProfile)
    clip_duration_s: float = 10.0
    clip_sr: int = 16000
    seed: int = 0
    pace_recording: bool = False
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.n_devices < 1:
            raise ValueError(f"n_devices must be >= 1, got {self.n_devices}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.device_compute_scale < 1.0:
            raise ValueError(f"device_compute_scale must be >= 1, "
                             f"got {self.device_compute_scale}")


@dataclass(eq=False)
class LatencyStats:
    """Distribution of send-to-reply latency for one (config, fleet size) run."""

    config: str
    n_devices: int
    n_samples: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    max_ms: float
    complete: bool

    @classmethod
    def from_reports(cls, config: str, n_devices: int, reports: list,
                     expected: int) -> "LatencyStats":
        values = np.array([r.latency_ms for r in reports
                           if not r.failed and r.latency_ms is not None])
        complete = values.size == expected
        if values.size == 0:
            nan = float("nan")
            return cls(config, n_devices, 0, nan, nan, nan, nan, False)
        return cls(
            config=config, n_devices=n_devices, n_samples=int(values.size),
            mean_ms=float(values.mean()),
            p50_ms=float(np.percentile(values, 50)),
            p95_ms=float(np.percentile(values, 95)),
            max_ms=float(values.max()),
            complete=complete,
        )


def _record_phase(samples: np.ndarray, sr: int, pace: bool):
    """Rebuild a pre-generated clip chunk by chunk, timing the recording window."""
    from .audio import AudioClip
    start_us = time.monotonic_ns() // 1000
    parts = []
    for lo in range(0, samples.size, RECORD_CHUNK_SAMPLES):
        chunk = samples[lo:lo + RECORD_CHUNK_SAMPLES]
        parts.append(chunk)
        if pace:
            time.sleep(chunk.size / sr)
    clip = AudioClip(np.concatenate(parts), sr)
    end_us = time.monotonic_ns() // 1000
    return clip, (start_us, end_us)


def simulate_fleet(spec: FleetSpec, server_address, model: MlpModel = None):
    """Run n devices concurrently against one server; returns (reports, stats)."""
    config = spec.config if isinstance(spec.config, Configuration) \
        else Configuration.from_string(str(spec.config))
    if config is Configuration.DEVICE_CLASSIFIES and model is None:
        raise ValueError("configuration A needs the model on every device")

    clips = [synth_clip(i % len(CLASS_LABELS), spec.clip_duration_s,
                        spec.clip_sr, seed=spec.seed + i)
             for i in range(spec.n_devices)]
    per_device = [[] for _ in range(spec.n_devices)]
    errors = []
    barrier = threading.Barrier(spec.n_devices)

    def worker(index: int) -> None:
        device_id = index + 1
        samples = clips[index].samples
        try:
            with DeviceSession(server_address, device_id, network=spec.network,
                               timeout_s=spec.timeout_s) as session:
                try:
                    barrier.wait(timeout=spec.timeout_s)
                except threading.BrokenBarrierError:
                    pass
                for iteration in range(spec.iterations):
                    clip, window = _record_phase(samples, spec.clip_sr,
                                                 spec.pace_recording)
                    report = session.run(
                        config, clip, model=model, clip_id=iteration,
                        compute_scale=spec.device_compute_scale,
                        record_window=window,
                    )
                    per_device[index].append(report)
                    if report.failed:
                        break
        except OSError as exc:
            barrier.abort()
            per_device[index].append(DeviceRunReport(
                device_id=device_id, config=config.value, clip_id=0,
                compute_scale=spec.device_compute_scale,
                bandwidth_bytes_per_s=spec.network.bandwidth_bytes_per_s,
                failed=True, failure=f"connection failed: {exc}",
            ))
        except Exception as exc:  # programming errors surface in the caller
            barrier.abort()
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(i,), name=f"device-{i + 1}")
               for i in range(spec.n_devices)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]

    reports = [r for reports in per_device for r in reports]
    stats = LatencyStats.from_reports(
        config.value, spec.n_devices, reports,
        expected=spec.n_devices * spec.iterations,
    )
    return reports, stats


@dataclass(eq=False)
class ScoreCard:
    """Per-category points (3 best, 1 worst), totals, and the inputs they used."""

    points: dict           # config -> {category -> points}
    tally: dict            # config -> total points
    growth_ratio: dict     # config -> latency mean at largest / smallest size
    power_mw: dict
    runtime_s: dict
    latency_ms_by_size: dict  # config -> {n_devices -> mean ms}
    latency_rank_size: int

    def to_dict(self) -> dict:
        return {
            "points": self.points,
            "tally": self.tally,
            "growth_ratio": self.growth_ratio,
            "inputs": {
                "power_mw": self.power_mw,
                "runtime_s": self.runtime_s,
                "latency_ms_by_size": {
                    cfg: {str(n): v for n, v in table.items()}
                    for cfg, table in self.latency_ms_by_size.items()
                },
                "latency_rank_size": self.latency_rank_size,
            },
        }


def _rank_points(values: dict) -> dict:
    """Lower value earns more points; ties broken by config label order."""
    ordered = sorted(values, key=lambda cfg: (values[cfg], cfg))
    return {cfg: len(ordered) - i for i, cfg in enumerate(ordered)}


def score_configs(power_mw: dict, runtime_s: dict,
                  latency_ms_by_size: dict) -> ScoreCard:
    """Rank configs per category; latency ranks by the largest-fleet mean."""
    configs = sorted(power_mw)
    if not configs:
        raise ValueError("no configs to score")
    if sorted(runtime_s) != configs or sorted(latency_ms_by_size) != configs:
        raise ValueError("power, runtime, and latency must cover the same configs")
    sizes = None
    for cfg, table in latency_ms_by_size.items():
        if not table:
            raise ValueError(f"config {cfg} has no latency entries")
        if sizes is None:
            sizes = sorted(table)
        elif sorted(table) != sizes:
            raise ValueError("latency tables must share the same fleet sizes")
    for name, table in (("power", power_mw), ("runtime", runtime_s)):
        for cfg, value in table.items():
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} value for {cfg} must be positive, got {value}")
    for cfg, table in latency_ms_by_size.items():
        for n, value in table.items():
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"latency for {cfg} at n={n} must be positive, "
                                 f"got {value}")

    largest, smallest = sizes[-1], sizes[0]
    latency_at_largest = {cfg: latency_ms_by_size[cfg][largest] for cfg in configs}
    growth = {
        cfg: (latency_ms_by_size[cfg][largest] / latency_ms_by_size[cfg][smallest]
              if largest != smallest else 1.0)
        for cfg in configs
    }
    category_points = {
        "power": _rank_points(power_mw),
        "runtime": _rank_points(runtime_s),
        "latency": _rank_points(latency_at_largest),
    }
    points = {cfg: {cat: category_points[cat][cfg] for cat in category_points}
              for cfg in configs}
    tally = {cfg: sum(points[cfg].values()) for cfg in configs}
    n = len(configs)
    assert sum(tally.values()) == 3 * n * (n + 1) // 2
    return ScoreCard(
        points=points, tally=tally, growth_ratio=growth,
        power_mw=dict(power_mw), runtime_s=dict(runtime_s),
        latency_ms_by_size={cfg: dict(t) for cfg, t in latency_ms_by_size.items()},
        latency_rank_size=largest,
    )


@dataclass(eq=False)
class BenchScenario:
    """Everything a benchmark run needs, loadable from a TOML file."""

    configs: tuple = ("A", "B", "C")
    fleet_sizes: tuple = DEFAULT_FLEET_SIZES
    iterations: int = 5
    runtime_iterations: int = DEFAULT_ITERATIONS
    device_compute_scale: float = DEFAULT_COMPUTE_SCALE
    network: NetworkProfile = field(default_factory=NetworkProfile)
    power: PowerModel = field(default_factory=PowerModel)
    clip_duration_s: float = 10.0
    clip_sr: int = 16000
    seed: int = 0
    out_dir: str = "bench_out"
    deterministic_ts: bool = False
    model_path: str = None
    train_clips_per_class: int = 6
    train_epochs: int = 300
    train_lr: float = 0.1

    def __post_init__(self):
        self.configs = tuple(Configuration.from_string(str(c)).value
                             for c in self.configs)
        if len(set(self.configs)) != len(self.configs):
            raise ValueError(f"duplicate configs in {self.configs}")
        self.fleet_sizes = tuple(int(n) for n in self.fleet_sizes)
        if not self.fleet_sizes or any(n < 1 for n in self.fleet_sizes):
            raise ValueError(f"fleet_sizes must be positive, got {self.fleet_sizes}")
        if self.iterations < 1 or self.runtime_iterations < 1:
            raise ValueError("iterations and runtime_iterations must be >= 1")


_SCENARIO_SCALARS = {
    "configs", "fleet_sizes", "iterations", "runtime_iterations",
    "device_compute_scale", "clip_duration_s", "clip_sr", "seed", "out_dir",
    "deterministic_ts", "model_path",
}
_NETWORK_KEYS = {"bandwidth_bytes_per_s", "base_delay_s"}
_POWER_KEYS = {"idle_mw", "cpu_mw", "tx_mw"}
_TRAIN_KEYS = {"clips_per_class", "epochs", "learning_rate"}


def load_scenario(path) -> BenchScenario:
    """Parse a TOML scenario file into a BenchScenario."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return scenario_from_dict(raw, context=str(path))


def scenario_from_dict(raw: dict, context: str = "scenario") -> BenchScenario:
    """Build a scenario from a parsed mapping, rejecting unknown keys."""
    kwargs = {}
    for key, value in raw.items():
        if key in _SCENARIO_SCALARS:
            kwargs[key] = value
        elif key == "network":
            unknown = set(value) - _NETWORK_KEYS
            if unknown:
                raise ValueError(f"{context}: unknown network keys {sorted(unknown)}")
            kwargs["network"] = NetworkProfile(**value)
        elif key == "power":
            unknown = set(value) - _POWER_KEYS
            if unknown:
                raise ValueError(f"{context}: unknown power keys {sorted(unknown)}")
            kwargs["power"] = PowerModel(**value)
        elif key == "train":
            unknown = set(value) - _TRAIN_KEYS
            if unknown:
                raise ValueError(f"{context}: unknown train keys {sorted(unknown)}")
            kwargs.update({
                "train_clips_per_class": value.get("clips_per_class", 6),
                "train_epochs": value.get("epochs", 300),
                "train_lr": value.get("learning_rate", 0.1),
            })
        else:
            raise ValueError(f"{context}: unknown scenario key {key!r}")
    return BenchScenario(**kwargs)


def quick_model(clips_per_class: int = 6, epochs: int = 300, lr: float = 0.1,
                seed: int = 0, duration_s: float = 2.0) -> MlpModel:
    """Train a small-corpus model good enough to exercise the pipeline."""
    features, labels = [], []
    for class_id in range(len(CLASS_LABELS)):
        for k in range(clips_per_class):
            clip = synth_clip(class_id, duration_s, 22050, seed=seed * 1000 + k)
            features.append(extract_features(clip))
            labels.append(class_id)
    data = LabeledDataset(np.array(features), np.array(labels))
    model = init_model(seed=seed)
    trained, _ = train(model, data, epochs=epochs, lr=lr, seed=seed)
    return trained


@dataclass(eq=False)
class BenchResult:
    """All rows and aggregates from one benchmark run."""

    scenario: BenchScenario
    rows: list
    latency_stats: list
    power_mw: dict
    runtime_s: dict
    latency_ms_by_size: dict
    card: ScoreCard


def _report_row(stage: str, n_devices: int, report: DeviceRunReport,
                power: PowerModel, deterministic_ts: bool) -> dict:
    rec = report.to_record(deterministic_ts)
    avg_power = ""
    if not deterministic_ts and not report.failed and report.total_runtime_s:
        avg_power = f"{estimate_energy(report, power):.6f}"
    return {
        "stage": stage,
        "config": report.config,
        "n_devices": n_devices,
        "device_id": report.device_id,
        "iteration": report.clip_id,
        "clip_id": report.clip_id,
        "record_s": rec["record_s"],
        "extract_s": rec["extract_s"],
        "classify_s": rec["classify_s"],
        "total_runtime_s": "" if rec["total_runtime_s"] is None
                           else rec["total_runtime_s"],
        "latency_ms": "" if rec["latency_ms"] is None else rec["latency_ms"],
        "bytes_sent": rec["bytes_sent"],
        "bandwidth_bytes_per_s": rec["bandwidth_bytes_per_s"],
        "avg_power_mw": avg_power,
        "send_start_us": "" if rec["send_start_us"] is None else rec["send_start_us"],
        "ack_received_us": "" if rec["ack_received_us"] is None
                           else rec["ack_received_us"],
        "failed": report.failed,
        "phase_reached": report.phase_reached,
    }


def run_benchmark(scenario: BenchScenario, model: MlpModel = None,
                  progress=None) -> BenchResult:
    """Two stages: per-config runtime/power at n=1, then latency across fleet sizes."""
    def note(message: str) -> None:
        if progress is not None:
            progress(message)

    if model is None:
        if scenario.model_path:
            model = load_model(scenario.model_path)
            note(f"loaded model from {scenario.model_path}")
        else:
            note("training a synthetic-corpus model for the run")
            model = quick_model(scenario.train_clips_per_class,
                                scenario.train_epochs, scenario.train_lr,
                                seed=scenario.seed)

    rows = []
    stats_list = []
    power_mw, runtime_s = {}, {}
    latency_table = {cfg: {} for cfg in scenario.configs}

    for cfg in scenario.configs:
        spec = FleetSpec(
            n_devices=1, config=Configuration.from_string(cfg),
            iterations=scenario.runtime_iterations,
            device_compute_scale=scenario.device_compute_scale,
            network=scenario.network, clip_duration_s=scenario.clip_duration_s,
            clip_sr=scenario.clip_sr, seed=scenario.seed,
        )
        note(f"runtime stage: config {cfg}, {spec.iterations} iterations")
        with SoundServer(port=0, model=model) as srv:
            reports, _ = simulate_fleet(spec, srv.address, model=model)
        ok = [r for r in reports if not r.failed]
        if not ok:
            raise RuntimeError(f"runtime stage produced no successful runs for {cfg}")
        power_mw[cfg] = float(np.mean([estimate_energy(r, scenario.power)
                                       for r in ok]))
        runtime_s[cfg] = float(np.mean([r.total_runtime_s for r in ok]))
        rows.extend(_report_row(RUNTIME_STAGE, 1, r, scenario.power,
                                scenario.deterministic_ts) for r in reports)

    for cfg in scenario.configs:
        for n in scenario.fleet_sizes:
            spec = FleetSpec(
                n_devices=n, config=Configuration.from_string(cfg),
                iterations=scenario.iterations,
                device_compute_scale=scenario.device_compute_scale,
                network=scenario.network,
                clip_duration_s=scenario.clip_duration_s,
                clip_sr=scenario.clip_sr, seed=scenario.seed,
            )
            note(f"latency stage: config {cfg}, {n} devices, "
                 f"{spec.iterations} iterations each")
            with SoundServer(port=0, model=model) as srv:
                reports, stats = simulate_fleet(spec, srv.address, model=model)
            stats_list.append(stats)
            if not np.isfinite(stats.mean_ms):
                raise RuntimeError(f"latency stage produced no successful runs "
                                   f"for {cfg} at n={n}")
            latency_table[cfg][n] = stats.mean_ms
            rows.extend(_report_row(LATENCY_STAGE, n, r, scenario.power,
                                    scenario.deterministic_ts) for r in reports)

    card = score_configs(power_mw, runtime_s, latency_table)
    return BenchResult(
        scenario=scenario, rows=rows, latency_stats=stats_list,
        power_mw=power_mw, runtime_s=runtime_s,
        latency_ms_by_size=latency_table, card=card,
    )


def emit_report(result: BenchResult, out_dir=None) -> dict:
    """Write results.csv, report.md, and scorecard.json; returns their paths."""
    import json

    out_dir = out_dir or result.scenario.out_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "results.csv"),
        "markdown": os.path.join(out_dir, "report.md"),
        "scorecard": os.path.join(out_dir, "scorecard.json"),
    }

    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(result.rows)

    with open(paths["scorecard"], "w", encoding="utf-8") as fh:
        json.dump(result.card.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(paths["markdown"], "w", encoding="utf-8") as fh:
        fh.write(_markdown_report(result))
    return paths


def _markdown_report(result: BenchResult) -> str:
    s = result.scenario
    card = result.card
    lines = [
        "# Compute placement benchmark",
        "",
        f"- fleet sizes: {list(s.fleet_sizes)}; iterations per device: "
        f"{s.iterations} (latency stage), {s.runtime_iterations} (runtime stage)",
        f"- device compute scale: {s.device_compute_scale}; network: "
        f"{s.network.bandwidth_bytes_per_s / 1e6:.1f} MB/s + "
        f"{s.network.base_delay_s * 1e3:.1f} ms per message",
        f"- clips: {s.clip_duration_s:.0f} s at {s.clip_sr} Hz; seed {s.seed}",
        "",
        "## Power and runtime (single device)",
        "",
        "| config | avg power (mW) | total runtime (s) |",
        "|--------|----------------|-------------------|",
    ]
    for cfg in s.configs:
        lines.append(f"| {cfg} | {result.power_mw[cfg]:.2f} | "
                     f"{result.runtime_s[cfg]:.4f} |")
    lines += [
        "",
        "## Mean latency by fleet size (ms)",
        "",
        "| config | " + " | ".join(str(n) for n in s.fleet_sizes) + " | growth |",
        "|--------|" + "|".join(["------"] * (len(s.fleet_sizes) + 1)) + "|",
    ]
    for cfg in s.configs:
        cells = " | ".join(f"{result.latency_ms_by_size[cfg][n]:.3f}"
                           for n in s.fleet_sizes)
        lines.append(f"| {cfg} | {cells} | {card.growth_ratio[cfg]:.2f}x |")
    lines += [
        "",
        "## Scoring (3 = best per category, lower raw value wins; "
        f"latency ranked at n={card.latency_rank_size})",
        "",
        "| config | power | runtime | latency | total |",
        "|--------|-------|---------|---------|-------|",
    ]
    for cfg in s.configs:
        p = card.points[cfg]
        lines.append(f"| {cfg} | {p['power']} | {p['runtime']} | {p['latency']} | "
                     f"{card.tally[cfg]} |")
    lines.append("")
    return "\n".join(lines)


def score_from_csv(path) -> ScoreCard:
    """Rebuild the scorecard from a results.csv written by emit_report."""
    runtime_power = {}
    runtime_time = {}
    latency = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            if row["failed"] == "True":
                continue
            cfg = row["config"]
            if row["stage"] == RUNTIME_STAGE:
                if row["avg_power_mw"]:
                    runtime_power.setdefault(cfg, []).append(
                        float(row["avg_power_mw"])
                    )
                if row["total_runtime_s"]:
                    runtime_time.setdefault(cfg, []).append(
                        float(row["total_runtime_s"])
                    )
            elif row["stage"] == LATENCY_STAGE and row["latency_ms"]:
                n = int(row["n_devices"])
                latency.setdefault(cfg, {}).setdefault(n, []).append(
                    float(row["latency_ms"])
                )
    if not runtime_power or not latency:
        raise ValueError(f"{path}: no usable runtime/latency rows")
    power_mw = {cfg: float(np.mean(v)) for cfg, v in runtime_power.items()}
    runtime_s = {cfg: float(np.mean(v)) for cfg, v in runtime_time.items()}
    latency_ms = {cfg: {n: float(np.mean(v)) for n, v in table.items()}
                  for cfg, table in latency.items()}
    return score_configs(power_mw, runtime_s, latency_ms)
