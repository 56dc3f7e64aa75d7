"""End-device emulation: clip acquisition, compute placement, and the send loop."""

from __future__ import annotations

import enum
import socket
import time
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .classifier import CLASS_LABELS, MlpModel, forward
from .dsp import extract_features
from .protocol import (
    AckStatus, Frame, MsgType, ProtocolError, decode_ack_payload, decode_frame,
    decode_result_payload, encode_audio_payload, encode_features_payload,
    encode_frame, encode_result_payload,
)
from .synth import synth_clip

RECORD_CHUNK_SAMPLES = 2048
DEFAULT_RECORD_SR = 16000
DEFAULT_CLIP_SECONDS = 10.0
DEFAULT_ACK_TIMEOUT_S = 30.0
DEFAULT_BANDWIDTH_BYTES_PER_S = 8_000_000.0
DEFAULT_BASE_DELAY_S = 0.002

_PHASES = ("record", "extract", "classify", "send", "ack")


class Configuration(enum.Enum):
    """Where the pipeline runs: A on-device, B on-server, C split at features."""

    DEVICE_CLASSIFIES = "A"
    SERVER_CLASSIFIES_RAW = "B"
    SERVER_CLASSIFIES_FEATURES = "C"

    @classmethod
    def from_string(cls, name: str) -> "Configuration":
        for member in cls:
            if member.value == name.upper():
                return member
        raise ValueError(f"unknown configuration {name!r}; expected A, B, or C")


@dataclass(frozen=True)
class NetworkProfile:
    """Emulated uplink: fixed per-message delay plus serialization time."""

    bandwidth_bytes_per_s: float = DEFAULT_BANDWIDTH_BYTES_PER_S
    base_delay_s: float = DEFAULT_BASE_DELAY_S

    def __post_init__(self):
        if self.bandwidth_bytes_per_s <= 0:
            raise ValueError(f"bandwidth must be positive, "
                             f"got {self.bandwidth_bytes_per_s}")
        if self.base_delay_s < 0:
            raise ValueError(f"base delay must be >= 0, got {self.base_delay_s}")

    def transfer_time_s(self, n_bytes: int) -> float:
        """Modeled wire time for one message."""
        return self.base_delay_s + n_bytes / self.bandwidth_bytes_per_s


@dataclass(frozen=True)
class SynthSource:
    """Recipe-backed clip source."""

    class_id: int
    seed: int = 0


@dataclass(frozen=True)
class WavSource:
    """File-backed clip source; the file stands in for the microphone."""

    path: str
    mixdown: bool = False


def acquire_clip(source, duration_s: float = DEFAULT_CLIP_SECONDS,
                 sr: int = DEFAULT_RECORD_SR, *, pace: bool = False,
                 chunk_samples: int = RECORD_CHUNK_SAMPLES,
                 on_chunk=None) -> AudioClip:
    """Assemble a clip chunk by chunk, optionally pacing at the recording rate."""
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    if chunk_samples < 1:
        raise ValueError(f"chunk_samples must be >= 1, got {chunk_samples}")

    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        source = WavSource(str(source))
    if isinstance(source, SynthSource):
        samples = synth_clip(source.class_id, duration_s, sr, source.seed).samples
        rate = sr
    elif isinstance(source, WavSource):
        from .audio import load_wav
        loaded = load_wav(source.path, mixdown=source.mixdown)
        rate = loaded.sample_rate
        samples = loaded.samples[:int(round(duration_s * rate))]
        if samples.size == 0:
            raise ValueError(f"{source.path}: no samples to acquire")
    else:
        raise TypeError(f"unsupported clip source {source!r}")

    parts = []
    for start in range(0, samples.size, chunk_samples):
        chunk = samples[start:start + chunk_samples]
        parts.append(chunk)
        if on_chunk is not None:
            on_chunk(chunk)
        if pace:
            time.sleep(chunk.size / rate)
    return AudioClip(np.concatenate(parts), rate)


@dataclass(eq=False)
class DeviceRunReport:
    """Phase timestamps and outcome for one clip's trip through the pipeline."""

    device_id: int
    config: str
    clip_id: int
    compute_scale: float = 1.0
    bandwidth_bytes_per_s: float = DEFAULT_BANDWIDTH_BYTES_PER_S
    record_start_us: int = 0
    record_end_us: int = 0
    extract_end_us: int = None
    classify_end_us: int = None
    send_start_us: int = None
    ack_received_us: int = None
    bytes_sent: int = 0
    reply_type: int = None
    class_index: int = None
    label: str = None
    confidence: float = None
    ack_status: int = None
    reply_clip_id: int = None
    failed: bool = False
    failure: str = None
    phase_reached: str = "record"

    @property
    def total_runtime_s(self) -> float:
        """Record start to reply received, in seconds."""
        if self.ack_received_us is None:
            return None
        return (self.ack_received_us - self.record_start_us) / 1e6

    @property
    def latency_ms(self) -> float:
        """Send start to reply received, in milliseconds."""
        if self.ack_received_us is None or self.send_start_us is None:
            return None
        return (self.ack_received_us - self.send_start_us) / 1e3

    @property
    def record_s(self) -> float:
        return (self.record_end_us - self.record_start_us) / 1e6

    @property
    def extract_s(self) -> float:
        """Device-side feature extraction wall time (0 when the server extracts)."""
        if self.extract_end_us is None:
            return 0.0
        return (self.extract_end_us - self.record_end_us) / 1e6

    @property
    def classify_s(self) -> float:
        """Device-side inference wall time (0 when the server classifies)."""
        if self.classify_end_us is None:
            return 0.0
        return (self.classify_end_us - self.extract_end_us) / 1e6

    @property
    def device_compute_s(self) -> float:
        """Total on-device processing time after recording."""
        return self.extract_s + self.classify_s

    @property
    def tx_time_s(self) -> float:
        """Modeled serialization time of the bytes this run sent."""
        return self.bytes_sent / self.bandwidth_bytes_per_s

    def to_record(self, deterministic_ts: bool = False) -> dict:
        """Flat dict for JSON lines / CSV rows."""
        out = {
            "device_id": self.device_id,
            "config": self.config,
            "clip_id": self.clip_id,
            "compute_scale": self.compute_scale,
            "bandwidth_bytes_per_s": self.bandwidth_bytes_per_s,
            "record_start_us": self.record_start_us,
            "record_end_us": self.record_end_us,
            "extract_end_us": self.extract_end_us,
            "classify_end_us": self.classify_end_us,
            "send_start_us": self.send_start_us,
            "ack_received_us": self.ack_received_us,
            "record_s": self.record_s,
            "extract_s": self.extract_s,
            "classify_s": self.classify_s,
            "total_runtime_s": self.total_runtime_s,
            "latency_ms": self.latency_ms,
            "bytes_sent": self.bytes_sent,
            "reply_type": self.reply_type,
            "class_index": self.class_index,
            "label": self.label,
            "confidence": self.confidence,
            "ack_status": self.ack_status,
            "failed": self.failed,
            "failure": self.failure,
            "phase_reached": self.phase_reached,
        }
        if deterministic_ts:
            # Blank everything derived from the wall clock so equal-seed
            # runs serialize byte-identically.
            for key in ("record_start_us", "record_end_us", "extract_end_us",
                        "classify_end_us", "send_start_us", "ack_received_us"):
                if out[key] is not None:
                    out[key] = 0
            for key in ("record_s", "extract_s", "classify_s",
                        "total_runtime_s", "latency_ms"):
                if out[key] is not None:
                    out[key] = 0.0
        return out


def _now_us() -> int:
    return time.monotonic_ns() // 1000


def _stretch(elapsed_s: float, scale: float) -> None:
    """Sleep to make a compute phase appear scale times slower."""
    if scale > 1.0 and elapsed_s > 0.0:
        time.sleep(elapsed_s * (scale - 1.0))


def parse_address(server) -> tuple:
    """Accept (host, port) or 'host:port'."""
    if isinstance(server, str):
        host, _, port = server.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"server address {server!r} is not host:port")
        return host, int(port)
    host, port = server
    return str(host), int(port)


class DeviceSession:
    """Persistent stop-and-wait connection from one device to the server."""

    def __init__(self, server, device_id: int = 1, *,
                 network: NetworkProfile = None,
                 timeout_s: float = DEFAULT_ACK_TIMEOUT_S):
        self.address = parse_address(server)
        self.device_id = int(device_id)
        self.network = network if network is not None else NetworkProfile()
        self.timeout_s = timeout_s
        self._sock = None
        self._next_clip_id = 0

    def connect(self) -> None:
        if self._sock is not None:
            return
        sock = socket.create_connection(self.address, timeout=self.timeout_s)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    def _recv(self, n: int) -> bytes:
        return self._sock.recv(n)

    def run(self, config: Configuration, clip: AudioClip, *,
            model: MlpModel = None, clip_id: int = None,
            compute_scale: float = 1.0, record_window: tuple = None
            ) -> DeviceRunReport:
        """Push one clip through the configured pipeline; never raises on I/O."""
        if not isinstance(config, Configuration):
            config = Configuration.from_string(str(config))
        if compute_scale < 1.0:
            raise ValueError(f"compute_scale must be >= 1, got {compute_scale}")
        if config is Configuration.DEVICE_CLASSIFIES and model is None:
            raise ValueError("configuration A runs inference on the device; "
                             "a model is required")
        if clip_id is None:
            clip_id = self._next_clip_id
        self._next_clip_id = clip_id + 1

        now = _now_us()
        record_start, record_end = record_window if record_window else (now, now)
        report = DeviceRunReport(
            device_id=self.device_id, config=config.value, clip_id=clip_id,
            compute_scale=compute_scale,
            bandwidth_bytes_per_s=self.network.bandwidth_bytes_per_s,
            record_start_us=record_start, record_end_us=record_end,
        )
        try:
            self._run_phases(config, clip, model, report)
        except (ProtocolError, ValueError) as exc:
            report.failed = True
            report.failure = str(exc)
        except (socket.timeout, TimeoutError):
            report.failed = True
            report.failure = f"timed out after {self.timeout_s}s waiting for a reply"
        except OSError as exc:
            report.failed = True
            report.failure = f"connection failed: {exc}"
        return report

    def _run_phases(self, config, clip, model, report) -> None:
        scale = report.compute_scale

        if config is Configuration.SERVER_CLASSIFIES_RAW:
            payload = encode_audio_payload(clip)
            msg_type = MsgType.AUDIO
        else:
            t0 = time.perf_counter()
            features = extract_features(clip)
            _stretch(time.perf_counter() - t0, scale)
            report.extract_end_us = _now_us()
            report.phase_reached = "extract"
            if config is Configuration.DEVICE_CLASSIFIES:
                t0 = time.perf_counter()
                probs = forward(model, features)
                class_index = int(np.argmax(probs))
                confidence = float(probs[class_index])
                _stretch(time.perf_counter() - t0, scale)
                report.classify_end_us = _now_us()
                report.phase_reached = "classify"
                report.class_index = class_index
                report.label = model.labels[class_index]
                report.confidence = confidence
                payload = encode_result_payload(class_index, confidence,
                                                report.clip_id)
                msg_type = MsgType.RESULT
            else:
                payload = encode_features_payload(features)
                msg_type = MsgType.FEATURES

        self.connect()
        report.send_start_us = _now_us()
        frame = Frame(msg_type, self.device_id, report.send_start_us, payload)
        data = encode_frame(frame)
        time.sleep(self.network.transfer_time_s(len(data)))
        self._sock.settimeout(self.timeout_s)
        self._sock.sendall(data)
        report.bytes_sent = len(data)
        report.phase_reached = "send"

        reply = decode_frame(self._recv)
        report.ack_received_us = _now_us()
        report.reply_type = int(reply.msg_type)
        self._handle_reply(config, reply, report)
        report.phase_reached = "ack"

    def _handle_reply(self, config, reply, report) -> None:
        if config is Configuration.DEVICE_CLASSIFIES:
            if reply.msg_type != MsgType.ACK:
                raise ProtocolError(
                    f"expected ACK, got msg_type {reply.msg_type}"
                )
            status, ack_clip_id = decode_ack_payload(reply.payload)
            report.ack_status = int(status)
            report.reply_clip_id = ack_clip_id
            if status != AckStatus.OK:
                raise ValueError("server reported an error for this clip")
            if ack_clip_id != report.clip_id:
                raise ProtocolError(
                    f"ack clip_id {ack_clip_id} != sent clip_id {report.clip_id}"
                )
        else:
            if reply.msg_type != MsgType.CLASSIFICATION:
                raise ProtocolError(
                    f"expected CLASSIFICATION, got msg_type {reply.msg_type}"
                )
            class_index, confidence, reply_clip_id = decode_result_payload(
                reply.payload
            )
            if class_index >= len(CLASS_LABELS):
                raise ProtocolError(f"class index {class_index} out of range")
            report.class_index = class_index
            report.confidence = confidence
            report.label = CLASS_LABELS[class_index]
            report.reply_clip_id = reply_clip_id


def run_pipeline(config, clip: AudioClip, server, model: MlpModel = None, *,
                 device_id: int = 1, clip_id: int = 0,
                 compute_scale: float = 1.0, network: NetworkProfile = None,
                 timeout_s: float = DEFAULT_ACK_TIMEOUT_S,
                 record_window: tuple = None) -> DeviceRunReport:
    """One-shot pipeline run over a fresh connection."""
    session = DeviceSession(server, device_id, network=network,
                            timeout_s=timeout_s)
    try:
        try:
            session.connect()
        except OSError as exc:
            if not isinstance(config, Configuration):
                config = Configuration.from_string(str(config))
            now = _now_us()
            rs, re = record_window if record_window else (now, now)
            return DeviceRunReport(
                device_id=device_id, config=config.value, clip_id=clip_id,
                compute_scale=compute_scale,
                bandwidth_bytes_per_s=(network or NetworkProfile()).bandwidth_bytes_per_s,
                record_start_us=rs, record_end_us=re,
                failed=True, failure=f"connection failed: {exc}",
            )
        return session.run(config, clip, model=model, clip_id=clip_id,
                           compute_scale=compute_scale,
                           record_window=record_window)
    finally:
        session.close()
