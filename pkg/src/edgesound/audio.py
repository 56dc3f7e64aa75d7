"""PCM audio container plus strict mono 16-bit WAV ingestion and export."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

PCM16_FULL_SCALE = 32768.0
PCM16_MIN = -32768
PCM16_MAX = 32767

# PCM-derived audio is in [-1, 1]; filtered intermediates (pre-emphasis, sinc
# overshoot) may exceed it slightly, so the container only rejects gross misuse.
PEAK_LIMIT = 4.0

_WAVE_FORMAT_PCM = 1


@dataclass(eq=False)
class AudioClip:
    """Mono audio buffer: float64 samples (nominally in [-1, 1]) plus the sample rate."""

    samples: np.ndarray
    sample_rate: int
    channels: int = field(default=1)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")
        if self.channels != 1:
            raise ValueError(f"only mono clips are supported, got {self.channels} channels")
        if not (isinstance(self.sample_rate, (int, np.integer)) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        self.sample_rate = int(self.sample_rate)
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")
        if self.samples.size and (np.abs(self.samples) > PEAK_LIMIT).any():
            peak = float(np.abs(self.samples).max())
            raise ValueError(f"samples far outside [-1, 1] (peak {peak:.6g}); not audio")

    @property
    def duration_s(self) -> float:
        """Clip length in seconds."""
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


def float_to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Quantize [-1, 1] floats to little-endian int16 (round half to even, clamped)."""
    scaled = np.rint(np.asarray(samples, dtype=np.float64) * PCM16_FULL_SCALE)
    return np.clip(scaled, PCM16_MIN, PCM16_MAX).astype("<i2")


def pcm16_to_float(pcm: np.ndarray) -> np.ndarray:
    """Map int16 PCM onto the [-1, 1) float grid used everywhere downstream."""
    return np.asarray(pcm, dtype=np.float64) / PCM16_FULL_SCALE


def quantize_to_pcm16_grid(samples: np.ndarray) -> np.ndarray:
    """Round floats onto the exact grid a 16-bit capture would have produced."""
    return pcm16_to_float(float_to_pcm16(samples))


def load_wav(path, *, mixdown: bool = False) -> AudioClip:
    """Read a RIFF/WAVE file; accepts 16-bit PCM, mono unless mixdown=True."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise ValueError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_size]
        if chunk_id == b"fmt " and fmt is None:
            if len(body) < 16:
                raise ValueError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data" and payload is None:
            if len(body) < chunk_size:
                raise ValueError(f"{path}: truncated data chunk")
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or payload is None:
        raise ValueError(f"{path}: missing fmt or data chunk")
    format_code, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if format_code != _WAVE_FORMAT_PCM:
        raise ValueError(f"{path}: unsupported encoding (format code {format_code}); PCM required")
    if bits != 16:
        raise ValueError(f"{path}: unsupported bit depth {bits}; 16-bit PCM required")
    if channels < 1:
        raise ValueError(f"{path}: invalid channel count {channels}")
    frame_bytes = 2 * channels
    if len(payload) % frame_bytes:
        payload = payload[:len(payload) - len(payload) % frame_bytes]

    pcm = np.frombuffer(payload, dtype="<i2")
    if channels > 1:
        if not mixdown:
            raise ValueError(
                f"{path}: {channels} channels; mono required (enable mixdown to average them)"
            )
        samples = pcm16_to_float(pcm.reshape(-1, channels)).mean(axis=1)
    else:
        samples = pcm16_to_float(pcm)
    return AudioClip(samples=samples, sample_rate=int(sample_rate))


def save_wav(clip: AudioClip, path) -> None:
    """Write a clip as a mono 16-bit PCM WAV file."""
    pcm = float_to_pcm16(clip.samples).tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, _WAVE_FORMAT_PCM, 1, clip.sample_rate,
        clip.sample_rate * 2, 2, 16,
    )
    header += b"data" + struct.pack("<I", len(pcm))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pcm)
