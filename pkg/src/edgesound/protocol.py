"""Binary TCP framing and payload codecs for the sound-classification wire format."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, float_to_pcm16, pcm16_to_float
from .dsp import FEATURE_LENGTH

MAGIC = b"USC1"
HEADER = struct.Struct("<4sBIQI")  # magic, msg_type, device_id, timestamp_us, payload_len
HEADER_SIZE = HEADER.size  # 21 bytes
MAX_PAYLOAD = 16 * 1024 * 1024

_AUDIO_HEAD = struct.Struct("<IBB")      # sample_rate, channels, bit_depth
_FEATURES_HEAD = struct.Struct("<H")     # dimension count
_RESULT = struct.Struct("<BfQ")          # class_index, confidence, clip_id
_ACK = struct.Struct("<BQ")              # status, clip_id

_U32_MAX = 2 ** 32 - 1
_U64_MAX = 2 ** 64 - 1


class MsgType(enum.IntEnum):
    AUDIO = 1
    FEATURES = 2
    RESULT = 3
    ACK = 4
    CLASSIFICATION = 5


class AckStatus(enum.IntEnum):
    OK = 0
    ERROR = 1


class ProtocolError(Exception):
    """Framing-level violation: the byte stream is not trustworthy past this point."""


@dataclass(frozen=True)
class Frame:
    """One wire message: type, sender device, send timestamp, opaque payload."""

    msg_type: int
    device_id: int
    timestamp_us: int
    payload: bytes

    def __post_init__(self):
        if self.msg_type not in MsgType._value2member_map_:
            raise ValueError(f"unknown msg_type {self.msg_type}")
        if not 0 <= self.device_id <= _U32_MAX:
            raise ValueError(f"device_id {self.device_id} outside u32 range")
        if not 0 <= self.timestamp_us <= _U64_MAX:
            raise ValueError(f"timestamp_us {self.timestamp_us} outside u64 range")
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.payload)


def encode_frame(frame: Frame) -> bytes:
    """Serialize a frame: 21-byte little-endian header followed by the payload."""
    header = HEADER.pack(MAGIC, frame.msg_type, frame.device_id,
                         frame.timestamp_us, len(frame.payload))
    return header + frame.payload


class FrameDecoder:
    """Incremental decoder; handles any fragmentation of the byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list:
        """Absorb bytes; return every frame completed so far, in order."""
        self._buf.extend(data)
        frames = []
        while True:
            prefix = bytes(self._buf[:4])
            if prefix != MAGIC[:len(prefix)]:
                raise ProtocolError(f"protocol violation: bad magic {prefix!r}")
            if len(self._buf) < HEADER_SIZE:
                break
            _, msg_type, device_id, timestamp_us, payload_len = HEADER.unpack_from(
                self._buf, 0
            )
            if msg_type not in MsgType._value2member_map_:
                raise ProtocolError(f"protocol violation: unknown msg_type {msg_type}")
            if payload_len > MAX_PAYLOAD:
                raise ProtocolError(
                    f"protocol violation: payload length {payload_len} exceeds "
                    f"{MAX_PAYLOAD}"
                )
            if len(self._buf) < HEADER_SIZE + payload_len:
                break
            payload = bytes(self._buf[HEADER_SIZE:HEADER_SIZE + payload_len])
            del self._buf[:HEADER_SIZE + payload_len]
            frames.append(Frame(msg_type, device_id, timestamp_us, payload))
        return frames

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


def decode_frame(read) -> Frame:
    """Read exactly one frame from a blocking byte source (file-like .read or callable)."""
    reader = read.read if hasattr(read, "read") else read

    def read_exact(n: int) -> bytes:
        chunks = bytearray()
        while len(chunks) < n:
            piece = reader(n - len(chunks))
            if not piece:
                raise ProtocolError("unexpected EOF mid-frame")
            chunks.extend(piece)
        return bytes(chunks)

    header = read_exact(HEADER_SIZE)
    magic, msg_type, device_id, timestamp_us, payload_len = HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"protocol violation: bad magic {magic!r}")
    if msg_type not in MsgType._value2member_map_:
        raise ProtocolError(f"protocol violation: unknown msg_type {msg_type}")
    if payload_len > MAX_PAYLOAD:
        raise ProtocolError(
            f"protocol violation: payload length {payload_len} exceeds {MAX_PAYLOAD}"
        )
    payload = read_exact(payload_len) if payload_len else b""
    return Frame(msg_type, device_id, timestamp_us, payload)


def encode_audio_payload(clip: AudioClip) -> bytes:
    """sample_rate u32, channels u8, bit_depth u8, then little-endian i16 PCM."""
    head = _AUDIO_HEAD.pack(clip.sample_rate, 1, 16)
    return head + float_to_pcm16(clip.samples).tobytes()


def decode_audio_payload(payload: bytes) -> AudioClip:
    """Inverse of encode_audio_payload."""
    if len(payload) < _AUDIO_HEAD.size:
        raise ValueError("audio payload shorter than its header")
    sample_rate, channels, bit_depth = _AUDIO_HEAD.unpack_from(payload, 0)
    if channels != 1:
        raise ValueError(f"audio payload has {channels} channels; only mono is valid")
    if bit_depth != 16:
        raise ValueError(f"audio payload bit depth {bit_depth}; only 16 is valid")
    if sample_rate == 0:
        raise ValueError("audio payload sample rate is zero")
    body = payload[_AUDIO_HEAD.size:]
    if len(body) % 2:
        raise ValueError("audio payload PCM bytes not a multiple of 2")
    if not body:
        raise ValueError("audio payload carries no samples")
    samples = pcm16_to_float(np.frombuffer(body, dtype="<i2"))
    return AudioClip(samples=samples, sample_rate=int(sample_rate))


def encode_features_payload(values: np.ndarray) -> bytes:
    """dim u16 then dim little-endian f32 values."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (FEATURE_LENGTH,):
        raise ValueError(f"feature vector must have length {FEATURE_LENGTH}, "
                         f"got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("feature vector must be finite")
    return _FEATURES_HEAD.pack(FEATURE_LENGTH) + values.astype("<f4").tobytes()


def decode_features_payload(payload: bytes) -> np.ndarray:
    """Inverse of encode_features_payload; enforces the fixed dimension."""
    if len(payload) < _FEATURES_HEAD.size:
        raise ValueError("features payload shorter than its header")
    (dim,) = _FEATURES_HEAD.unpack_from(payload, 0)
    if dim != FEATURE_LENGTH:
        raise ValueError(f"feature dimension {dim} != {FEATURE_LENGTH}")
    body = payload[_FEATURES_HEAD.size:]
    if len(body) != 4 * dim:
        raise ValueError(f"features payload has {len(body)} value bytes; "
                         f"expected {4 * dim}")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("features payload contains non-finite values")
    return values


def encode_result_payload(class_index: int, confidence: float, clip_id: int) -> bytes:
    """class u8, confidence f32, clip_id u64."""
    if not 0 <= class_index <= 255:
        raise ValueError(f"class index {class_index} outside u8 range")
    if not 0 <= clip_id <= _U64_MAX:
        raise ValueError(f"clip_id {clip_id} outside u64 range")
    if not np.isfinite(confidence):
        raise ValueError("confidence must be finite")
    return _RESULT.pack(class_index, float(np.clip(confidence, 0.0, 1.0)), clip_id)


def decode_result_payload(payload: bytes):
    """(class_index, confidence, clip_id) from a RESULT payload."""
    if len(payload) != _RESULT.size:
        raise ValueError(f"result payload must be {_RESULT.size} bytes, "
                         f"got {len(payload)}")
    class_index, confidence, clip_id = _RESULT.unpack(payload)
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    return class_index, float(confidence), clip_id


def encode_ack_payload(status: int, clip_id: int) -> bytes:
    """status u8 (0 ok, 1 error), clip_id u64."""
    if status not in (AckStatus.OK, AckStatus.ERROR):
        raise ValueError(f"unknown ack status {status}")
    if not 0 <= clip_id <= _U64_MAX:
        raise ValueError(f"clip_id {clip_id} outside u64 range")
    return _ACK.pack(status, clip_id)


def decode_ack_payload(payload: bytes):
    """(status, clip_id) from an ACK payload."""
    if len(payload) != _ACK.size:
        raise ValueError(f"ack payload must be {_ACK.size} bytes, got {len(payload)}")
    status, clip_id = _ACK.unpack(payload)
    if status not in (AckStatus.OK, AckStatus.ERROR):
        raise ValueError(f"unknown ack status {status}")
    return AckStatus(status), clip_id
