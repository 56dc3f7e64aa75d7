"""Wire-format tests: golden bytes, fragmentation, fuzzing, payload codecs."""
import io
import struct

import numpy as np
import pytest

from edgesound.audio import AudioClip
from edgesound.protocol import (
    HEADER_SIZE,
    MAX_PAYLOAD,
    AckStatus,
    Frame,
    FrameDecoder,
    MsgType,
    ProtocolError,
    decode_ack_payload,
    decode_audio_payload,
    decode_features_payload,
    decode_frame,
    decode_result_payload,
    encode_ack_payload,
    encode_audio_payload,
    encode_features_payload,
    encode_frame,
    encode_result_payload,
)


def manual_frame_bytes(msg_type, device_id, timestamp_us, payload):
    """Independent encoding straight from the documented layout."""
    return struct.pack("<4sBIQI", b"USC1", msg_type, device_id,
                       timestamp_us, len(payload)) + payload


class TestGoldenBytes:
    def test_ack_frame_is_30_bytes(self):
        payload = encode_ack_payload(AckStatus.OK, clip_id=7)
        frame = Frame(MsgType.ACK, 1, 0, payload)
        blob = encode_frame(frame)
        assert len(blob) == 30
        assert blob[:4] == bytes([0x55, 0x53, 0x43, 0x31])  # "USC1"
        expected = manual_frame_bytes(4, 1, 0, struct.pack("<BQ", 0, 7))
        assert blob == expected

    def test_result_frame_is_34_bytes(self):
        payload = encode_result_payload(8, 0.875, clip_id=99)
        blob = encode_frame(Frame(MsgType.RESULT, 3, 1_000_000, payload))
        expected = manual_frame_bytes(
            3, 3, 1_000_000, struct.pack("<BfQ", 8, 0.875, 99))
        assert len(blob) == 34
        assert blob == expected

    def test_features_frame_is_795_bytes(self):
        values = np.linspace(-1, 1, 193)
        blob = encode_frame(Frame(MsgType.FEATURES, 2, 5, encode_features_payload(values)))
        expected = manual_frame_bytes(
            2, 2, 5, struct.pack("<H", 193) + values.astype("<f4").tobytes())
        assert len(blob) == 795
        assert blob == expected

    def test_audio_frame_layout(self):
        clip = AudioClip(np.array([0.0, 0.5, -0.5]), 16000)
        blob = encode_frame(Frame(MsgType.AUDIO, 9, 42, encode_audio_payload(clip)))
        expected = manual_frame_bytes(
            1, 9, 42,
            struct.pack("<IBB", 16000, 1, 16) + struct.pack("<3h", 0, 16384, -16384))
        assert blob == expected

    def test_ten_second_audio_frame_size(self):
        clip = AudioClip(np.zeros(160_000), 16000)
        frame = Frame(MsgType.AUDIO, 1, 0, encode_audio_payload(clip))
        assert frame.wire_size == 320_027

    def test_config_payload_size_ordering(self):
        result = Frame(MsgType.RESULT, 1, 0, encode_result_payload(0, 1.0, 0))
        features = Frame(MsgType.FEATURES, 1, 0,
                         encode_features_payload(np.zeros(193)))
        audio = Frame(MsgType.AUDIO, 1, 0,
                      encode_audio_payload(AudioClip(np.zeros(160_000), 16000)))
        assert result.wire_size < features.wire_size < audio.wire_size

    def test_classification_frame(self):
        payload = encode_result_payload(4, 0.25, clip_id=17)
        blob = encode_frame(Frame(MsgType.CLASSIFICATION, 0, 8, payload))
        assert blob == manual_frame_bytes(5, 0, 8, struct.pack("<BfQ", 4, 0.25, 17))


class TestRoundTrip:
    def _random_frame(self, rng):
        msg_type = int(rng.choice(list(MsgType)))
        payload = rng.integers(0, 256, size=int(rng.integers(0, 64)),
                               dtype=np.uint8).tobytes()
        return Frame(msg_type, int(rng.integers(0, 2**32)),
                     int(rng.integers(0, 2**63)), payload)

    def test_encode_decode_property(self, rng):
        for _ in range(300):
            frame = self._random_frame(rng)
            blob = encode_frame(frame)
            via_decoder = FrameDecoder().feed(blob)
            assert via_decoder == [frame]
            via_stream = decode_frame(io.BytesIO(blob))
            assert via_stream == frame

    def test_byte_at_a_time_equals_whole_feed(self, rng):
        frames = [self._random_frame(rng) for _ in range(40)]
        stream = b"".join(encode_frame(f) for f in frames)
        whole = FrameDecoder().feed(stream)
        dribble = FrameDecoder()
        out = []
        for i in range(len(stream)):
            out.extend(dribble.feed(stream[i:i + 1]))
        assert out == whole == frames
        assert dribble.pending_bytes == 0

    def test_random_chunk_fragmentation(self, rng):
        frames = [self._random_frame(rng) for _ in range(25)]
        stream = b"".join(encode_frame(f) for f in frames)
        decoder = FrameDecoder()
        out = []
        pos = 0
        while pos < len(stream):
            step = int(rng.integers(1, 40))
            out.extend(decoder.feed(stream[pos:pos + step]))
            pos += step
        assert out == frames

    def test_multiple_frames_in_one_feed(self):
        frames = [Frame(MsgType.ACK, i, i, encode_ack_payload(0, i))
                  for i in range(5)]
        blob = b"".join(encode_frame(f) for f in frames)
        assert FrameDecoder().feed(blob) == frames


class TestDecoderRejection:
    def test_bad_magic_rejected_early(self):
        decoder = FrameDecoder()
        with pytest.raises(ProtocolError, match="bad magic"):
            decoder.feed(b"X")

    def test_partial_magic_prefix_ok_until_wrong(self):
        decoder = FrameDecoder()
        assert decoder.feed(b"US") == []
        with pytest.raises(ProtocolError, match="bad magic"):
            decoder.feed(b"CX")

    def test_unknown_msg_type(self):
        blob = struct.pack("<4sBIQI", b"USC1", 99, 1, 0, 0)
        with pytest.raises(ProtocolError, match="unknown msg_type"):
            FrameDecoder().feed(blob)
        with pytest.raises(ProtocolError, match="unknown msg_type"):
            decode_frame(io.BytesIO(blob))

    def test_oversized_payload_header(self):
        blob = struct.pack("<4sBIQI", b"USC1", 1, 1, 0, MAX_PAYLOAD + 1)
        with pytest.raises(ProtocolError, match="exceeds"):
            FrameDecoder().feed(blob)
        with pytest.raises(ProtocolError, match="exceeds"):
            decode_frame(io.BytesIO(blob))

    def test_truncated_stream_raises_eof(self):
        blob = encode_frame(Frame(MsgType.ACK, 1, 0, encode_ack_payload(0, 1)))
        for cut in (3, HEADER_SIZE - 1, HEADER_SIZE + 2, len(blob) - 1):
            with pytest.raises(ProtocolError, match="unexpected EOF"):
                decode_frame(io.BytesIO(blob[:cut]))

    def test_incomplete_frame_stays_pending(self):
        blob = encode_frame(Frame(MsgType.ACK, 1, 0, encode_ack_payload(0, 1)))
        decoder = FrameDecoder()
        assert decoder.feed(blob[:-1]) == []
        assert decoder.pending_bytes == len(blob) - 1
        assert decoder.feed(blob[-1:]) != []

    def test_garbage_fuzz_never_crashes(self, rng):
        for _ in range(2000):
            blob = rng.integers(0, 256, size=int(rng.integers(0, 120)),
                                dtype=np.uint8).tobytes()
            try:
                FrameDecoder().feed(blob)
            except ProtocolError:
                pass
            try:
                decode_frame(io.BytesIO(blob))
            except ProtocolError:
                pass

    def test_decode_frame_accepts_callable(self):
        blob = encode_frame(Frame(MsgType.ACK, 1, 0, encode_ack_payload(0, 1)))
        stream = io.BytesIO(blob)
        frame = decode_frame(stream.read)
        assert frame.msg_type == MsgType.ACK


class TestFrameValidation:
    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError, match="msg_type"):
            Frame(0, 1, 0, b"")

    def test_device_id_range(self):
        with pytest.raises(ValueError, match="device_id"):
            Frame(MsgType.ACK, -1, 0, b"")
        with pytest.raises(ValueError, match="device_id"):
            Frame(MsgType.ACK, 2**32, 0, b"")

    def test_payload_cap(self):
        with pytest.raises(ValueError, match="exceeds"):
            Frame(MsgType.AUDIO, 1, 0, b"\x00" * (MAX_PAYLOAD + 1))


class TestAudioPayload:
    def test_roundtrip_bitwise(self, rng):
        pcm_grid = rng.integers(-32768, 32768, 500).astype(np.int16) / 32768.0
        clip = AudioClip(pcm_grid, 44100)
        out = decode_audio_payload(encode_audio_payload(clip))
        assert out.sample_rate == 44100
        assert np.array_equal(out.samples, clip.samples)

    def test_validation(self):
        good = encode_audio_payload(AudioClip(np.zeros(4), 8000))
        with pytest.raises(ValueError, match="shorter"):
            decode_audio_payload(good[:3])
        bad_channels = struct.pack("<IBB", 8000, 2, 16) + b"\x00\x00"
        with pytest.raises(ValueError, match="mono"):
            decode_audio_payload(bad_channels)
        bad_depth = struct.pack("<IBB", 8000, 1, 8) + b"\x00\x00"
        with pytest.raises(ValueError, match="bit depth"):
            decode_audio_payload(bad_depth)
        zero_rate = struct.pack("<IBB", 0, 1, 16) + b"\x00\x00"
        with pytest.raises(ValueError, match="sample rate"):
            decode_audio_payload(zero_rate)
        odd = struct.pack("<IBB", 8000, 1, 16) + b"\x00"
        with pytest.raises(ValueError, match="multiple of 2"):
            decode_audio_payload(odd)
        empty = struct.pack("<IBB", 8000, 1, 16)
        with pytest.raises(ValueError, match="no samples"):
            decode_audio_payload(empty)


class TestFeaturesPayload:
    def test_roundtrip_is_f32_quantized(self, rng):
        values = rng.standard_normal(193)
        out = decode_features_payload(encode_features_payload(values))
        assert np.array_equal(out, values.astype(np.float32).astype(np.float64))

    def test_wrong_length_rejected_on_encode(self):
        with pytest.raises(ValueError, match="193"):
            encode_features_payload(np.zeros(192))

    def test_non_finite_rejected_on_encode(self):
        bad = np.zeros(193)
        bad[5] = np.inf
        with pytest.raises(ValueError, match="finite"):
            encode_features_payload(bad)

    def test_wrong_dim_rejected_on_decode(self):
        payload = struct.pack("<H", 192) + b"\x00" * (4 * 192)
        with pytest.raises(ValueError, match="dimension 192"):
            decode_features_payload(payload)

    def test_length_mismatch_rejected_on_decode(self):
        payload = struct.pack("<H", 193) + b"\x00" * 100
        with pytest.raises(ValueError, match="value bytes"):
            decode_features_payload(payload)

    def test_non_finite_rejected_on_decode(self):
        values = np.zeros(193, dtype="<f4")
        values[0] = np.nan
        payload = struct.pack("<H", 193) + values.tobytes()
        with pytest.raises(ValueError, match="non-finite"):
            decode_features_payload(payload)


class TestResultAndAckPayloads:
    def test_result_roundtrip(self):
        idx, conf, clip = decode_result_payload(encode_result_payload(7, 0.5, 123))
        assert (idx, clip) == (7, 123)
        assert conf == pytest.approx(0.5)

    def test_result_confidence_clamped_on_encode(self):
        _, conf, _ = decode_result_payload(encode_result_payload(0, 1.7, 0))
        assert conf == 1.0

    def test_result_validation(self):
        with pytest.raises(ValueError, match="class index"):
            encode_result_payload(300, 0.5, 0)
        with pytest.raises(ValueError, match="confidence"):
            encode_result_payload(0, float("nan"), 0)
        with pytest.raises(ValueError, match="13 bytes"):
            decode_result_payload(b"\x00" * 5)
        bad = struct.pack("<BfQ", 0, 1.5, 0)
        with pytest.raises(ValueError, match=r"outside \[0, 1\]"):
            decode_result_payload(bad)

    def test_ack_roundtrip(self):
        status, clip = decode_ack_payload(encode_ack_payload(AckStatus.ERROR, 55))
        assert status is AckStatus.ERROR
        assert clip == 55

    def test_ack_validation(self):
        with pytest.raises(ValueError, match="status"):
            encode_ack_payload(2, 0)
        with pytest.raises(ValueError, match="9 bytes"):
            decode_ack_payload(b"\x00")
        with pytest.raises(ValueError, match="status"):
            decode_ack_payload(struct.pack("<BQ", 9, 0))
