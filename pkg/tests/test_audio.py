"""Audio container, PCM conversion, and WAV round-trip tests."""
import struct

import numpy as np
import pytest

from edgesound.audio import (
    AudioClip,
    float_to_pcm16,
    load_wav,
    pcm16_to_float,
    quantize_to_pcm16_grid,
    save_wav,
)


class TestAudioClip:
    def test_basic_properties(self):
        clip = AudioClip(np.zeros(22050), 22050)
        assert len(clip) == 22050
        assert clip.duration_s == pytest.approx(1.0)
        assert clip.samples.dtype == np.float64

    def test_coerces_to_float64(self):
        clip = AudioClip(np.array([0, 1, 0], dtype=np.int32), 8000)
        assert clip.samples.dtype == np.float64

    def test_rejects_2d(self):
        with pytest.raises(ValueError, match="1-D"):
            AudioClip(np.zeros((2, 100)), 8000)

    def test_rejects_stereo_channels(self):
        with pytest.raises(ValueError, match="mono"):
            AudioClip(np.zeros(100), 8000, channels=2)

    @pytest.mark.parametrize("rate", [0, -1, 1.5, "fast"])
    def test_rejects_bad_sample_rate(self, rate):
        with pytest.raises(ValueError, match="sample_rate"):
            AudioClip(np.zeros(10), rate)

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            AudioClip(np.array([0.0, np.nan]), 8000)

    def test_rejects_non_audio_scale(self):
        with pytest.raises(ValueError, match="not audio"):
            AudioClip(np.array([0.0, 30000.0]), 8000)

    def test_allows_filter_headroom(self):
        AudioClip(np.array([-1.9, 1.9]), 8000)

    def test_empty_clip_allowed(self):
        assert len(AudioClip(np.array([]), 8000)) == 0


class TestPcmConversion:
    def test_known_values(self):
        pcm = float_to_pcm16(np.array([0.0, 0.5, -0.5, 1.0, -1.0]))
        assert pcm.tolist() == [0, 16384, -16384, 32767, -32768]
        assert pcm.dtype == np.dtype("<i2")

    def test_clamps_out_of_range(self):
        pcm = float_to_pcm16(np.array([1.5, -1.5]))
        assert pcm.tolist() == [32767, -32768]

    def test_round_half_to_even(self):
        # 0.5/32768 scales to exactly 0.5, which rounds to 0, not 1.
        assert float_to_pcm16(np.array([0.5 / 32768.0]))[0] == 0
        assert float_to_pcm16(np.array([1.5 / 32768.0]))[0] == 2

    def test_roundtrip_on_grid(self, rng):
        pcm = rng.integers(-32768, 32768, size=1000).astype(np.int16)
        again = float_to_pcm16(pcm16_to_float(pcm))
        assert np.array_equal(pcm, again)

    def test_quantize_idempotent(self, rng):
        x = rng.uniform(-1, 1, size=500)
        q = quantize_to_pcm16_grid(x)
        assert np.array_equal(q, quantize_to_pcm16_grid(q))
        assert np.max(np.abs(q - x)) <= 0.5 / 32768.0 + 1e-12


class TestWavIO:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        samples = quantize_to_pcm16_grid(rng.uniform(-0.9, 0.9, 4000))
        clip = AudioClip(samples, 16000)
        path = tmp_path / "clip.wav"
        save_wav(clip, path)
        loaded = load_wav(path)
        assert loaded.sample_rate == 16000
        assert np.array_equal(loaded.samples, clip.samples)

    def test_header_shape(self, tmp_path):
        path = tmp_path / "c.wav"
        save_wav(AudioClip(np.zeros(10), 8000), path)
        blob = path.read_bytes()
        assert blob[:4] == b"RIFF" and blob[8:12] == b"WAVE"
        assert len(blob) == 44 + 20

    def test_rejects_non_wav(self, tmp_path):
        path = tmp_path / "x.wav"
        path.write_bytes(b"OggS" + b"\x00" * 40)
        with pytest.raises(ValueError, match="not a RIFF/WAVE"):
            load_wav(path)

    def test_rejects_float_format(self, tmp_path):
        body = struct.pack("<HHIIHH", 3, 1, 8000, 32000, 4, 32)
        blob = (b"RIFF" + struct.pack("<I", 36) + b"WAVE"
                + b"fmt " + struct.pack("<I", len(body)) + body
                + b"data" + struct.pack("<I", 0))
        path = tmp_path / "f.wav"
        path.write_bytes(blob)
        with pytest.raises(ValueError, match="format code 3"):
            load_wav(path)

    def test_rejects_8bit(self, tmp_path):
        body = struct.pack("<HHIIHH", 1, 1, 8000, 8000, 1, 8)
        blob = (b"RIFF" + struct.pack("<I", 36) + b"WAVE"
                + b"fmt " + struct.pack("<I", len(body)) + body
                + b"data" + struct.pack("<I", 0))
        path = tmp_path / "b.wav"
        path.write_bytes(blob)
        with pytest.raises(ValueError, match="bit depth 8"):
            load_wav(path)

    def test_missing_data_chunk(self, tmp_path):
        body = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
        blob = (b"RIFF" + struct.pack("<I", 24) + b"WAVE"
                + b"fmt " + struct.pack("<I", len(body)) + body)
        path = tmp_path / "m.wav"
        path.write_bytes(blob)
        with pytest.raises(ValueError, match="missing fmt or data"):
            load_wav(path)

    def test_skips_extra_chunks_with_odd_padding(self, tmp_path):
        pcm = struct.pack("<3h", 100, -200, 300)
        body = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
        blob = (b"RIFF" + struct.pack("<I", 0) + b"WAVE"
                + b"LIST" + struct.pack("<I", 3) + b"abc\x00"  # odd size, padded
                + b"fmt " + struct.pack("<I", len(body)) + body
                + b"data" + struct.pack("<I", len(pcm)) + pcm)
        path = tmp_path / "odd.wav"
        path.write_bytes(blob)
        clip = load_wav(path)
        assert float_to_pcm16(clip.samples).tolist() == [100, -200, 300]

    def test_stereo_rejected_without_mixdown(self, tmp_path):
        pcm = struct.pack("<4h", 1000, 3000, -1000, -3000)
        body = struct.pack("<HHIIHH", 1, 2, 8000, 32000, 4, 16)
        blob = (b"RIFF" + struct.pack("<I", 0) + b"WAVE"
                + b"fmt " + struct.pack("<I", len(body)) + body
                + b"data" + struct.pack("<I", len(pcm)) + pcm)
        path = tmp_path / "st.wav"
        path.write_bytes(blob)
        with pytest.raises(ValueError, match="mixdown"):
            load_wav(path)
        clip = load_wav(path, mixdown=True)
        assert np.allclose(clip.samples, [2000 / 32768.0, -2000 / 32768.0])
