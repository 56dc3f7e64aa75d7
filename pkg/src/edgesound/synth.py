"""Deterministic synthetic generator for the ten urban sound classes."""

from __future__ import annotations

import numpy as np

from .audio import AudioClip, quantize_to_pcm16_grid
from .classifier import CLASS_LABELS

SYNTH_PEAK = 0.9
CAR_HORN_HZ = 400.0
JACKHAMMER_RATE_HZ = 12.0
SIREN_LOW_HZ = 650.0
SIREN_HIGH_HZ = 1350.0


def _tone(t: np.ndarray, freq: float, phase: float = 0.0) -> np.ndarray:
    """Fixed-frequency sine."""
    return np.sin(2.0 * np.pi * freq * t + phase)


def _fm_tone(freq_per_sample: np.ndarray, sr: int, phase: float = 0.0) -> np.ndarray:
    """Sine with a per-sample instantaneous frequency."""
    return np.sin(2.0 * np.pi * np.cumsum(freq_per_sample) / sr + phase)


def _shaped_noise(rng, n: int, sr: int, shape) -> np.ndarray:
    """White noise spectrally weighted by shape(freqs_hz), peak-normalized."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spectrum *= shape(freqs)
    spectrum[0] = 0.0
    out = np.fft.irfft(spectrum, n=n)
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def _band_noise(rng, n: int, sr: int, lo: float, hi: float) -> np.ndarray:
    """Noise restricted to [lo, hi] Hz."""
    return _shaped_noise(rng, n, sr, lambda f: ((f >= lo) & (f <= hi)).astype(float))


def _lowpass_noise(rng, n: int, sr: int, fc: float) -> np.ndarray:
    """Noise rolled off above fc."""
    return _shaped_noise(rng, n, sr, lambda f: 1.0 / (1.0 + (f / fc) ** 2))


def _decay_burst(rng, n_total: int, sr: int, start: int, dur_s: float,
                 tau_s: float, lo: float, hi: float) -> np.ndarray:
    """A band-noise burst with instant attack and exponential decay, placed at start."""
    length = min(int(dur_s * sr), n_total - start)
    if length <= 0:
        return np.zeros(n_total)
    t = np.arange(length) / sr
    burst = _band_noise(rng, length, sr, lo, hi) * np.exp(-t / tau_s)
    out = np.zeros(n_total)
    out[start:start + length] = burst
    return out


def _smooth_gate(t: np.ndarray, period_s: float, duty: float, edge_s: float,
                 phase_s: float) -> np.ndarray:
    """Periodic on/off envelope with raised-cosine edges."""
    pos = np.mod(t + phase_s, period_s)
    on_len = duty * period_s
    gate = (pos < on_len).astype(float)
    rise = pos < edge_s
    gate[rise] = 0.5 - 0.5 * np.cos(np.pi * pos[rise] / edge_s)
    fall = (pos >= on_len - edge_s) & (pos < on_len)
    gate[fall] = 0.5 + 0.5 * np.cos(np.pi * (pos[fall] - (on_len - edge_s)) / edge_s)
    return gate


def _air_conditioner(rng, t, sr):
    """Broadband low-passed rumble with a mains hum and slow level wobble."""
    n = t.size
    base = _lowpass_noise(rng, n, sr, 280.0)
    hum = 0.1 * _tone(t, 120.0, rng.uniform(0, 2 * np.pi))
    wobble = 1.0 + 0.05 * _tone(t, 0.3, rng.uniform(0, 2 * np.pi))
    return (base + hum) * wobble


def _car_horn(rng, t, sr):
    """Harmonic stack on a fixed 400 Hz fundamental, gated on and off."""
    phase = rng.uniform(0, 2 * np.pi)
    stack = (_tone(t, CAR_HORN_HZ, phase)
             + 0.45 * _tone(t, 2 * CAR_HORN_HZ, phase)
             + 0.18 * _tone(t, 3 * CAR_HORN_HZ, phase))
    duty = rng.uniform(0.6, 0.72)
    gate = _smooth_gate(t, 0.6, duty, 0.008, rng.uniform(0, 0.6))
    return stack * gate


def _children_playing(rng, t, sr):
    """Scattered vibrato chirps in the upper mids over a soft noise bed."""
    n = t.size
    out = 0.08 * _lowpass_noise(rng, n, sr, 2000.0)
    n_chirps = max(1, int(rng.integers(8, 15) * t[-1] / 10.0)) if n > 1 else 1
    for _ in range(n_chirps):
        dur = rng.uniform(0.12, 0.3)
        length = min(int(dur * sr), n)
        start = int(rng.uniform(0, max(1, n - length)))
        tt = np.arange(length) / sr
        f0 = rng.uniform(900.0, 2200.0)
        freq = f0 * (1.0 + 0.06 * np.sin(2 * np.pi * 6.0 * tt + rng.uniform(0, 2 * np.pi)))
        env = np.sin(np.pi * np.arange(length) / length) ** 2
        out[start:start + length] += 0.9 * env * _fm_tone(freq, sr)
    return out


def _dog_bark(rng, t, sr):
    """Short biphonic bursts with sharp attacks at a couple per second."""
    n = t.size
    out = 0.03 * _lowpass_noise(rng, n, sr, 800.0)
    rate = rng.uniform(1.5, 3.0)
    n_barks = max(1, int(rate * t[-1])) if n > 1 else 1
    for _ in range(n_barks):
        dur = rng.uniform(0.12, 0.2)
        length = min(int(dur * sr), n)
        start = int(rng.uniform(0, max(1, n - length)))
        tt = np.arange(length) / sr
        env = np.minimum(tt / 0.005, 1.0) * np.exp(-tt / 0.06)
        voiced = _tone(tt, 240.0) + 0.6 * _tone(tt, 480.0)
        rasp = 0.8 * _band_noise(rng, length, sr, 300.0, 1500.0)
        out[start:start + length] += env * (voiced + rasp)
    return out


def _drilling(rng, t, sr):
    """High band noise amplitude-modulated at 30 Hz plus a bit tone."""
    n = t.size
    hi = min(4500.0, sr / 2.0 - 100.0)
    body = _band_noise(rng, n, sr, 1800.0, hi)
    am = 1.0 - 0.8 * 0.5 * (1.0 + np.sin(2 * np.pi * 30.0 * t + rng.uniform(0, 2 * np.pi)))
    return body * am + 0.12 * _tone(t, 3150.0, rng.uniform(0, 2 * np.pi))


def _engine_idling(rng, t, sr):
    """Low harmonic stack near 50 Hz with slow loudness sway."""
    n = t.size
    f0 = rng.uniform(46.0, 54.0)
    phase = rng.uniform(0, 2 * np.pi)
    stack = sum((1.0 / h ** 1.3) * _tone(t, h * f0, phase * h) for h in range(1, 11))
    sway = 1.0 + 0.1 * _tone(t, 0.7, rng.uniform(0, 2 * np.pi))
    return stack * sway + 0.12 * _lowpass_noise(rng, n, sr, 150.0)


def _gun_shot(rng, t, sr):
    """One to three broadband cracks with a low boom, over near silence."""
    n = t.size
    out = 1e-4 * rng.standard_normal(n)
    n_shots = int(rng.integers(1, 4))
    duration = t[-1] if n > 1 else 0.0
    for k in range(n_shots):
        start_s = rng.uniform(0.02, max(0.05, duration - 0.35))
        start = min(int(start_s * sr), max(0, n - 1))
        crack = _decay_burst(rng, n, sr, start, 0.25, 0.05, 300.0, sr / 2.0 - 100.0)
        boom_len = min(int(0.3 * sr), n - start)
        boom = np.zeros(n)
        if boom_len > 0:
            tt = np.arange(boom_len) / sr
            boom[start:start + boom_len] = np.exp(-tt / 0.14) * _tone(tt, 85.0)
        out += crack + 0.7 * boom
    return out


def _jackhammer(rng, t, sr):
    """Percussive bursts at a fixed 12 Hz repetition rate."""
    n = t.size
    out = 0.1 * _band_noise(rng, n, sr, 200.0, 2000.0)
    period = int(round(sr / JACKHAMMER_RATE_HZ))
    offset = int(rng.uniform(0, period))
    hi = min(6000.0, sr / 2.0 - 100.0)
    for start in range(offset, n, period):
        out += _decay_burst(rng, n, sr, start, 0.015, 0.004, 800.0, hi)
    return out


def _siren(rng, t, sr):
    """Tone sweeping between 650 and 1350 Hz on a slow triangle, plus harmonic."""
    rate = 0.35 * rng.uniform(0.95, 1.05)
    phase01 = np.mod(rate * t + rng.uniform(0, 1), 1.0)
    triangle = 1.0 - np.abs(2.0 * phase01 - 1.0)
    freq = SIREN_LOW_HZ + (SIREN_HIGH_HZ - SIREN_LOW_HZ) * triangle
    carrier = _fm_tone(freq, sr, rng.uniform(0, 2 * np.pi))
    harmonic = 0.3 * _fm_tone(2.0 * freq, sr, rng.uniform(0, 2 * np.pi))
    return carrier + harmonic + 0.02 * rng.standard_normal(t.size)


def _street_music(rng, t, sr):
    """Plucked bass, sustained chord pad, and a stepping pentatonic lead."""
    n = t.size
    out = 0.04 * _lowpass_noise(rng, n, sr, 4000.0)
    chord = sum(_tone(t, f, rng.uniform(0, 2 * np.pi))
                for f in (261.63, 329.63, 392.0))
    out += 0.15 * chord
    beat = int(0.5 * sr)
    bass_notes = (110.0, 146.83)
    for i, start in enumerate(range(0, n, max(1, beat))):
        length = min(beat, n - start)
        tt = np.arange(length) / sr
        env = np.exp(-tt / 0.2)
        out[start:start + length] += 0.6 * env * _tone(tt, bass_notes[i % 2])
    scale = (523.25, 587.33, 659.26, 783.99, 880.0)
    step = int(0.25 * sr)
    note = int(rng.integers(0, len(scale)))
    for start in range(0, n, max(1, step)):
        note = int(np.clip(note + rng.integers(-1, 2), 0, len(scale) - 1))
        length = min(step, n - start)
        tt = np.arange(length) / sr
        env = np.sin(np.pi * np.arange(length) / max(1, length)) ** 0.5
        out[start:start + length] += 0.2 * env * _tone(tt, scale[note])
    return out


_RECIPES = (
    _air_conditioner,
    _car_horn,
    _children_playing,
    _dog_bark,
    _drilling,
    _engine_idling,
    _gun_shot,
    _jackhammer,
    _siren,
    _street_music,
)


def synth_clip(class_id: int, duration_s: float = 10.0, sr: int = 16000,
               seed: int = 0) -> AudioClip:
    """Deterministic clip for one class: same arguments, same samples."""
    if not 0 <= class_id < len(CLASS_LABELS):
        raise ValueError(f"class_id must be in [0, {len(CLASS_LABELS)}), got {class_id}")
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    if sr <= 0:
        raise ValueError(f"sample rate must be positive, got {sr}")
    n = max(1, int(round(duration_s * sr)))
    rng = np.random.default_rng([seed, class_id])
    t = np.arange(n) / sr
    raw = _RECIPES[class_id](rng, t, sr)
    peak = np.abs(raw).max()
    if peak > 0:
        raw = raw * (SYNTH_PEAK / peak)
    return AudioClip(quantize_to_pcm16_grid(raw), sr)


def synth_label(class_id: int) -> str:
    """Class label for a recipe index."""
    return CLASS_LABELS[class_id]
