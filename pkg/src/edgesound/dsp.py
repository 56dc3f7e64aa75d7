"""Audio feature extraction: resampling, STFT, mel/MFCC, chroma, contrast, tonnetz."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import AudioClip

ANALYSIS_SAMPLE_RATE = 22050
N_FFT = 2048
HOP_LENGTH = 512
PRE_EMPHASIS_COEFF = 0.97
N_MELS = 128
N_MFCC = 40
N_CHROMA = 12
CONTRAST_BANDS = 6
CONTRAST_FMIN_HZ = 200.0
CONTRAST_ALPHA = 0.02
N_TONNETZ = 6
LOG_FLOOR = 1e-10

SINC_HALF_WIDTH = 16
_KAISER_BETA = 8.555
_RESAMPLE_CHUNK = 32768
_MAX_POLYPHASE = 2048

FEATURE_LAYOUT = (
    ("mfcc", N_MFCC),
    ("chroma", N_CHROMA),
    ("mel", N_MELS),
    ("contrast", CONTRAST_BANDS + 1),
    ("tonnetz", N_TONNETZ),
)
FEATURE_LENGTH = sum(width for _, width in FEATURE_LAYOUT)

PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
_A440_MIDI = 69
_A440_HZ = 440.0
_MIDI_C0_OFFSET = 0  # pitch class index 0 is C, so A440 lands on index 9


def feature_slices() -> dict:
    """Return the name -> slice map for the 193-value feature vector."""
    out = {}
    start = 0
    for name, width in FEATURE_LAYOUT:
        out[name] = slice(start, start + width)
        start += width
    return out


@dataclass(eq=False)
class Spectrogram:
    """STFT magnitudes [n_frames x n_bins] with the parameters that produced them."""

    magnitudes: np.ndarray
    sample_rate: int
    n_fft: int
    hop: int

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of each FFT bin."""
        return np.arange(self.n_bins) * (self.sample_rate / self.n_fft)

    def power(self) -> np.ndarray:
        """Magnitude-squared spectrogram."""
        return self.magnitudes ** 2


@dataclass(eq=False)
class FilterBank:
    """Triangular filter weights [n_filters x n_bins] for a fixed n_fft/sr pair."""

    weights: np.ndarray
    sample_rate: int
    n_fft: int
    fmin: float
    fmax: float

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]


def hz_to_mel(hz):
    """Map Hz to mels: 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    """Inverse of hz_to_mel."""
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def _kaiser(x: np.ndarray, half_width: float) -> np.ndarray:
    """Continuous Kaiser window on [-half_width, half_width]."""
    inside = np.clip(1.0 - (x / half_width) ** 2, 0.0, None)
    return np.i0(_KAISER_BETA * np.sqrt(inside)) / np.i0(_KAISER_BETA)


def _sinc_filter(delta: np.ndarray, cutoff: float, half: int) -> np.ndarray:
    """Windowed-sinc filter values at fractional offsets delta."""
    return cutoff * np.sinc(cutoff * delta) * _kaiser(delta, half)


@lru_cache(maxsize=16)
def _polyphase_table(up: int, down: int):
    """Per-phase windowed-sinc weights for a rational rate change up/down."""
    cutoff = min(1.0, up / down)
    half = int(np.ceil(SINC_HALF_WIDTH / cutoff))
    offsets = np.arange(-half + 1, half + 1, dtype=np.float64)
    anchors = (np.arange(up) * down) // up
    fracs = (np.arange(up) * down) % up / up
    weights = _sinc_filter(fracs[:, None] - offsets[None, :], cutoff, half)
    weights /= weights.sum(axis=1, keepdims=True)
    weights.setflags(write=False)
    anchors.setflags(write=False)
    return weights, anchors, half


def resample(clip: AudioClip, target_sr: int, *, method: str = "sinc") -> AudioClip:
    """Resample to target_sr via windowed-sinc interpolation (or 'linear' for speed)."""
    if len(clip) == 0:
        raise ValueError("empty input")
    if target_sr <= 0:
        raise ValueError(f"target_sr must be positive, got {target_sr}")
    if method not in ("sinc", "linear"):
        raise ValueError(f"unknown resample method {method!r}")
    if target_sr == clip.sample_rate:
        return AudioClip(clip.samples.copy(), target_sr)

    x = clip.samples
    n_in = x.size
    n_out = max(1, int(round(n_in * target_sr / clip.sample_rate)))

    if method == "linear" or n_in < 2:
        positions = np.arange(n_out) * (clip.sample_rate / target_sr)
        out = np.interp(positions, np.arange(n_in), x)
        return AudioClip(out, target_sr)

    gcd = np.gcd(clip.sample_rate, target_sr)
    up = target_sr // gcd
    down = clip.sample_rate // gcd
    if up <= _MAX_POLYPHASE:
        out = _resample_polyphase(x, n_out, up, down)
    else:
        out = _resample_dense(x, n_out, clip.sample_rate, target_sr)
    return AudioClip(out, target_sr)


def _resample_polyphase(x: np.ndarray, n_out: int, up: int, down: int) -> np.ndarray:
    """Rational resampling: output k = p + up*m reuses the phase-p filter."""
    weights, anchors, half = _polyphase_table(up, down)
    taps = 2 * half
    padded = np.concatenate([
        np.full(half - 1, x[0]), x, np.full(half, x[-1]),
    ])
    out = np.empty(n_out)
    stride = padded.strides[0]
    for p in range(min(up, n_out)):
        count = (n_out - p + up - 1) // up
        # Output p + up*m sits at input position anchors[p] + frac_p + down*m,
        # so its tap window starts at padded index anchors[p] + down*m.
        view = np.lib.stride_tricks.as_strided(
            padded[anchors[p]:], shape=(count, taps),
            strides=(down * stride, stride), writeable=False,
        )
        out[p::up] = view @ weights[p]
    return out


def _resample_dense(x: np.ndarray, n_out: int, sr_in: int, sr_out: int) -> np.ndarray:
    """Irrational-ratio fallback: filter values interpolated from a dense table."""
    n_in = x.size
    step = sr_in / sr_out
    cutoff = min(1.0, sr_out / sr_in)
    half = int(np.ceil(SINC_HALF_WIDTH / cutoff))
    grid = np.linspace(-half, half, 2 * half * 256 + 1)
    table = _sinc_filter(grid, cutoff, half)
    offsets = np.arange(-half + 1, half + 1)
    out = np.empty(n_out)
    for start in range(0, n_out, _RESAMPLE_CHUNK):
        stop = min(start + _RESAMPLE_CHUNK, n_out)
        positions = np.arange(start, stop) * step
        anchor = np.floor(positions).astype(np.int64)
        delta = positions[:, None] - (anchor[:, None] + offsets[None, :])
        weights = np.interp(delta.ravel(), grid, table).reshape(delta.shape)
        weights /= weights.sum(axis=1, keepdims=True)
        gathered = x[np.clip(anchor[:, None] + offsets[None, :], 0, n_in - 1)]
        out[start:stop] = (weights * gathered).sum(axis=1)
    return out


def pre_emphasize(clip: AudioClip, coeff: float = PRE_EMPHASIS_COEFF) -> AudioClip:
    """High-pass tilt: y[0] = x[0], y[n] = x[n] - coeff * x[n-1]."""
    if len(clip) == 0:
        raise ValueError("empty input")
    if not 0.0 <= coeff < 1.0:
        raise ValueError(f"coeff must be in [0, 1), got {coeff}")
    x = clip.samples
    y = x.copy()
    y[1:] -= coeff * x[:-1]
    return AudioClip(y, clip.sample_rate)


def _hann_periodic(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, n_fft: int = N_FFT, hop: int = HOP_LENGTH,
         window: str = "hann") -> Spectrogram:
    """Centered magnitude STFT with reflect padding; frames = 1 + len // hop."""
    if len(clip) == 0:
        raise ValueError("empty input")
    if n_fft < 2 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError(f"n_fft must be a power of two >= 2, got {n_fft}")
    if not 0 < hop <= n_fft:
        raise ValueError(f"hop must satisfy 0 < hop <= n_fft, got {hop}")
    if window != "hann":
        raise ValueError(f"unsupported window {window!r}")

    x = clip.samples
    pad = n_fft // 2
    mode = "reflect" if x.size > pad else "constant"
    padded = np.pad(x, pad, mode=mode)
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop]
    win = _hann_periodic(n_fft)
    mags = np.abs(np.fft.rfft(frames * win, axis=1))
    return Spectrogram(magnitudes=mags, sample_rate=clip.sample_rate,
                       n_fft=n_fft, hop=hop)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   sr: int = ANALYSIS_SAMPLE_RATE, fmin: float = 0.0,
                   fmax: float | None = None) -> FilterBank:
    """Triangular mel filters, centers equally spaced in mels, area-normalized."""
    if fmax is None:
        fmax = sr / 2.0
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if fmax > sr / 2.0:
        raise ValueError(f"fmax {fmax} Hz is above Nyquist ({sr / 2.0} Hz)")
    if not 0.0 <= fmin < fmax:
        raise ValueError(f"need 0 <= fmin < fmax, got fmin={fmin}, fmax={fmax}")

    bin_hz = np.arange(1 + n_fft // 2) * (sr / n_fft)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower = edges[:-2][:, None]
    center = edges[1:-1][:, None]
    upper = edges[2:][:, None]
    rising = (bin_hz[None, :] - lower) / np.maximum(center - lower, 1e-12)
    falling = (upper - bin_hz[None, :]) / np.maximum(upper - center, 1e-12)
    weights = np.clip(np.minimum(rising, falling), 0.0, None)
    weights *= 2.0 / (upper - lower)

    empty = np.flatnonzero(~weights.any(axis=1))
    if empty.size:
        raise ValueError(
            f"filter {empty[0]} has no FFT bins; n_mels={n_mels} is too dense "
            f"for n_fft={n_fft} at sr={sr}"
        )
    return FilterBank(weights=weights, sample_rate=sr, n_fft=n_fft,
                      fmin=float(fmin), fmax=float(fmax))


def mel_spectrogram(spec: Spectrogram, fb: FilterBank) -> np.ndarray:
    """Apply a mel filterbank to the power spectrogram: [n_frames x n_mels]."""
    if fb.n_fft != spec.n_fft or fb.sample_rate != spec.sample_rate:
        raise ValueError(
            f"filterbank built for n_fft={fb.n_fft}, sr={fb.sample_rate}; "
            f"spectrogram has n_fft={spec.n_fft}, sr={spec.sample_rate}"
        )
    return spec.power() @ fb.weights.T


@lru_cache(maxsize=8)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix of size n x n (rows are basis vectors)."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    mat[0] *= 1.0 / np.sqrt(2.0)
    mat.setflags(write=False)
    return mat


def mfcc(mel_spec: np.ndarray, n_mfcc: int = N_MFCC) -> np.ndarray:
    """First n_mfcc orthonormal DCT-II coefficients of log(mel power + floor)."""
    mel_spec = np.asarray(mel_spec, dtype=np.float64)
    if mel_spec.ndim != 2:
        raise ValueError(f"mel_spec must be 2-D, got shape {mel_spec.shape}")
    n_mels = mel_spec.shape[1]
    if not 1 <= n_mfcc <= n_mels:
        raise ValueError(f"need 1 <= n_mfcc <= {n_mels}, got {n_mfcc}")
    log_mel = np.log(mel_spec + LOG_FLOOR)
    return log_mel @ dct_matrix(n_mels)[:n_mfcc].T


@lru_cache(maxsize=8)
def _chroma_map(sample_rate: int, n_fft: int) -> np.ndarray:
    """[12 x n_bins] indicator matrix: each bin -> nearest-semitone pitch class."""
    n_bins = 1 + n_fft // 2
    freqs = np.arange(n_bins) * (sample_rate / n_fft)
    mapping = np.zeros((N_CHROMA, n_bins))
    valid = freqs > 0
    midi = np.rint(_A440_MIDI + 12.0 * np.log2(freqs[valid] / _A440_HZ)).astype(np.int64)
    mapping[midi % N_CHROMA, np.flatnonzero(valid)] = 1.0
    mapping.setflags(write=False)
    return mapping


def chromagram(spec: Spectrogram, sr: int | None = None) -> np.ndarray:
    """Fold bin powers onto 12 pitch classes (C=0, A440 -> class 9), max-normalized."""
    if sr is not None and sr != spec.sample_rate:
        raise ValueError(f"sr {sr} disagrees with spectrogram rate {spec.sample_rate}")
    mapping = _chroma_map(spec.sample_rate, spec.n_fft)
    raw = spec.power() @ mapping.T
    peaks = raw.max(axis=1, keepdims=True)
    return raw / np.where(peaks > 0.0, peaks, 1.0)


def _contrast_band_edges(sr: int, n_bands: int, fmin: float) -> np.ndarray:
    """Band edges: [0, fmin, 2*fmin, ...], the last edge capped at Nyquist."""
    edges = [0.0] + [fmin * (2.0 ** i) for i in range(n_bands)]
    edges.append(min(fmin * (2.0 ** n_bands), sr / 2.0))
    return np.asarray(edges)


def spectral_contrast(spec: Spectrogram, sr: int | None = None,
                      n_bands: int = CONTRAST_BANDS,
                      alpha: float = CONTRAST_ALPHA) -> np.ndarray:
    """Per-band log peak-to-valley spread of bin powers: [n_frames x (n_bands+1)]."""
    if sr is not None and sr != spec.sample_rate:
        raise ValueError(f"sr {sr} disagrees with spectrogram rate {spec.sample_rate}")
    if n_bands < 1:
        raise ValueError(f"n_bands must be >= 1, got {n_bands}")
    if not 0.0 < alpha <= 0.5:
        raise ValueError(f"alpha must be in (0, 0.5], got {alpha}")

    freqs = spec.bin_frequencies()
    edges = _contrast_band_edges(spec.sample_rate, n_bands, CONTRAST_FMIN_HZ)
    power = spec.power()
    out = np.empty((spec.n_frames, n_bands + 1))
    for b in range(n_bands + 1):
        lo, hi = edges[b], edges[b + 1]
        if b == n_bands:
            cols = np.flatnonzero((freqs >= lo) & (freqs <= hi))
        else:
            cols = np.flatnonzero((freqs >= lo) & (freqs < hi))
        if cols.size == 0:
            raise ValueError(
                f"band {b} [{lo:.0f}, {hi:.0f}) Hz is empty at this n_fft/sr "
                f"(n_fft={spec.n_fft}, sr={spec.sample_rate})"
            )
        band = np.sort(power[:, cols], axis=1)
        take = max(1, int(np.ceil(alpha * cols.size)))
        valley = np.log(band[:, :take].mean(axis=1) + LOG_FLOOR)
        peak = np.log(band[:, -take:].mean(axis=1) + LOG_FLOOR)
        out[:, b] = peak - valley
    return out


def _tonnetz_basis() -> np.ndarray:
    """[6 x 12] tonal-centroid basis: fifths, minor-third, major-third circles."""
    pc = np.arange(N_CHROMA)
    angles = np.vstack([
        pc * (7.0 * np.pi / 6.0),
        pc * (3.0 * np.pi / 2.0),
        pc * (2.0 * np.pi / 3.0),
    ])
    radii = np.array([1.0, 1.0, 0.5])
    basis = np.empty((6, N_CHROMA))
    basis[0::2] = radii[:, None] * np.sin(angles)
    basis[1::2] = radii[:, None] * np.cos(angles)
    return basis


TONNETZ_BASIS = _tonnetz_basis()
TONNETZ_BASIS.setflags(write=False)


def tonnetz(chroma: np.ndarray) -> np.ndarray:
    """Project L1-normalized chroma onto the 6-D tonal-centroid basis."""
    chroma = np.asarray(chroma, dtype=np.float64)
    if chroma.ndim != 2 or chroma.shape[1] != N_CHROMA:
        raise ValueError(f"chroma must be [n_frames x 12], got shape {chroma.shape}")
    if (chroma < 0.0).any():
        raise ValueError("chroma values must be non-negative")
    totals = chroma.sum(axis=1, keepdims=True)
    normalized = chroma / np.where(totals > 0.0, totals, 1.0)
    return normalized @ TONNETZ_BASIS.T


@lru_cache(maxsize=4)
def _analysis_filterbank(sr: int) -> FilterBank:
    """Shared mel filterbank for the extraction pipeline."""
    return mel_filterbank(N_MELS, N_FFT, sr, 0.0, sr / 2.0)


def extract_features(clip: AudioClip) -> np.ndarray:
    """Full pipeline: resample, pre-emphasize, STFT, five feature blocks, time-mean."""
    if clip.sample_rate != ANALYSIS_SAMPLE_RATE:
        clip = resample(clip, ANALYSIS_SAMPLE_RATE)
    if len(clip) < N_FFT:
        raise ValueError(
            f"clip too short: {len(clip)} samples at {clip.sample_rate} Hz; "
            f"need at least {N_FFT}"
        )
    emphasized = pre_emphasize(clip, PRE_EMPHASIS_COEFF)
    spec = stft(emphasized, N_FFT, HOP_LENGTH)
    mel = mel_spectrogram(spec, _analysis_filterbank(ANALYSIS_SAMPLE_RATE))
    chroma = chromagram(spec)
    blocks = (
        mfcc(mel, N_MFCC),
        chroma,
        mel,
        spectral_contrast(spec),
        tonnetz(chroma),
    )
    return np.concatenate([block.mean(axis=0) for block in blocks])
