"""Walk one synthetic clip through the feature-extraction pipeline, block by block."""
import numpy as np

from edgesound.dsp import (
    HOP_LENGTH,
    N_FFT,
    chromagram,
    extract_features,
    mel_filterbank,
    mel_spectrogram,
    mfcc,
    spectral_contrast,
    stft,
    tonnetz,
)
from edgesound.synth import synth_clip, synth_label

CLASS_ID = 8  # siren
PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


def main() -> None:
    clip = synth_clip(CLASS_ID, duration_s=3.0, sr=22050, seed=7)
    print(f"clip: {synth_label(CLASS_ID)!r}, {len(clip)} samples "
          f"at {clip.sample_rate} Hz")

    spec = stft(clip, N_FFT, HOP_LENGTH)
    print(f"\nstft: {spec.n_frames} frames x {spec.magnitudes.shape[1]} bins "
          f"(n_fft {N_FFT}, hop {HOP_LENGTH})")

    fb = mel_filterbank(sr=clip.sample_rate)
    mel = mel_spectrogram(spec, fb)
    coefs = mfcc(mel)
    chroma = chromagram(spec)
    contrast = spectral_contrast(spec)
    centroids = tonnetz(chroma)
    for name, block in (("mfcc", coefs), ("chroma", chroma), ("mel", mel),
                        ("spectral contrast", contrast), ("tonnetz", centroids)):
        print(f"  {name:18s} {block.shape[0]} frames x {block.shape[1]}")

    strongest = PITCH_CLASSES[int(np.argmax(chroma.mean(axis=0)))]
    print(f"\nstrongest pitch class over time: {strongest}")

    vector = extract_features(clip)
    print(f"aggregate feature vector: {vector.shape[0]} values "
          f"(40 mfcc + 12 chroma + 128 mel + 7 contrast + 6 tonnetz)")
    print(f"first mfccs: {np.round(vector[:4], 3)}")


if __name__ == "__main__":
    main()
