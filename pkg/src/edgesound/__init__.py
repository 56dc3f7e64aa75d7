"""Urban-sound classification testbed with configurable compute placement."""

from .audio import AudioClip, load_wav, save_wav
from .bench import (
    BenchScenario, FleetSpec, LatencyStats, PowerModel, ScoreCard,
    estimate_energy, load_scenario, run_benchmark, score_configs, simulate_fleet,
)
from .classifier import (
    CLASS_LABELS, LabeledDataset, MlpModel, TrainReport, classify, evaluate,
    forward, init_model, load_model, save_model, train,
)
from .device import (
    Configuration, DeviceRunReport, DeviceSession, NetworkProfile, SynthSource,
    WavSource, acquire_clip, run_pipeline,
)
from .dsp import (
    FEATURE_LENGTH, chromagram, extract_features, mel_filterbank,
    mel_spectrogram, mfcc, pre_emphasize, resample, spectral_contrast, stft,
    tonnetz,
)
from .protocol import Frame, FrameDecoder, MsgType, ProtocolError, decode_frame, encode_frame
from .server import ResultStore, SoundServer, handle_message
from .synth import synth_clip

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "BenchScenario", "CLASS_LABELS", "Configuration",
    "DeviceRunReport", "DeviceSession", "FEATURE_LENGTH", "FleetSpec", "Frame",
    "FrameDecoder", "LabeledDataset", "LatencyStats", "MlpModel", "MsgType",
    "NetworkProfile", "PowerModel", "ProtocolError", "ResultStore", "ScoreCard",
    "SoundServer", "SynthSource", "TrainReport", "WavSource", "acquire_clip",
    "chromagram", "classify", "decode_frame", "encode_frame", "estimate_energy",
    "evaluate", "extract_features", "forward", "handle_message", "init_model",
    "load_model", "load_scenario", "load_wav", "mel_filterbank",
    "mel_spectrogram", "mfcc", "pre_emphasize", "resample", "run_benchmark",
    "run_pipeline", "save_model", "save_wav", "score_configs", "simulate_fleet",
    "spectral_contrast", "stft", "synth_clip", "tonnetz", "train",
]
