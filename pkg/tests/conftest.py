"""Shared fixtures and the acceptance-criteria summary hook."""
import contextlib

import numpy as np
import pytest

from edgesound.audio import AudioClip
from edgesound.bench import quick_model
from edgesound.classifier import save_model

# (criterion, status, detail) rows collected by the acceptance tests and
# printed as one line each after the run.
_CRITERIA = []


def record_criterion(name: str, status: str, detail: str = "") -> None:
    _CRITERIA.append((name, status, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in _CRITERIA:
        line = f"{name}: {status}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Context manager that records one PASS/FAIL line per criterion."""

    @contextlib.contextmanager
    def run(name):
        info = {}
        try:
            yield info
        except BaseException as exc:
            detail = info.get("detail") or str(exc).splitlines()[0][:200]
            record_criterion(name, "FAIL", detail)
            raise
        record_criterion(name, "PASS", info.get("detail", ""))

    return run


@pytest.fixture(scope="session")
def model():
    """Small synthetic-corpus model, good enough to exercise every pipeline."""
    return quick_model(clips_per_class=6, epochs=500, seed=0)


@pytest.fixture(scope="session")
def model_file(model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.bin"
    save_model(model, path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_tone(freq_hz: float, duration_s: float = 0.5, sr: int = 22050,
              amplitude: float = 0.8) -> AudioClip:
    """Pure sine test clip."""
    t = np.arange(int(round(duration_s * sr))) / sr
    return AudioClip(amplitude * np.sin(2.0 * np.pi * freq_hz * t), sr)


@pytest.fixture
def tone():
    return make_tone
