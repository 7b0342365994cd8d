import numpy as np
import pytest

from ovr_lab.audio_io import AudioBuffer
from ovr_lab.synth import lowpass_reir


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def white(n, seed=0):
    return AudioBuffer(np.random.default_rng(seed).standard_normal(n))


def minphase_lowpass(cutoff_hz=2000.0, gain=1.5):
    """64-tap minimum-phase lowpass."""
    return lowpass_reir(cutoff_hz, 64, gain, min_phase=True)


ACCEPTANCE_RESULTS: list[str] = []


@pytest.fixture
def record():
    """Report one acceptance criterion as a PASS/FAIL line, then assert it."""
    def _record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE_RESULTS.append(line)
        print(line)
        assert ok, line
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
