"""WAV reading/writing and per-recording normalization."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import SAMPLE_RATE


class AudioFormatError(ValueError):
    pass


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample rate must be positive")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class NormalizationStats:
    mean: float
    std: float


def read_wav(path, channel: int = 0) -> AudioBuffer:
    """Read one channel of a PCM16 or float32 WAV file at 16 kHz.

    Integer PCM is scaled by 1/32768 so int16 maps onto [-1, 1).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        sr, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioFormatError(f"unsupported codec in {path}: {exc}") from exc
    if sr != SAMPLE_RATE:
        raise AudioFormatError(f"unsupported sample rate {sr} Hz in {path} (expected {SAMPLE_RATE})")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise AudioFormatError(f"unsupported sample format {data.dtype} in {path}")
    if x.ndim == 2:
        if not 0 <= channel < x.shape[1]:
            raise AudioFormatError(f"channel {channel} out of range for {x.shape[1]}-channel file")
        x = x[:, channel]
    elif channel != 0:
        raise AudioFormatError(f"channel {channel} requested from mono file")
    return AudioBuffer(x, sr)


def write_wav(path, buf: AudioBuffer, subtype: str = "float32") -> None:
    """Write a buffer as float32 (default) or PCM16 WAV."""
    if subtype == "float32":
        data = buf.samples.astype(np.float32)
    elif subtype == "pcm16":
        data = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, int(buf.sample_rate_hz), data)


def normalize_zscore(buf: AudioBuffer) -> tuple[AudioBuffer, NormalizationStats]:
    """Zero mean, unit (population) variance."""
    x = buf.samples
    if x.shape[0] < 2:
        raise ValueError("normalization needs at least 2 samples")
    mean = float(np.mean(x))
    std = float(np.std(x))
    if not std > 0.0:
        raise ValueError("degenerate signal: zero variance")
    return AudioBuffer((x - mean) / std, buf.sample_rate_hz), NormalizationStats(mean, std)


def denormalize(buf: AudioBuffer, stats: NormalizationStats) -> AudioBuffer:
    return AudioBuffer(buf.samples * stats.std + stats.mean, buf.sample_rate_hz)
