"""Windows, framing, STFT, WOLA analysis/synthesis, Welch PSDs and FIR filtering.

Two Hann flavours are used: the symmetric one (``np.hanning``) for spectral
analysis and the periodic square-root one for WOLA, where the squared window
must overlap-add to exactly one at 50% overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .audio_io import AudioBuffer

FFT_CONV_MIN_TAPS = 128


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def get_window(name: str, n: int) -> np.ndarray:
    if name == "hann":
        return np.hanning(n)
    if name == "hann_periodic":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    if name == "sqrt_hann":
        return np.sqrt(get_window("hann_periodic", n))
    raise ValueError(f"unknown window {name!r}")


@dataclass(frozen=True)
class WolaConfig:
    segment_len: int = 2048
    hop: int | None = None
    window: str = "sqrt_hann"

    def __post_init__(self):
        if not _is_pow2(self.segment_len) or self.segment_len < 2:
            raise ValueError("segment_len must be a power of two")
        if self.hop is None:
            object.__setattr__(self, "hop", self.segment_len // 2)
        if self.hop != self.segment_len // 2:
            raise ValueError("WOLA hop must be half the segment length")
        if self.window != "sqrt_hann":
            raise ValueError("WOLA uses the square-root Hann window")

    def window_values(self) -> np.ndarray:
        return get_window(self.window, self.segment_len)


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 256
    hop: int | None = None
    window: str = "hann"

    def __post_init__(self):
        if not _is_pow2(self.frame_len) or self.frame_len < 2:
            raise ValueError("frame_len must be a power of two")
        if self.hop is None:
            object.__setattr__(self, "hop", self.frame_len // 2)
        if self.hop <= 0:
            raise ValueError("hop must be positive")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    def window_values(self) -> np.ndarray:
        return get_window(self.window, self.frame_len)


@dataclass
class Spectrogram:
    bins: np.ndarray  # (K, L) complex
    config: StftConfig = field(default_factory=StftConfig)

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """View of the full frames of ``x`` along its last axis: (..., L, frame_len)."""
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len, axis=-1)
    return frames[..., ::hop, :]


def segment_wola(buf: AudioBuffer, cfg: WolaConfig = WolaConfig()) -> np.ndarray:
    """Split into 50%-overlapping sqrt-Hann windowed segments, shape (L, P).

    Segment ``l`` starts at ``l * P/2``; the tail is zero-padded so every
    sample is covered.
    """
    x = buf.samples
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot segment an empty buffer")
    P, hop = cfg.segment_len, cfg.hop
    n_seg = -(-n // hop)
    padded = np.zeros((n_seg + 1) * hop)
    padded[:n] = x
    return frame_signal(padded, P, hop)[:n_seg] * cfg.window_values()


def overlap_add(segments, cfg: WolaConfig = WolaConfig(), length: int | None = None,
                sample_rate_hz: int = 16000) -> AudioBuffer:
    """Apply the synthesis window and overlap-add at 50%."""
    segments = np.asarray(segments)
    if segments.ndim != 2 or segments.shape[1] != cfg.segment_len:
        raise ValueError(f"segments must have shape (L, {cfg.segment_len})")
    hop = cfg.hop
    n_seg = segments.shape[0]
    out = np.zeros((n_seg + 1) * hop)
    weighted = segments * cfg.window_values()
    blocks = out.reshape(n_seg + 1, hop)
    blocks[:-1] += weighted[:, :hop]
    blocks[1:] += weighted[:, hop:]
    if length is not None:
        out = out[:length]
    return AudioBuffer(out, sample_rate_hz)


def stft(buf: AudioBuffer, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """One-sided STFT; frame ``l`` covers samples [l*hop, l*hop + N)."""
    x = buf.samples
    if x.shape[0] < cfg.frame_len:
        raise ValueError(f"buffer shorter than one frame ({x.shape[0]} < {cfg.frame_len})")
    frames = frame_signal(x, cfg.frame_len, cfg.hop) * cfg.window_values()
    return Spectrogram(np.fft.rfft(frames, axis=-1).T, cfg)


def istft(spec: Spectrogram, length: int | None = None, sample_rate_hz: int = 16000) -> AudioBuffer:
    """Windowed overlap-add inverse, normalized by the summed squared window."""
    cfg = spec.config
    N, hop = cfg.frame_len, cfg.hop
    w = cfg.window_values()
    frames = np.fft.irfft(spec.bins.T, n=N, axis=-1) * w
    L = frames.shape[0]
    n = (L - 1) * hop + N
    out = np.zeros(n)
    norm = np.zeros(n)
    for l in range(L):
        out[l * hop: l * hop + N] += frames[l]
        norm[l * hop: l * hop + N] += w * w
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    if length is not None:
        out = out[:length]
    return AudioBuffer(out, sample_rate_hz)


def welch_psd(spec: Spectrogram) -> np.ndarray:
    """Average periodogram over frames: (1/L) sum_l |S(k,l)|^2."""
    return np.mean(np.abs(spec.bins) ** 2, axis=1)


def welch_cross_psd(spec_a: Spectrogram, spec_b: Spectrogram) -> np.ndarray:
    """Cross-PSD (1/L) sum_l A(k,l) conj(B(k,l))."""
    if spec_a.bins.shape != spec_b.bins.shape or spec_a.config != spec_b.config:
        raise ValueError("cross-PSD needs spectrograms of identical shape and config")
    return np.mean(spec_a.bins * np.conj(spec_b.bins), axis=1)


def fir_convolve(signal: AudioBuffer, h) -> AudioBuffer:
    """Causal FIR filtering, y[n] = sum_m h[m] x[n-m], truncated to len(x)."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.shape[0] == 0:
        raise ValueError("impulse response must be a non-empty vector")
    x = signal.samples
    n = x.shape[0]
    nz = np.flatnonzero(h)
    h = h[: nz[-1] + 1] if nz.size else h[:1]
    if h.shape[0] > FFT_CONV_MIN_TAPS:
        y = fftconvolve(x, h)[:n]
    else:
        y = np.convolve(x, h)[:n]
    return AudioBuffer(y, signal.sample_rate_hz)
