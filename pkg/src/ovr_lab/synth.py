"""Synthetic stand-ins for the recordings this pipeline normally consumes:
speech-like broadband signals, band-limiting in-ear responses and body noise.
Used by the tests, the acceptance suite and the demo pipeline."""

from __future__ import annotations

import numpy as np
from scipy.signal import firwin, lfilter, minimum_phase

from . import SAMPLE_RATE
from .audio_io import AudioBuffer


def _resonator(f, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    a = [1.0, -2 * r * np.cos(2 * np.pi * f / fs), r * r]
    return [1.0 - r], a


def speech_like(duration_s: float, rng: np.random.Generator, fs: int = SAMPLE_RATE,
                pause_s: tuple[float, float] = (0.05, 0.25)) -> AudioBuffer:
    """Syllable-like bursts: glottal-pulse-driven formant filtering for voiced
    parts, high-passed noise for fricatives, separated by short pauses."""
    n = int(duration_s * fs)
    out = np.zeros(n)
    pos = int(rng.uniform(0.05, 0.2) * fs)
    while pos < n:
        seg_len = int(rng.uniform(0.12, 0.35) * fs)
        end = min(n, pos + seg_len)
        m = end - pos
        t = np.arange(m) / fs
        if rng.random() < 0.75:
            f0 = rng.uniform(90, 220) * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(2, 5) * t))
            phase = np.cumsum(f0) / fs
            src = np.diff(np.floor(phase), prepend=0.0)  # one impulse per period
            src += 0.02 * rng.standard_normal(m)
            sig = src
            for f, bw in zip(rng.uniform([300, 900, 2200, 3300], [800, 2000, 3000, 4500]),
                             [80, 100, 150, 250]):
                b, a = _resonator(f, bw, fs)
                sig = sig + 0.6 * lfilter(b, a, src)
        else:
            src = rng.standard_normal(m)
            b = firwin(63, rng.uniform(2500, 4500), fs=fs, pass_zero=False)
            sig = lfilter(b, [1.0], src) * 0.3
        env = np.sin(np.pi * np.arange(m) / m) ** 0.7
        out[pos:end] += sig * env * rng.uniform(0.5, 1.0)
        pos = end + int(rng.uniform(*pause_s) * fs)
    peak = np.max(np.abs(out))
    return AudioBuffer(0.5 * out / peak if peak > 0 else out, fs)


def lowpass_reir(cutoff_hz: float = 2000.0, n_taps: int = 64, gain: float = 1.5,
                 min_phase: bool = True, fs: int = SAMPLE_RATE) -> np.ndarray:
    """Band-limiting relative impulse response of ``n_taps`` taps.

    The minimum-phase variant keeps the magnitude response of the windowed-sinc
    design but concentrates its energy at small lags, like a short acoustic path.
    """
    h = gain * firwin(n_taps, cutoff_hz, fs=fs)
    if min_phase:
        h = minimum_phase(np.convolve(h, h), method="homomorphic")[:n_taps]
    return h


def body_noise(duration_s: float, rng: np.random.Generator, fs: int = SAMPLE_RATE) -> AudioBuffer:
    """Low-frequency breathing-like noise with slow amplitude modulation plus
    periodic heartbeat thumps."""
    n = int(duration_s * fs)
    t = np.arange(n) / fs
    breath = lfilter(firwin(255, 600, fs=fs), [1.0], rng.standard_normal(n))
    breath *= 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.2, 0.4) * t) ** 2
    beats = np.zeros(n)
    period = int(fs * 60 / rng.uniform(60, 80))
    thump = np.sin(2 * np.pi * 40 * np.arange(int(0.08 * fs)) / fs) * np.hanning(int(0.08 * fs))
    for start in range(int(rng.integers(period)), n - thump.shape[0], period):
        beats[start:start + thump.shape[0]] += thump
    return AudioBuffer(breath + 0.5 * beats, fs)
