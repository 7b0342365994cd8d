"""Time plus phase-constrained magnitude (T-PCM) loss.

The loss mixes a time-domain mean absolute error with a spectral term that
compares the magnitudes of the real and imaginary STFT parts separately:

    loss = wt * mean|e - t| + wf * mean_{k,l} ( ||Re E|-|Re T|| + ||Im E|-|Im T|| ) / 2
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..dsp import StftConfig, frame_signal, get_window


@dataclass(frozen=True)
class TpcmConfig:
    time_weight: float = 0.5
    spectral_weight: float = 0.5
    stft: StftConfig = field(default_factory=lambda: StftConfig(256, 128, "sqrt_hann"))

    def __post_init__(self):
        if self.time_weight < 0 or self.spectral_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.time_weight + self.spectral_weight <= 0:
            raise ValueError("at least one loss weight must be positive")


@lru_cache(maxsize=8)
def _dft_mats(n: int, window: str):
    # windowed real/imag DFT matrices, (N, K) each
    w = get_window(window, n)
    k = np.arange(n // 2 + 1)
    ang = 2.0 * np.pi * np.outer(np.arange(n), k) / n
    return w[:, None] * np.cos(ang), -w[:, None] * np.sin(ang)


def tpcm_loss(estimate, target, cfg: TpcmConfig = TpcmConfig()):
    """Return ``(loss, d loss / d estimate)`` for a segment or a batch of segments."""
    est = np.asarray(estimate)
    tgt = np.asarray(target)
    if est.shape != tgt.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {tgt.shape}")
    loss = 0.0
    grad = np.zeros(est.shape, dtype=np.result_type(est.dtype, np.float32))

    if cfg.time_weight > 0:
        diff = est - tgt
        loss += cfg.time_weight * float(np.mean(np.abs(diff)))
        grad += cfg.time_weight * np.sign(diff) / diff.size

    if cfg.spectral_weight > 0:
        N, hop = cfg.stft.frame_len, cfg.stft.hop
        if est.shape[-1] < N:
            raise ValueError(f"segment shorter than the loss STFT frame ({N})")
        m_re, m_im = _dft_mats(N, cfg.stft.window)
        m_re = m_re.astype(grad.dtype)
        m_im = m_im.astype(grad.dtype)
        fe = frame_signal(est, N, hop)
        ft = frame_signal(tgt, N, hop)
        re_e, im_e = fe @ m_re, fe @ m_im
        re_t, im_t = ft @ m_re, ft @ m_im
        d_re = np.abs(re_e) - np.abs(re_t)
        d_im = np.abs(im_e) - np.abs(im_t)
        count = d_re.size
        loss += cfg.spectral_weight * float(np.sum(np.abs(d_re) + np.abs(d_im))) / (2 * count)
        scale = cfg.spectral_weight / (2 * count)
        g_re = scale * np.sign(d_re) * np.sign(re_e)
        g_im = scale * np.sign(d_im) * np.sign(im_e)
        g_frames = g_re @ m_re.T + g_im @ m_im.T
        n_frames = g_frames.shape[-2]
        for l in range(n_frames):
            grad[..., l * hop:l * hop + N] += g_frames[..., l, :]
    return loss, grad
