import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ovr_lab.audio_io import AudioBuffer
from ovr_lab.dsp import (Spectrogram, StftConfig, WolaConfig, fir_convolve, get_window, istft,
                         overlap_add, segment_wola, stft, welch_cross_psd, welch_psd)

from conftest import white


def test_wola_config_rules():
    assert WolaConfig(2048).hop == 1024
    with pytest.raises(ValueError):
        WolaConfig(2048, hop=512)
    with pytest.raises(ValueError):
        WolaConfig(1000)


def test_cola_sqrt_hann():
    for P in (8, 256, 2048):
        w2 = get_window("sqrt_hann", P) ** 2
        total = w2[: P // 2] + w2[P // 2:]
        np.testing.assert_allclose(total, 1.0, atol=1e-12)


def test_segment_constant_signal():
    segs = segment_wola(AudioBuffer(np.ones(32)), WolaConfig(8))
    np.testing.assert_array_equal(segs[0], get_window("sqrt_hann", 8))


def test_segment_count_and_padding():
    x = np.arange(1, 2049, dtype=float)
    segs = segment_wola(AudioBuffer(x), WolaConfig(2048))
    assert segs.shape == (2, 2048)
    w = get_window("sqrt_hann", 2048)
    np.testing.assert_array_equal(segs[1][:1024], x[1024:] * w[:1024])
    np.testing.assert_array_equal(segs[1][1024:], 0.0)
    # segment l starts at l * P/2
    x = np.arange(5000, dtype=float)
    segs = segment_wola(AudioBuffer(x), WolaConfig(2048))
    assert segs.shape[0] == -(-5000 // 1024)
    np.testing.assert_allclose(segs[2] / np.where(w > 0, w, 1)[None], np.where(w > 0, x[2048:4096], 0)[None])


def test_segment_empty():
    with pytest.raises(ValueError):
        segment_wola(AudioBuffer(np.zeros(0)), WolaConfig(8))


def test_overlap_add_zero_and_bad_shape():
    out = overlap_add(np.zeros((1, 8)), WolaConfig(8))
    np.testing.assert_array_equal(out.samples, 0.0)
    with pytest.raises(ValueError):
        overlap_add(np.zeros((2, 6)), WolaConfig(8))


@pytest.mark.parametrize("signal", ["noise", "sine"])
def test_wola_identity_interior(signal):
    n = 3 * 16000
    if signal == "noise":
        x = white(n, 3).samples
    else:
        x = np.sin(2 * np.pi * 1000 * np.arange(n) / 16000)
    cfg = WolaConfig(2048)
    y = overlap_add(segment_wola(AudioBuffer(x), cfg), cfg, length=n).samples
    interior = slice(cfg.hop, n)
    err = np.max(np.abs(y[interior] - x[interior]))
    assert err < 1e-10 * np.max(np.abs(x))


def test_stft_dc_bin():
    spec = stft(AudioBuffer(np.ones(1024)), StftConfig(256, 128, "hann"))
    assert spec.bins.shape == (129, 7)
    np.testing.assert_allclose(np.abs(spec.bins[0]), 127.5, atol=1e-9)
    # bin 1 is the Hann main lobe; beyond it the symmetric window leaks < 0.2%
    assert np.max(np.abs(spec.bins[2:])) < 2e-3 * 127.5


def test_stft_zero_and_short():
    spec = stft(AudioBuffer(np.zeros(512)))
    assert not np.any(spec.bins)
    with pytest.raises(ValueError):
        stft(AudioBuffer(np.zeros(100)))


def test_stft_tone_leakage():
    k0 = 20
    x = np.cos(2 * np.pi * k0 * np.arange(2048) / 256)
    mag = np.abs(stft(AudioBuffer(x)).bins)
    # symmetric Hann (N-1 periodicity) leaks into k0 +- 1 and, faintly, beyond
    main = mag[k0 - 1:k0 + 2].sum(axis=0)
    assert np.all(main > 0.99 * mag.sum(axis=0) - 1e-9) or np.all(main / mag.sum(axis=0) > 0.99)
    assert np.all(np.argmax(mag, axis=0) == k0)
    # analytic value of the windowed DFT at the tone bin
    w = np.hanning(256)
    expected = np.abs(np.sum(w * np.cos(2 * np.pi * k0 * np.arange(256) / 256) *
                             np.exp(-2j * np.pi * k0 * np.arange(256) / 256)))
    np.testing.assert_allclose(mag[k0], expected, rtol=1e-12)


def test_parseval_per_frame():
    x = white(4096, 5)
    cfg = StftConfig(256, 128, "hann")
    spec = stft(x, cfg)
    frames = np.lib.stride_tricks.sliding_window_view(x.samples, 256)[::128] * cfg.window_values()
    full = np.abs(np.fft.fft(frames, axis=1)) ** 2
    # rebuild two-sided energy from the one-sided spectrum
    one = np.abs(spec.bins.T) ** 2
    two_sided = one[:, 0] + one[:, -1] + 2 * one[:, 1:-1].sum(axis=1)
    np.testing.assert_allclose(two_sided, full.sum(axis=1), rtol=1e-12)
    np.testing.assert_allclose(np.sum(frames ** 2, axis=1), two_sided / 256, rtol=1e-10)


def test_stft_istft_roundtrip():
    x = white(8000, 6)
    cfg = StftConfig(256, 128, "sqrt_hann")
    y = istft(stft(x, cfg), length=8000).samples
    n_cover = (1 + (8000 - 256) // 128 - 1) * 128 + 256
    sl = slice(128, n_cover - 128)
    np.testing.assert_allclose(y[sl], x.samples[sl], atol=1e-10 * np.max(np.abs(x.samples)))


def test_welch_psd_properties():
    x = white(4096, 1)
    spec = stft(x)
    one = Spectrogram(spec.bins[:, :1], spec.config)
    np.testing.assert_array_equal(welch_psd(one), np.abs(spec.bins[:, 0]) ** 2)
    scaled = Spectrogram(3.0 * spec.bins, spec.config)
    np.testing.assert_allclose(welch_psd(scaled), 9.0 * welch_psd(spec), rtol=1e-12)
    assert np.all(welch_psd(spec) >= 0)


def test_welch_psd_white_noise_flat():
    x = white(128 * 600 + 256, 7)
    spec = stft(x)
    assert spec.n_frames >= 500
    psd = welch_psd(spec)
    expected = np.sum(np.hanning(256) ** 2)  # unit-variance white noise
    inner = psd[1:-1]
    assert np.all(np.abs(inner / expected - 1) < 0.2)


def test_cross_psd_algebra():
    spec = stft(white(4096, 2))
    auto = welch_cross_psd(spec, spec)
    np.testing.assert_allclose(auto.real, welch_psd(spec), rtol=1e-12)
    assert np.max(np.abs(auto.imag)) <= 1e-12 * np.max(auto.real)
    jb = Spectrogram(1j * spec.bins, spec.config)
    np.testing.assert_allclose(welch_cross_psd(spec, jb), -1j * welch_psd(spec), rtol=1e-12)
    with pytest.raises(ValueError):
        welch_cross_psd(spec, Spectrogram(spec.bins[:, :3], spec.config))


def test_cross_psd_filter_identification():
    from conftest import minphase_lowpass
    h = minphase_lowpass()
    x = white(16000 * 10, 8)
    y = fir_convolve(x, h)
    sx, sy = stft(x), stft(y)
    H_est = welch_cross_psd(sy, sx) / welch_psd(sx)
    H = np.fft.rfft(h, 256)
    band = np.abs(H) > 0.5 * np.abs(H).max()
    np.testing.assert_allclose(np.abs(H_est[band]), np.abs(H[band]), rtol=0.05)


def test_fir_examples():
    x = white(300, 4)
    np.testing.assert_array_equal(fir_convolve(x, [1.0]).samples, x.samples)
    y = fir_convolve(x, [0.0, 1.0]).samples
    assert y[0] == 0.0
    np.testing.assert_array_equal(y[1:], x.samples[:-1])
    with pytest.raises(ValueError):
        fir_convolve(x, [])


def _naive_conv(x, h):
    y = np.zeros_like(x)
    for n in range(x.shape[0]):
        for m in range(h.shape[0]):
            if 0 <= n - m < x.shape[0]:
                y[n] += h[m] * x[n - m]
    return y


@pytest.mark.parametrize("taps", [64, 200])
def test_fir_matches_naive(taps, rng):
    x = rng.standard_normal(700)
    h = rng.standard_normal(taps)
    y = fir_convolve(AudioBuffer(x), h).samples
    assert np.max(np.abs(y - _naive_conv(x, h))) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_fir_linearity(a, b, taps, seed):
    r = np.random.default_rng(seed)
    x, y, h = r.standard_normal(1000), r.standard_normal(1000), r.standard_normal(taps)
    lhs = fir_convolve(AudioBuffer(a * x + b * y), h).samples
    rhs = a * fir_convolve(AudioBuffer(x), h).samples + b * fir_convolve(AudioBuffer(y), h).samples
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(lhs)))
