import json

import numpy as np
import pytest
from scipy import signal, stats

from ovr_lab.audio_io import AudioBuffer, read_wav, write_wav
from ovr_lab.dsp import fir_convolve
from ovr_lab.manifest import CorpusManifest, pairs_manifest
from ovr_lab.rtf import ReIR
from ovr_lab.simulate import (SimConfig, build_corpus, measure_snr_db, noise_segment,
                              simulate_inear, snr_scale)
from ovr_lab.synth import body_noise, speech_like

from conftest import minphase_lowpass, white


def unit_reir(tid="t00", uid="u000"):
    taps = np.zeros(256)
    taps[0] = 1.0
    return ReIR(taps, tid, uid)


def test_snr_scale_closed_forms():
    s = AudioBuffer(np.ones(100))
    v = AudioBuffer(-np.ones(100))
    assert snr_scale(s, v, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert snr_scale(s, v, 20.0) == pytest.approx(0.1, rel=1e-14)
    with pytest.raises(ValueError, match="silent noise"):
        snr_scale(s, AudioBuffer(np.zeros(100)), 10.0)
    with pytest.raises(ValueError, match="silent speech"):
        snr_scale(AudioBuffer(np.zeros(100)), v, 10.0)


def test_noise_segment_wraps():
    n = AudioBuffer(np.arange(5.0))
    np.testing.assert_array_equal(noise_segment(n, 7, 3).samples, [3, 4, 0, 1, 2, 3, 4])


def test_simulate_identity_and_silent_speech():
    clean = white(2000, 1)
    out = simulate_inear(clean, unit_reir())
    np.testing.assert_array_equal(out.samples, clean.samples)
    with pytest.raises(ValueError, match="silent speech"):
        simulate_inear(AudioBuffer(np.zeros(2000)), unit_reir(), white(3000, 2), 20.0)


def test_simulate_measured_snr(rng):
    clean = white(16000, 3)
    reir = ReIR(np.pad(minphase_lowpass(), (0, 192)))
    noise = white(5000, 4)
    for target in (10.0, 33.3, 60.0):
        y = simulate_inear(clean, reir, noise, target, noise_offset=123)
        speech = fir_convolve(clean, reir.taps).samples
        assert measure_snr_db(speech, y.samples - speech) == pytest.approx(target, abs=1e-6)


def test_simulate_lowpass_rolloff():
    clean = white(10 * 16000, 5)
    h = minphase_lowpass()
    reir = ReIR(np.pad(h, (0, 192)))
    noise = white(10 * 16000, 6)
    y = simulate_inear(clean, reir, noise, 60.0)
    # independent long-frame Welch estimate keeps leakage out of the transition band
    _, p_y = signal.welch(y.samples, nperseg=2048)
    _, p_x = signal.welch(clean.samples, nperseg=2048)
    ratio = p_y / p_x
    H2 = np.abs(np.fft.rfft(h, 2048)) ** 2
    band = 10 * np.log10(H2 / H2.max()) > -40
    assert np.max(np.abs(10 * np.log10(ratio[band] / H2[band]))) < 1.0
    speech = fir_convolve(clean, h).samples
    assert measure_snr_db(speech, y.samples - speech) == pytest.approx(60.0, abs=1e-6)


@pytest.fixture
def speech_dir(tmp_path):
    rng = np.random.default_rng(0)
    d = tmp_path / "speech"
    for i in range(10):
        write_wav(d / f"s{i:02d}.wav", speech_like(0.6, rng))
    return d


def test_build_corpus_deterministic(speech_dir, tmp_path):
    rng = np.random.default_rng(1)
    noise = [("n0", body_noise(2.0, rng)), ("n1", body_noise(0.3, rng))]
    bank = [unit_reir("t00", "u0"), ReIR(np.pad(minphase_lowpass(), (0, 192)), "t01", "u3")]
    cfg = SimConfig(bank, "14T", "mRTF", noise, (10, 60), seed=42)
    a = build_corpus(speech_dir, cfg, tmp_path / "a")
    b = build_corpus(speech_dir, cfg, tmp_path / "b")
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    for e in a.entries:
        assert (tmp_path / "a" / e["simulated_path"]).read_bytes() == \
               (tmp_path / "b" / e["simulated_path"]).read_bytes()
    assert sorted(e["split"] for e in a.entries).count("val") == 1
    assert {e["noise_id"] for e in a.entries} <= {"n0", "n1"}


def test_build_corpus_noise_free_is_pure_convolution(speech_dir, tmp_path):
    reir = ReIR(np.pad(minphase_lowpass(), (0, 192)), "t00", "u0")
    m = build_corpus(speech_dir, SimConfig([reir], "1T", "sRTF", None, seed=3), tmp_path / "c")
    assert not m.has_noise
    for e in m.entries:
        clean = read_wav(e["clean_path"])
        sim = read_wav(m.resolve(e["simulated_path"]))
        expected = fir_convolve(clean, read_wav_taps(reir)).samples.astype(np.float32)
        np.testing.assert_array_equal(sim.samples, expected.astype(np.float64))


def read_wav_taps(reir):
    return reir.taps


def test_build_corpus_single_talker_scope(speech_dir, tmp_path):
    bank = [unit_reir("t00", "u0"), unit_reir("t01", "u0"), unit_reir("t01", "u1")]
    m = build_corpus(speech_dir, SimConfig(bank, "1T", "sRTF", None, seed=0), tmp_path / "d")
    assert {e["reir_id"] for e in m.entries} == {"t00_u0"}
    m = build_corpus(speech_dir, SimConfig(bank, "1T", "mRTF", None, seed=0, talker_id="t01"),
                     tmp_path / "e")
    assert {e["talker_id"] for e in m.entries} == {"t01"}


def test_build_corpus_errors(tmp_path, speech_dir):
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError):
        build_corpus(tmp_path / "empty", SimConfig([unit_reir()]), tmp_path / "o")
    with pytest.raises(ValueError):
        build_corpus(speech_dir, SimConfig([]), tmp_path / "o2")
    with pytest.raises(ValueError):
        SimConfig([unit_reir()], snr_range_db=(30, 10))


def test_snr_draws_uniform(tmp_path):
    rng = np.random.default_rng(5)
    d = tmp_path / "sp"
    for i in range(100):
        write_wav(d / f"s{i:03d}.wav", AudioBuffer(rng.standard_normal(400)))
    cfg = SimConfig([unit_reir()], "1T", "sRTF", [("n", white(1000, 9))], (10, 60), seed=7)
    m = build_corpus(d, cfg, tmp_path / "o")
    snrs = np.array([e["snr_db"] for e in m.entries])
    assert stats.kstest((snrs - 10) / 50, "uniform").pvalue > 0.01
    # every materialized mixture hits its drawn SNR (checked in double precision)
    noise = white(1000, 9)
    for e in m.entries[:10]:
        clean = read_wav(e["clean_path"])
        y = simulate_inear(clean, unit_reir(), noise, e["snr_db"], e["noise_offset"])
        assert measure_snr_db(clean.samples, y.samples - clean.samples) == pytest.approx(e["snr_db"], abs=1e-6)
        # the float32 file carries quantization noise on top of the body noise
        stored = read_wav(m.resolve(e["simulated_path"])).samples
        assert measure_snr_db(clean.samples, stored - clean.samples) == pytest.approx(e["snr_db"], abs=0.01)


def test_manifest_roundtrip_and_pairs(tmp_path):
    write_wav(tmp_path / "i.wav", white(500, 1))
    write_wav(tmp_path / "o.wav", white(400, 2))
    m = pairs_manifest([("i.wav", "o.wav")] * 4, seed=0, channel_tags=["left"] * 3 + ["right"],
                       test_tag="right")
    m.save(tmp_path / "pairs.json")
    loaded = CorpusManifest.load(tmp_path / "pairs.json")
    assert loaded.kind == "pairs"
    assert [e["split"] for e in loaded.entries].count("test") == 1
    assert loaded.entries[3]["split"] == "test"
    x, y = loaded.load_pair(loaded.entries[0])
    assert len(x) == len(y) == 400
    assert json.loads((tmp_path / "pairs.json").read_text())["schema_version"] == 1
