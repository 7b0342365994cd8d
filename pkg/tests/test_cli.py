import json

import numpy as np
import pytest

from ovr_lab.audio_io import read_wav, write_wav
from ovr_lab.cli import dispatch
from ovr_lab.dsp import fir_convolve
from ovr_lab.manifest import pairs_manifest
from ovr_lab.synth import body_noise, lowpass_reir, speech_like


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    root = tmp_path_factory.mktemp("world")
    rng = np.random.default_rng(0)
    h = lowpass_reir(2000, 64, 1.5)
    for i in range(4):
        write_wav(root / "speech" / f"s{i}.wav", speech_like(2.5, rng))
    for i in range(2):
        write_wav(root / "noise" / f"n{i}.wav", body_noise(4.0, rng))
    outer = speech_like(6.0, rng)
    write_wav(root / "rec" / "outer.wav", outer)
    write_wav(root / "rec" / "inear.wav", fir_convolve(outer, h))
    return root


def run(*argv):
    return dispatch([str(a) for a in argv])


def test_estimate_rtf_and_simulate(world, tmp_path, capsys):
    bank = tmp_path / "bank"
    assert run("estimate-rtf", "--inear", world / "rec/inear.wav", "--outer", world / "rec/outer.wav",
               "--talker", "t07", "--mode", "s-rtf", "--out", bank) == 0
    doc = json.loads((bank / "bank.json").read_text())
    assert len(doc["entries"]) == 1 and doc["entries"][0]["talker_id"] == "t07"
    assert (bank / "run.json").exists()

    c1, c2 = tmp_path / "c1", tmp_path / "c2"
    for c in (c1, c2):
        assert run("--seed", 4, "simulate", "--speech", world / "speech", "--bank", bank,
                   "--noise", world / "noise", "--snr", "10:60", "--out", c) == 0
    assert (c1 / "manifest.json").read_bytes() == (c2 / "manifest.json").read_bytes()
    m = json.loads((c1 / "manifest.json").read_text())
    assert len(m["entries"]) == 4 and all(e["noise_id"] for e in m["entries"])

    clean = tmp_path / "clean"
    assert run("simulate", "--speech", world / "speech", "--bank", bank, "--out", clean) == 0
    m = json.loads((clean / "manifest.json").read_text())
    assert all(e["noise_id"] is None for e in m["entries"])

    # a noise-free corpus cannot feed an S+ run
    assert run("train", "--corpus", clean, "--strategy", "s+", "--max-epochs", 1,
               "--out", tmp_path / "m") == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ValueError:") and "\n" not in err


def test_refuses_overwrite(world, tmp_path, capsys):
    out = tmp_path / "bank"
    args = ("estimate-rtf", "--inear", world / "rec/inear.wav", "--outer", world / "rec/outer.wav",
            "--out", out)
    assert run(*args) == 0
    assert run(*args) == 2
    assert "--force" in capsys.readouterr().err
    assert run("--force", *args) == 0


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["simulate", "--speech", "x"],
    ["evaluate", "--pairs", "x", "--out", "y", "--nope"],
    ["simulate", "--speech", "x", "--bank", "y", "--snr", "ten", "--out", "z"],
    ["train", "--corpus", "c", "--strategy", "s+r", "--out", "m"],
])
def test_errors_are_single_line(argv, capsys):
    assert run(*argv) != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("error:") and "\n" not in err


def test_missing_input_file(tmp_path, capsys):
    assert run("evaluate", "--pairs", tmp_path / "none.json", "--out", tmp_path / "r.json") == 1
    assert capsys.readouterr().err.startswith("error: FileNotFoundError")


def test_evaluate_identical_pairs(world, tmp_path, capsys):
    pairs = [(str(world / "speech" / f"s{i}.wav"),) * 2 for i in range(3)]
    pairs_manifest(pairs).save(tmp_path / "pairs" / "manifest.json")
    assert run("evaluate", "--pairs", tmp_path / "pairs", "--out", tmp_path / "r.json") == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["means"]["lsd_db"] == 0.0
    assert (tmp_path / "r.txt").exists() and (tmp_path / "r.json.run.json").exists()
    assert "System" in capsys.readouterr().out


@pytest.mark.slow
def test_full_desk_pipeline(world, tmp_path):
    bank, corpus, model = tmp_path / "bank", tmp_path / "corpus", tmp_path / "model"
    assert run("estimate-rtf", "--inear", world / "rec/inear.wav", "--outer", world / "rec/outer.wav",
               "--out", bank) == 0
    assert run("simulate", "--speech", world / "speech", "--bank", bank, "--noise", world / "noise",
               "--out", corpus) == 0
    real = tmp_path / "real"
    pairs = []
    for i in range(3):
        s = read_wav(world / "speech" / f"s{i}.wav")
        write_wav(real / f"i{i}.wav", fir_convolve(s, lowpass_reir(1500, 64, 2.0)))
        pairs.append((f"i{i}.wav", str(world / "speech" / f"s{i}.wav")))
    pairs_manifest(pairs).save(real / "manifest.json")

    assert run("train", "--corpus", corpus, "--real", real, "--strategy", "s+r", "--preset", "desk",
               "--max-epochs", 1, "--batches-per-epoch", 1, "--batch-size", 2,
               "--val-max-segments", 4, "--dtype", "float32", "--out", model) == 0
    for name in ("params.npz", "model.json", "trainlog.jsonl", "trainlog_finetune.jsonl", "run.json"):
        assert (model / name).exists(), name
    prov = json.loads((model / "model.json").read_text())
    assert "S+R" in json.dumps(prov)

    out_wav = tmp_path / "rec.wav"
    assert run("reconstruct", "--model", model, "--in", world / "speech/s0.wav", "--out", out_wav) == 0
    assert len(read_wav(out_wav)) == len(read_wav(world / "speech/s0.wav"))

    assert run("evaluate", "--pairs", real, "--model", model, "--rtfs", "mRTF",
               "--out", tmp_path / "rep.json") == 0
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["data"] == "[S+R]" and rep["rtfs"] == "mRTF" and len(rep["per_utterance"]) == 3
