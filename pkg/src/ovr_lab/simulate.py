"""Simulated in-ear corpora: clean speech convolved with a ReIR plus body
noise scaled to a drawn SNR."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, read_wav, write_wav
from .dsp import fir_convolve
from .manifest import CorpusManifest, assign_splits
from .rtf import ReIR


@dataclass
class SimConfig:
    reir_bank: list[ReIR]
    talker_scope: str = "14T"
    rtf_mode: str = "mRTF"
    noise: list[tuple[str, AudioBuffer]] | None = None
    snr_range_db: tuple[float, float] = (10.0, 60.0)
    seed: int = 0
    talker_id: str | None = None
    jobs: int = 1
    bank_ref: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.snr_range_db
        if lo > hi:
            raise ValueError("SNR range must satisfy low <= high")
        if self.talker_scope not in ("1T", "14T"):
            raise ValueError(f"talker scope must be 1T or 14T, got {self.talker_scope!r}")

    @property
    def condition(self) -> str:
        return "S+" if self.noise else "S"


def mean_power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def snr_scale(speech: AudioBuffer, noise: AudioBuffer, target_snr_db: float) -> float:
    """Noise gain giving ``target_snr_db`` between the speech and the scaled noise."""
    p_s = mean_power(speech.samples)
    p_v = mean_power(noise.samples)
    if p_s <= 0.0:
        raise ValueError("silent speech: SNR undefined")
    if p_v <= 0.0:
        raise ValueError("silent noise: SNR undefined")
    return float(np.sqrt(p_s / (p_v * 10.0 ** (target_snr_db / 10.0))))


def measure_snr_db(speech: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * np.log10(mean_power(speech) / mean_power(noise))


def noise_segment(noise: AudioBuffer, length: int, offset: int = 0) -> AudioBuffer:
    """``length`` samples of noise from ``offset``, wrapping around circularly."""
    n = len(noise)
    idx = (offset + np.arange(length)) % n
    return AudioBuffer(noise.samples[idx], noise.sample_rate_hz)


def simulate_inear(clean: AudioBuffer, reir: ReIR, noise: AudioBuffer | None = None,
                   snr_db: float | None = None, noise_offset: int = 0) -> AudioBuffer:
    """ReIR-filtered clean speech plus (optionally) body noise at ``snr_db``."""
    speech = fir_convolve(clean, reir.taps)
    if noise is None:
        return speech
    if snr_db is None:
        raise ValueError("snr_db required when noise is given")
    seg = noise_segment(noise, len(clean), noise_offset)
    alpha = snr_scale(speech, seg, snr_db)
    return AudioBuffer(speech.samples + alpha * seg.samples, clean.sample_rate_hz)


def scope_bank(cfg: SimConfig) -> list[ReIR]:
    bank = cfg.reir_bank
    if not bank:
        raise ValueError("empty ReIR bank")
    if cfg.talker_scope == "1T":
        tid = cfg.talker_id if cfg.talker_id is not None else sorted({r.talker_id for r in bank})[0]
        bank = [r for r in bank if r.talker_id == tid]
        if not bank:
            raise ValueError(f"no ReIR for talker {tid!r}")
    return bank


def list_wavs(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".wav")


def build_corpus(speech_dir, cfg: SimConfig, out_dir) -> CorpusManifest:
    """Simulate one in-ear file per clean utterance and write ``manifest.json``.

    All random draws (ReIR, noise file, noise offset, SNR, split) are made
    sequentially from ``cfg.seed`` before any file is written.
    """
    speech_files = list_wavs(speech_dir)
    if not speech_files:
        raise ValueError(f"no WAV files in {speech_dir}")
    bank = scope_bank(cfg)
    out_dir = Path(out_dir)
    rng = np.random.default_rng(cfg.seed)

    plans = []
    for i, path in enumerate(speech_files):
        clean_len = len(read_wav(path))
        reir = bank[int(rng.integers(len(bank)))]
        entry = {"id": f"e{i:05d}", "clean_path": str(path.resolve()),
                 "simulated_path": f"audio/e{i:05d}.wav", "reir_id": reir.id,
                 "talker_id": reir.talker_id, "noise_id": None, "noise_offset": None,
                 "snr_db": None}
        if cfg.noise:
            nid, nbuf = cfg.noise[int(rng.integers(len(cfg.noise)))]
            span = len(nbuf) - clean_len + 1 if len(nbuf) >= clean_len else len(nbuf)
            entry["noise_id"] = nid
            entry["noise_offset"] = int(rng.integers(span))
            entry["snr_db"] = float(rng.uniform(*cfg.snr_range_db))
        plans.append((entry, path, reir))
    for (entry, _, _), lab in zip(plans, assign_splits(len(plans), rng)):
        entry["split"] = lab

    noise_by_id = dict(cfg.noise or [])

    def materialize(plan):
        entry, path, reir = plan
        noise = noise_by_id.get(entry["noise_id"]) if entry["noise_id"] is not None else None
        y = simulate_inear(read_wav(path), reir, noise, entry["snr_db"], entry["noise_offset"] or 0)
        write_wav(out_dir / entry["simulated_path"], y)

    with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        list(pool.map(materialize, plans))

    config = {"talker_scope": cfg.talker_scope, "rtf_mode": cfg.rtf_mode,
              "condition": cfg.condition, "snr_range_db": list(cfg.snr_range_db),
              "noise_ids": [nid for nid, _ in cfg.noise or []], "bank": cfg.bank_ref,
              "bank_ids": [r.id for r in bank], **cfg.extra}
    manifest = CorpusManifest([p[0] for p in plans], kind="corpus", seed=cfg.seed, config=config)
    manifest.save(out_dir / "manifest.json")
    return manifest
