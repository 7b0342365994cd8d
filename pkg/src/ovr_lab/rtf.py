"""Utterance segmentation and relative transfer function estimation between
the outer and in-ear microphones, plus the ReIR bank on disk."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, read_wav, write_wav
from .dsp import StftConfig, stft, welch_cross_psd, welch_psd

RTF_STFT = StftConfig(frame_len=256, hop=128, window="hann")

VAD_FRAME_S = 0.020
VAD_HOP_S = 0.010
VAD_THRESHOLD_DB = -30.0
VAD_BRIDGE_S = 0.200
MRTF_MIN_S = 1.0
DEGENERATE_REL = 1e-12

BANK_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Utterance:
    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("utterance end must exceed start")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass
class RtfEstimate:
    response: np.ndarray
    source_talker: str = ""
    source_utterance: str = ""
    n_frames: int = 1
    degenerate: np.ndarray | None = None
    n_samples: int = 0

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=np.complex128)
        if self.degenerate is None:
            self.degenerate = np.zeros(self.response.shape[0], dtype=bool)


@dataclass
class ReIR:
    taps: np.ndarray
    talker_id: str = ""
    utterance_id: str = ""
    n_frames: int = 1
    degenerate_bins: list[int] = field(default_factory=list)

    @property
    def id(self) -> str:
        return f"{self.talker_id}_{self.utterance_id}"


def detect_utterances(buf: AudioBuffer, threshold_db: float = VAD_THRESHOLD_DB) -> list[Utterance]:
    """Energy VAD: 20 ms frames every 10 ms, active when the frame RMS is within
    ``threshold_db`` of the loudest frame. Gaps shorter than 200 ms are bridged."""
    x = buf.samples
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty recording")
    sr = buf.sample_rate_hz
    frame = int(round(VAD_FRAME_S * sr))
    hop = int(round(VAD_HOP_S * sr))
    n_frames = 1 + max(0, -(-(n - frame) // hop))
    padded = np.zeros((n_frames - 1) * hop + frame)
    padded[:n] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame)[::hop][:n_frames]
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    peak = rms.max()
    if peak <= 0.0:
        return []
    active = rms > peak * 10.0 ** (threshold_db / 20.0)

    runs = []
    idx = np.flatnonzero(active)
    start = prev = idx[0]
    for i in idx[1:]:
        if i != prev + 1:
            runs.append((start, prev))
            start = i
        prev = i
    runs.append((start, prev))

    bridge = int(round(VAD_BRIDGE_S * sr))
    merged = [list(runs[0])]
    for a, b in runs[1:]:
        gap = a * hop - (merged[-1][1] * hop + frame)
        if gap < bridge:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    return [Utterance(int(a * hop), int(min(n, b * hop + frame))) for a, b in merged]


def estimate_rtf(inear: AudioBuffer, outer: AudioBuffer, utt: Utterance,
                 talker: str = "", utterance_id: str = "",
                 cfg: StftConfig = RTF_STFT) -> RtfEstimate:
    """Cross-PSD over auto-PSD on the utterance span, H(k) = Phi_io(k) / Phi_o(k).

    Bins where Phi_o falls below 1e-12 of its maximum are zeroed and flagged.
    """
    if utt.end > len(inear) or utt.end > len(outer):
        raise ValueError("utterance exceeds recording length")
    if len(utt) < cfg.frame_len + cfg.hop:
        raise ValueError("utterance too short: need at least two STFT frames")
    seg_i = AudioBuffer(inear.samples[utt.start:utt.end], inear.sample_rate_hz)
    seg_o = AudioBuffer(outer.samples[utt.start:utt.end], outer.sample_rate_hz)
    spec_i = stft(seg_i, cfg)
    spec_o = stft(seg_o, cfg)
    phi_io = welch_cross_psd(spec_i, spec_o)
    phi_o = welch_psd(spec_o)
    if not phi_o.max() > 0.0:
        raise ValueError("outer signal is all-zero over the utterance")
    degenerate = phi_o < DEGENERATE_REL * phi_o.max()
    h = np.zeros_like(phi_io)
    ok = ~degenerate
    h[ok] = phi_io[ok] / phi_o[ok]
    return RtfEstimate(h, talker, utterance_id, spec_o.n_frames, degenerate, len(utt))


def rtf_to_reir(rtf: RtfEstimate) -> ReIR:
    """Inverse DFT of the conjugate-symmetric extension of the one-sided RTF."""
    h = rtf.response
    if not np.all(np.isfinite(h)):
        raise ValueError("RTF contains non-finite values")
    K = h.shape[0]
    N = 2 * (K - 1)
    full = np.empty(N, dtype=np.complex128)
    full[:K] = h
    full[K:] = np.conj(h[1:K - 1][::-1])
    taps = np.fft.ifft(full)
    energy = np.sum(np.abs(taps) ** 2)
    imag = np.sum(taps.imag ** 2)
    if energy > 0.0 and imag > 1e-8 * energy:
        raise ValueError(f"ReIR has residual imaginary energy {imag / energy:.3g} of total")
    return ReIR(taps.real.copy(), rtf.source_talker, rtf.source_utterance, rtf.n_frames,
                [int(k) for k in np.flatnonzero(rtf.degenerate)])


def select_rtfs(per_talker_estimates: dict[str, list[RtfEstimate]], mode: str = "sRTF",
                talkers: str = "all", talker_id: str | None = None,
                sample_rate_hz: int = 16000) -> list[ReIR]:
    """Build a ReIR bank.

    ``mode``: ``sRTF`` keeps the longest utterance per talker, ``mRTF`` keeps
    every utterance of at least one second. ``talkers``: ``single`` keeps one
    talker (``talker_id``, default the first in sorted order), ``all`` keeps all.
    """
    mode = _norm_mode(mode)
    if talkers not in ("single", "all"):
        raise ValueError(f"unknown talker scope {talkers!r}")
    ids = sorted(per_talker_estimates)
    if talkers == "single":
        chosen = talker_id if talker_id is not None else ids[0]
        if chosen not in per_talker_estimates:
            raise ValueError(f"unknown talker {chosen!r}")
        ids = [chosen]
    bank = []
    for tid in ids:
        estimates = per_talker_estimates[tid]
        if not estimates:
            raise ValueError(f"talker {tid!r} has no utterances")
        if mode == "sRTF":
            longest = max(estimates, key=lambda e: e.n_samples)
            bank.append(rtf_to_reir(longest))
        else:
            min_len = MRTF_MIN_S * sample_rate_hz
            bank.extend(rtf_to_reir(e) for e in estimates if e.n_samples >= min_len)
    if not bank:
        raise ValueError("no utterance of at least 1 s for the selected talkers")
    return bank


def _norm_mode(mode: str) -> str:
    key = mode.lower().replace("-", "")
    if key == "srtf":
        return "sRTF"
    if key == "mrtf":
        return "mRTF"
    raise ValueError(f"unknown RTF mode {mode!r}")


def estimate_talker_rtfs(inear: AudioBuffer, outer: AudioBuffer, talker: str,
                         cfg: StftConfig = RTF_STFT) -> list[RtfEstimate]:
    """VAD on the outer channel, then one RTF per usable utterance."""
    estimates = []
    for i, utt in enumerate(detect_utterances(outer)):
        if len(utt) < cfg.frame_len + cfg.hop:
            continue
        estimates.append(estimate_rtf(inear, outer, utt, talker, f"u{i:03d}", cfg))
    return estimates


def save_bank(bank: list[ReIR], out_dir, mode: str = "") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for reir in bank:
        rel = f"reir/{reir.id}.wav"
        write_wav(out_dir / rel, AudioBuffer(reir.taps))
        entries.append({
            "id": reir.id,
            "talker_id": reir.talker_id,
            "utterance_id": reir.utterance_id,
            "n_frames": reir.n_frames,
            "n_taps": int(reir.taps.shape[0]),
            "degenerate_bins": reir.degenerate_bins,
            "path": rel,
        })
    manifest = {"schema_version": BANK_SCHEMA_VERSION, "kind": "reir_bank", "mode": mode,
                "entries": entries}
    path = out_dir / "bank.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_bank(bank_dir) -> list[ReIR]:
    bank_dir = Path(bank_dir)
    manifest = json.loads((bank_dir / "bank.json").read_text())
    if manifest.get("schema_version") != BANK_SCHEMA_VERSION:
        raise ValueError(f"unsupported bank schema {manifest.get('schema_version')!r}")
    bank = []
    for e in manifest["entries"]:
        taps = read_wav(bank_dir / e["path"]).samples
        bank.append(ReIR(taps, e["talker_id"], e["utterance_id"], e["n_frames"],
                         list(e["degenerate_bins"])))
    return bank
