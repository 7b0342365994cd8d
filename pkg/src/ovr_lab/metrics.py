"""Objective evaluation: log-spectral distance and STOI, and per-corpus reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import firwin, kaiser_beta, resample_poly

from .audio_io import AudioBuffer
from .dsp import StftConfig, stft
from .manifest import CorpusManifest

LSD_FRAME = 2048
LSD_EPS = 1e-10
EVAL_MAX_S = 10.0
REPORT_SCHEMA_VERSION = 1

# STOI constants (Taal et al. 2011)
STOI_FS = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEG = 30
STOI_BETA_DB = -15.0
STOI_DYN_RANGE_DB = 40.0
_EPS = np.finfo(np.float64).eps


def _check_pair(reference: AudioBuffer, estimate: AudioBuffer) -> None:
    if len(reference) != len(estimate):
        raise ValueError(f"length mismatch: {len(reference)} vs {len(estimate)}")
    if reference.sample_rate_hz != estimate.sample_rate_hz:
        raise ValueError("sample rate mismatch")


def lsd(reference: AudioBuffer, estimate: AudioBuffer, frame_len: int = LSD_FRAME,
        eps: float = LSD_EPS, db_factor: float = 20.0) -> float:
    """Frame-averaged RMS log-magnitude ratio in dB.

    Hann window, 50% overlap. ``db_factor=10`` gives the power-spectrum variant.
    """
    _check_pair(reference, estimate)
    if len(reference) < frame_len:
        raise ValueError(f"signal shorter than one LSD frame ({frame_len})")
    cfg = StftConfig(frame_len, frame_len // 2, "hann")
    S = np.abs(stft(reference, cfg).bins)
    E = np.abs(stft(estimate, cfg).bins)
    ratio = db_factor * np.log10((S + eps) / (E + eps))
    return float(np.mean(np.sqrt(np.mean(ratio ** 2, axis=0))))


def _resample(x, up, down, rejection_db=60.0):
    """Polyphase resampling with a Kaiser-windowed sinc anti-aliasing filter
    (60 dB rejection, transition width a tenth of the cutoff), the classic
    ``resample`` design used by reference STOI code."""
    cutoff = 1.0 / (2 * max(up, down))
    half = int(np.ceil((rejection_db - 8) / (28.714 * cutoff / 10)))
    h = firwin(2 * half + 1, 2 * cutoff, window=("kaiser", kaiser_beta(rejection_db)))
    return resample_poly(x, up, down, window=h / h.sum())


def _third_octave_matrix(fs, nfft, n_bands, min_freq):
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands)
    f_low = min_freq * 2.0 ** ((2 * k - 1) / 6)
    f_high = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((n_bands, f.shape[0]))
    for i in range(n_bands):
        lo = np.argmin((f - f_low[i]) ** 2)
        hi = np.argmin((f - f_high[i]) ** 2)
        obm[i, lo:hi] = 1.0
    return obm


def _frames(x, frame, hop, window):
    n = 1 + (x.shape[0] - frame) // hop if x.shape[0] >= frame else 0
    idx = np.arange(frame)[None, :] + hop * np.arange(n)[:, None]
    return x[idx] * window


def _remove_silent_frames(x, y, dyn_range, frame, hop):
    window = np.hanning(frame + 2)[1:-1]
    fx = _frames(x, frame, hop, window)
    fy = _frames(y, frame, hop, window)
    energy = 20 * np.log10(np.linalg.norm(fx, axis=1) + _EPS)
    keep = energy > energy.max() - dyn_range
    fx, fy = fx[keep], fy[keep]
    n = fx.shape[0]
    length = (n - 1) * hop + frame if n else 0
    xs, ys = np.zeros(length), np.zeros(length)
    for i in range(n):
        xs[i * hop:i * hop + frame] += fx[i]
        ys[i * hop:i * hop + frame] += fy[i]
    return xs, ys


def _tob_envelopes(x):
    window = np.hanning(STOI_FRAME + 2)[1:-1]
    spec = np.fft.rfft(_frames(x, STOI_FRAME, STOI_FRAME // 2, window), n=STOI_NFFT, axis=1)
    obm = _third_octave_matrix(STOI_FS, STOI_NFFT, STOI_BANDS, STOI_MIN_FREQ)
    return np.sqrt(obm @ (np.abs(spec) ** 2).T)  # (bands, frames)


def stoi(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    """Short-time objective intelligibility of ``estimate`` against ``reference``."""
    _check_pair(reference, estimate)
    x, y = reference.samples, estimate.samples
    if not np.any(x):
        raise ValueError("all-silent reference")
    fs = reference.sample_rate_hz
    if fs != STOI_FS:
        g = np.gcd(int(fs), STOI_FS)
        x = _resample(x, STOI_FS // g, fs // g)
        y = _resample(y, STOI_FS // g, fs // g)
    x, y = _remove_silent_frames(x, y, STOI_DYN_RANGE_DB, STOI_FRAME, STOI_FRAME // 2)
    if x.shape[0] < STOI_FRAME:
        raise ValueError("signal too short for STOI after silence removal")
    X = _tob_envelopes(x)
    Y = _tob_envelopes(y)
    n_frames = X.shape[1]
    if n_frames < STOI_SEG:
        raise ValueError(f"signal too short for STOI: {n_frames} frames < {STOI_SEG}")

    idx = np.arange(STOI_SEG)[None, :] + np.arange(n_frames - STOI_SEG + 1)[:, None]
    xs = X[:, idx].transpose(1, 0, 2)  # (segments, bands, N)
    ys = Y[:, idx].transpose(1, 0, 2)
    norm = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + _EPS)
    clip = 10 ** (-STOI_BETA_DB / 20)
    yp = np.minimum(ys * norm, xs * (1 + clip))
    xs = xs - xs.mean(axis=2, keepdims=True)
    yp = yp - yp.mean(axis=2, keepdims=True)
    xs = xs / (np.linalg.norm(xs, axis=2, keepdims=True) + _EPS)
    yp = yp / (np.linalg.norm(yp, axis=2, keepdims=True) + _EPS)
    return float(np.sum(xs * yp) / (xs.shape[0] * xs.shape[1]))


@dataclass
class EvalReport:
    per_utterance: list[dict]
    condition_label: str = ""
    system: str = "unproc."
    data: str = "-"
    rtfs: str = "-"
    metadata: dict = field(default_factory=dict)
    pesq_wb: dict | None = None

    @property
    def means(self) -> dict:
        if not self.per_utterance:
            return {"lsd_db": float("nan"), "stoi": float("nan")}
        return {k: float(np.mean([u[k] for u in self.per_utterance])) for k in ("lsd_db", "stoi")}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["means"] = self.means
        if self.pesq_wb:
            d["means"]["pesq_wb"] = float(np.mean(list(self.pesq_wb.values())))
        d["schema_version"] = REPORT_SCHEMA_VERSION
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        return format_table([self])

    def attach_pesq(self, path) -> None:
        """Read externally computed PESQ-WB scores, a JSON object id -> score."""
        scores = json.loads(Path(path).read_text())
        ids = {u["id"] for u in self.per_utterance}
        missing = ids - set(scores)
        if missing:
            raise ValueError(f"PESQ file lacks ids: {sorted(missing)[:5]}")
        self.pesq_wb = {k: float(scores[k]) for k in sorted(ids)}


def format_table(reports: list[EvalReport]) -> str:
    rows = [("System", "Data", "RTFs used", "LSD", "STOI")]
    for r in reports:
        m = r.means
        rows.append((r.system, r.data, r.rtfs, f"{m['lsd_db']:.2f}", f"{m['stoi']:.2f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def evaluate_pairs(manifest: CorpusManifest, params=None, net_cfg=None, split: str | None = None,
                   max_seconds: float = EVAL_MAX_S, label: str = "") -> EvalReport:
    """LSD and STOI of manifest inputs (or their reconstructions when ``params``
    is given) against the targets, each pair cut to its first ``max_seconds``."""
    from .unet.model import reconstruct

    entries = manifest.entries if split is None else manifest.split(split)
    if not entries:
        raise ValueError("no pairs to evaluate")
    rows = []
    for entry in entries:
        inp, ref = manifest.load_pair(entry)
        n = min(len(ref), int(round(max_seconds * ref.sample_rate_hz)))
        inp = AudioBuffer(inp.samples[:n], inp.sample_rate_hz)
        ref = AudioBuffer(ref.samples[:n], ref.sample_rate_hz)
        est = inp if params is None else reconstruct(params, net_cfg, inp)
        rows.append({"id": entry["id"], "lsd_db": lsd(ref, est), "stoi": stoi(ref, est)})
    meta = {"lsd_frame": LSD_FRAME, "lsd_window": "hann", "lsd_overlap": 0.5, "lsd_eps": LSD_EPS,
            "max_seconds": max_seconds, "split": split}
    return EvalReport(rows, label, system="unproc." if params is None else "U-Net", metadata=meta)
