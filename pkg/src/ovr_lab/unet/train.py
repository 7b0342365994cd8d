"""Training loop, decoder-only fine-tuning and the four training strategies."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..audio_io import AudioBuffer, normalize_zscore
from ..dsp import WolaConfig, get_window, segment_wola
from ..manifest import CorpusManifest
from .loss import TpcmConfig, tpcm_loss
from .model import GROUPS, NetConfig, NetworkParams, backward, forward, forward_batched, init_params
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

STRATEGIES = ("R", "S", "S+", "S+R")


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr0: float = 1e-4
    finetune_lr: float = 5e-5
    lr_halve_patience: int = 3
    early_stop_patience: int = 6
    max_epochs: int = 100
    batches_per_epoch: int | None = None
    val_max_segments: int | None = None
    strategy: str = "S+"
    seed: int = 0
    loss: TpcmConfig = field(default_factory=TpcmConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    @property
    def lrs(self) -> list[float]:
        return [r["lr"] for r in self.records]

    @property
    def val_losses(self) -> list[float]:
        return [r["val_loss"] for r in self.records]


def load_split(manifest: CorpusManifest, split: str, segment_len: int):
    """Per-recording z-scored (input, target) arrays, zero-padded to one segment."""
    pairs = []
    for entry in manifest.split(split):
        x, y = manifest.load_pair(entry)
        xs = normalize_zscore(x)[0].samples
        ys = normalize_zscore(y)[0].samples
        if xs.shape[0] < segment_len:
            xs = np.pad(xs, (0, segment_len - xs.shape[0]))
            ys = np.pad(ys, (0, segment_len - ys.shape[0]))
        pairs.append((xs, ys))
    return pairs


def sample_batch(rng: np.random.Generator, pairs, batch_size: int, segment_len: int, window):
    """Random windowed segments, each from a uniformly chosen recording."""
    X = np.empty((batch_size, segment_len))
    Y = np.empty((batch_size, segment_len))
    for b in range(batch_size):
        x, y = pairs[int(rng.integers(len(pairs)))]
        off = int(rng.integers(x.shape[0] - segment_len + 1))
        X[b] = x[off:off + segment_len] * window
        Y[b] = y[off:off + segment_len] * window
    return X, Y


def validation_segments(pairs, segment_len: int, max_segments: int | None = None):
    wola = WolaConfig(segment_len)
    X = np.concatenate([segment_wola(AudioBuffer(x), wola) for x, _ in pairs])
    Y = np.concatenate([segment_wola(AudioBuffer(y), wola) for _, y in pairs])
    if max_segments is not None and X.shape[0] > max_segments:
        idx = np.linspace(0, X.shape[0] - 1, max_segments).round().astype(int)
        X, Y = X[idx], Y[idx]
    return X, Y


def evaluate_loss(params, net_cfg, X, Y, loss_cfg, batch_size: int = 32) -> float:
    est = forward_batched(params, net_cfg, X, batch_size)
    return tpcm_loss(est, Y.astype(est.dtype), loss_cfg)[0]


def train(manifest: CorpusManifest, net_cfg: NetConfig, train_cfg: TrainConfig,
          init: NetworkParams | None = None, trainable_groups=None, lr0: float | None = None,
          val_loss_hook=None) -> tuple[NetworkParams, TrainLog]:
    """Train on the manifest's ``train`` split, validating on ``val``.

    The learning rate halves whenever the validation loss has not improved for
    ``lr_halve_patience`` epochs; training stops after ``early_stop_patience``
    epochs without improvement and the best-validation parameters are
    returned. Each log record's ``lr`` is the rate in effect after that
    epoch's schedule update. ``val_loss_hook(epoch, loss)`` may replace the
    measured validation loss (used to test the schedule).
    """
    P = net_cfg.segment_len
    train_pairs = load_split(manifest, "train", P)
    val_pairs = load_split(manifest, "val", P)
    if not train_pairs or not val_pairs:
        raise ValueError("manifest needs non-empty train and val splits")
    dtype = np.dtype(net_cfg.dtype)
    window = get_window("sqrt_hann", P)
    Xv, Yv = validation_segments(val_pairs, P, train_cfg.val_max_segments)
    Xv, Yv = Xv.astype(dtype), Yv.astype(dtype)

    n_batches = train_cfg.batches_per_epoch
    if n_batches is None:
        n_segments = sum(-(-x.shape[0] // (P // 2)) for x, _ in train_pairs)
        n_batches = max(1, -(-n_segments // train_cfg.batch_size))

    params = init if init is not None else init_params(net_cfg, train_cfg.seed)
    sampler = np.random.default_rng([train_cfg.seed, 1])
    drop_rng = np.random.default_rng([train_cfg.seed, 2])
    state = AdamState()
    lr = train_cfg.lr0 if lr0 is None else lr0

    tlog = TrainLog()
    best_params = params
    if init is not None:
        tlog.best_val_loss = evaluate_loss(params, net_cfg, Xv, Yv, train_cfg.loss)
    sched_best = float("inf")
    wait = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        total = 0.0
        for _ in range(n_batches):
            X, Y = sample_batch(sampler, train_pairs, train_cfg.batch_size, P, window)
            X, Y = X.astype(dtype), Y.astype(dtype)
            est, cache = forward(params, net_cfg, X, training=True, rng=drop_rng)
            loss, grad = tpcm_loss(est, Y, train_cfg.loss)
            grads = backward(params, cache, grad)
            params, state = adam_step(params, grads, state, lr, trainable_groups)
            total += loss
        train_loss = total / n_batches
        val_loss = evaluate_loss(params, net_cfg, Xv, Yv, train_cfg.loss)
        if val_loss_hook is not None:
            val_loss = float(val_loss_hook(epoch, val_loss))

        if val_loss < sched_best:
            sched_best = val_loss
            wait = 0
        else:
            wait += 1
            if wait % train_cfg.lr_halve_patience == 0:
                lr *= 0.5
        if val_loss < tlog.best_val_loss:
            tlog.best_val_loss = val_loss
            tlog.best_epoch = epoch
            best_params = params
        tlog.records.append({"epoch": epoch, "train_loss": float(train_loss),
                             "val_loss": float(val_loss), "lr": lr})
        log.info("epoch %d train %.5f val %.5f lr %.3g", epoch, train_loss, val_loss, lr)
        if wait >= train_cfg.early_stop_patience:
            tlog.stopped_early = True
            break
    return best_params, tlog


def finetune_decoder(pretrained: NetworkParams, real_manifest: CorpusManifest,
                     net_cfg: NetConfig, train_cfg: TrainConfig,
                     val_loss_hook=None) -> tuple[NetworkParams, TrainLog]:
    """Continue training with only the decoder group trainable, at the
    fine-tuning learning rate."""
    for layer in pretrained:
        if layer.group not in GROUPS:
            raise ValueError(f"layer {layer.name} is not group-tagged")
    return train(real_manifest, net_cfg, train_cfg, init=pretrained,
                 trainable_groups={"decoder"}, lr0=train_cfg.finetune_lr,
                 val_loss_hook=val_loss_hook)


def check_strategy_data(strategy: str, corpus: CorpusManifest | None,
                        real: CorpusManifest | None) -> None:
    if strategy == "R":
        if real is None:
            raise ValueError("strategy R needs a real-pair manifest")
        return
    if corpus is None:
        raise ValueError(f"strategy {strategy} needs a simulated corpus manifest")
    if corpus.kind != "corpus":
        raise ValueError(f"strategy {strategy} expects a simulated corpus, got {corpus.kind!r}")
    if strategy == "S" and corpus.has_noise:
        raise ValueError("strategy S expects a corpus without body noise")
    if strategy in ("S+", "S+R") and not corpus.has_noise:
        raise ValueError(f"strategy {strategy} expects a corpus simulated with body noise")
    if strategy == "S+R" and real is None:
        raise ValueError("strategy S+R needs a real-pair manifest for fine-tuning")


def run_strategy(strategy: str, net_cfg: NetConfig, train_cfg: TrainConfig,
                 corpus: CorpusManifest | None = None, real: CorpusManifest | None = None):
    """Train under one of R, S, S+, S+R. Returns ``(params, {phase: TrainLog})``."""
    check_strategy_data(strategy, corpus, real)
    cfg = replace(train_cfg, strategy=strategy)
    if strategy == "R":
        params, tlog = train(real, net_cfg, cfg)
        return params, {"train": tlog}
    params, tlog = train(corpus, net_cfg, cfg)
    logs = {"pretrain" if strategy == "S+R" else "train": tlog}
    if strategy == "S+R":
        params, logs["finetune"] = finetune_decoder(params, real, net_cfg, cfg)
    return params, logs


def config_dict(train_cfg: TrainConfig) -> dict:
    return asdict(train_cfg)
