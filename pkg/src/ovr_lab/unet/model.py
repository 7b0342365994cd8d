"""Time-domain U-Net: configuration, parameters, forward/backward passes,
WOLA-based reconstruction and (de)serialization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ..audio_io import AudioBuffer, denormalize, normalize_zscore
from ..dsp import WolaConfig, overlap_add, segment_wola
from . import layers as L

MODEL_SCHEMA_VERSION = 1
GROUPS = ("encoder", "bottleneck", "decoder")


@dataclass(frozen=True)
class NetConfig:
    segment_len: int = 2048
    depth: int = 4
    base_channels: int = 16
    kernel_len: int = 11
    stride: int = 2
    dropout_p: float = 0.2
    dropout_every: int = 3
    prelu_init: float = 0.25
    max_channels: int | None = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.segment_len % (self.stride ** self.depth):
            raise ValueError("segment_len must be divisible by stride**depth")
        if self.kernel_len % 2 == 0:
            raise ValueError("kernel_len must be odd")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")

    def channels(self, stage: int) -> int:
        c = self.base_channels * 2 ** stage
        return c if self.max_channels is None else min(c, self.max_channels)


PRESETS = {
    "paper": NetConfig(segment_len=2048, depth=5, base_channels=64, max_channels=512),
    "desk": NetConfig(segment_len=2048, depth=4, base_channels=16),
}


@dataclass
class Layer:
    name: str
    kind: str  # "conv" or "tconv"
    stride: int
    weights: np.ndarray
    bias: np.ndarray
    prelu_alpha: np.ndarray | None
    group: str

    def arrays(self):
        yield "weights", self.weights
        yield "bias", self.bias
        if self.prelu_alpha is not None:
            yield "prelu_alpha", self.prelu_alpha


@dataclass
class NetworkParams:
    layers: list[Layer]

    def __iter__(self):
        return iter(self.layers)

    def named_arrays(self):
        for layer in self.layers:
            for key, arr in layer.arrays():
                yield f"{layer.name}.{key}", arr

    def group_of(self, name: str) -> str:
        return self[name].group

    def __getitem__(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def copy(self) -> "NetworkParams":
        return NetworkParams([
            replace(l, weights=l.weights.copy(), bias=l.bias.copy(),
                    prelu_alpha=None if l.prelu_alpha is None else l.prelu_alpha.copy())
            for l in self.layers])

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams([
            replace(l, weights=np.zeros_like(l.weights), bias=np.zeros_like(l.bias),
                    prelu_alpha=None if l.prelu_alpha is None else np.zeros_like(l.prelu_alpha))
            for l in self.layers])

    @property
    def n_params(self) -> int:
        return sum(a.size for _, a in self.named_arrays())


def layer_specs(cfg: NetConfig):
    """(name, kind, stride, c_in, c_out, group, activated) in forward order."""
    D, s = cfg.depth, cfg.stride
    ch = [cfg.channels(i) for i in range(D + 1)]
    specs = [("e0", "conv", 1, 1, ch[0], "encoder", True)]
    for i in range(1, D + 1):
        specs.append((f"e{i}", "conv", s, ch[i - 1], ch[i], "encoder", True))
    specs.append(("b", "conv", 1, ch[D], ch[D], "bottleneck", True))
    c_in = ch[D]
    for i in range(D, 0, -1):
        specs.append((f"d{i}", "tconv", s, c_in, ch[i - 1], "decoder", True))
        c_in = 2 * ch[i - 1]
    specs.append(("out", "conv", 1, c_in, 1, "decoder", False))
    return specs


def init_params(cfg: NetConfig, seed: int = 0) -> NetworkParams:
    """He-normal weights, zero biases, PReLU slopes at ``cfg.prelu_init``."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(cfg.dtype)
    K = cfg.kernel_len
    out = []
    for name, kind, stride, c_in, c_out, group, act in layer_specs(cfg):
        shape = (c_out, c_in, K) if kind == "conv" else (c_in, c_out, K)
        fan_in = c_in * K if kind == "conv" else c_in * K / stride
        w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        alpha = np.array(cfg.prelu_init, dtype=dtype) if act else None
        out.append(Layer(name, kind, stride, w.astype(dtype), np.zeros(c_out, dtype=dtype),
                         alpha, group))
    return NetworkParams(out)


def identity_params(cfg: NetConfig) -> NetworkParams:
    """A network whose output equals its input: e0 copies the input into its
    first channel, every PReLU is the identity (slope 1) and the output layer
    reads that channel back through the outermost skip connection."""
    params = init_params(cfg).zeros_like()
    c = cfg.kernel_len // 2
    for layer in params:
        if layer.prelu_alpha is not None:
            layer.prelu_alpha[...] = 1.0
    params["e0"].weights[0, 0, c] = 1.0
    params["out"].weights[0, cfg.base_channels, c] = 1.0
    return params


def check_params(params: NetworkParams, cfg: NetConfig) -> None:
    specs = layer_specs(cfg)
    if len(specs) != len(params.layers):
        raise ValueError("parameter layer count does not match config")
    for (name, kind, _, c_in, c_out, _, _), layer in zip(specs, params):
        want = (c_out, c_in, cfg.kernel_len) if kind == "conv" else (c_in, c_out, cfg.kernel_len)
        if layer.name != name or layer.weights.shape != want:
            raise ValueError(f"layer {layer.name}: shape {layer.weights.shape} != {want}")


def forward(params: NetworkParams, cfg: NetConfig, segment, training: bool = False,
            rng: np.random.Generator | None = None):
    """Run the U-Net on one segment (P,) or a batch (B, P).

    Returns ``(output, cache)``; the cache feeds :func:`backward`. Dropout is
    active only when ``training`` is true, after every ``cfg.dropout_every``-th
    layer.
    """
    x = np.asarray(segment, dtype=cfg.dtype)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[-1] != cfg.segment_len:
        raise ValueError(f"segment length {x.shape[-1]} != {cfg.segment_len}")
    check_params(params, cfg)
    if training and cfg.dropout_p > 0 and rng is None:
        rng = np.random.default_rng()

    D = cfg.depth
    h = x[:, None, :]
    skips = {}
    caches = []
    n_layers = len(params.layers)
    for idx, layer in enumerate(params):
        if layer.kind == "conv":
            pre, op_cache = L.conv1d_forward(h, layer.weights, layer.bias, layer.stride)
        else:
            pre, op_cache = L.tconv1d_forward(h, layer.weights, layer.bias, layer.stride)
        act = pre if layer.prelu_alpha is None else L.prelu_forward(pre, layer.prelu_alpha)
        mask = None
        if (training and cfg.dropout_p > 0 and (idx + 1) % cfg.dropout_every == 0
                and idx < n_layers - 1):
            mask = L.dropout_mask(act.shape, cfg.dropout_p, rng, act.dtype)
            act = act * mask
        caches.append((op_cache, pre, mask, act.shape[1]))
        h = act
        if layer.name.startswith("e") and int(layer.name[1:]) < D:
            skips[int(layer.name[1:])] = act
        elif layer.name.startswith("d"):
            h = np.concatenate([act, skips[int(layer.name[1:]) - 1]], axis=1)
    y = h[:, 0, :]
    cache = {"caches": caches, "single": single, "depth": D}
    return (y[0] if single else y), cache


def backward(params: NetworkParams, cache, upstream_grad, return_input_grad: bool = False):
    """Reverse-mode gradients of ``sum(upstream_grad * output)``.

    Returns a :class:`NetworkParams` of gradients (and the input gradient if
    requested).
    """
    if cache is None or "caches" not in cache:
        raise ValueError("forward cache missing")
    g = np.asarray(upstream_grad)
    if cache["single"]:
        g = g[None]
    g = g[:, None, :]
    D = cache["depth"]
    grads = params.zeros_like()
    skip_grads = {}
    for layer, glayer, (op_cache, pre, mask, c_act) in zip(
            reversed(params.layers), reversed(grads.layers), reversed(cache["caches"])):
        name = layer.name
        if name.startswith("d"):
            i = int(name[1:])
            skip_grads[i - 1] = g[:, c_act:]
            g = g[:, :c_act]
        elif name.startswith("e") and int(name[1:]) < D:
            g = g + skip_grads.pop(int(name[1:]))
        if mask is not None:
            g = g * mask
        if layer.prelu_alpha is not None:
            g, dalpha = L.prelu_backward(g, pre, layer.prelu_alpha)
            glayer.prelu_alpha[...] = dalpha
        if layer.kind == "conv":
            g, dw, db = L.conv1d_backward(g, layer.weights, op_cache)
        else:
            g, dw, db = L.tconv1d_backward(g, layer.weights, op_cache)
        glayer.weights[...] = dw
        glayer.bias[...] = db
    if return_input_grad:
        dx = g[:, 0, :]
        return grads, (dx[0] if cache["single"] else dx)
    return grads


def forward_batched(params, cfg, segments, batch_size: int = 32):
    segments = np.asarray(segments, dtype=cfg.dtype)
    out = np.empty_like(segments)
    for i in range(0, segments.shape[0], batch_size):
        out[i:i + batch_size], _ = forward(params, cfg, segments[i:i + batch_size])
    return out


def reconstruct(params: NetworkParams, cfg: NetConfig, buf: AudioBuffer) -> AudioBuffer:
    """Normalize, WOLA-segment, run the network per segment, overlap-add and
    restore the input's mean and scale."""
    wola = WolaConfig(cfg.segment_len)
    norm, stats = normalize_zscore(buf)
    segs = segment_wola(norm, wola)
    est = forward_batched(params, cfg, segs).astype(np.float64)
    out = overlap_add(est, wola, length=len(buf), sample_rate_hz=buf.sample_rate_hz)
    return denormalize(out, stats)


def save_model(params: NetworkParams, cfg: NetConfig, out_dir, provenance: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savez(out_dir / "params.npz", **dict(params.named_arrays()))
    meta = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "net_config": asdict(cfg),
        "layers": [{"name": l.name, "kind": l.kind, "stride": l.stride, "group": l.group}
                   for l in params],
        "provenance": provenance or {},
    }
    (out_dir / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out_dir


def load_model(model_dir) -> tuple[NetworkParams, NetConfig, dict]:
    model_dir = Path(model_dir)
    meta = json.loads((model_dir / "model.json").read_text())
    if meta.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema {meta.get('schema_version')!r}")
    cfg = NetConfig(**meta["net_config"])
    arrays = np.load(model_dir / "params.npz")
    layers = []
    for spec in meta["layers"]:
        name = spec["name"]
        if spec.get("group") not in GROUPS:
            raise ValueError(f"layer {name} has no valid group tag")
        alpha_key = f"{name}.prelu_alpha"
        layers.append(Layer(name, spec["kind"], spec["stride"], arrays[f"{name}.weights"],
                            arrays[f"{name}.bias"],
                            arrays[alpha_key] if alpha_key in arrays.files else None,
                            spec["group"]))
    params = NetworkParams(layers)
    check_params(params, cfg)
    return params, cfg, meta.get("provenance", {})
