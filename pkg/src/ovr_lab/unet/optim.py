"""Adam with bias-corrected moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import NetworkParams


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState, lr: float,
              trainable_groups=None) -> tuple[NetworkParams, AdamState]:
    """One Adam update; returns new params (untouched layers are shared, not
    copied) and the advanced state. Layers outside ``trainable_groups`` are
    left exactly as they were."""
    for name, g in grads.named_arrays():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"diverged: non-finite gradient in {name}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m, v = dict(state.m), dict(state.v)
    new_layers = []
    for layer, glayer in zip(params.layers, grads.layers):
        if trainable_groups is not None and layer.group not in trainable_groups:
            new_layers.append(layer)
            continue
        updated = {}
        for (key, p), (_, g) in zip(layer.arrays(), glayer.arrays()):
            k = f"{layer.name}.{key}"
            mk = b1 * m.get(k, 0.0) + (1.0 - b1) * g
            vk = b2 * v.get(k, 0.0) + (1.0 - b2) * g * g
            m[k], v[k] = mk, vk
            m_hat = mk / (1.0 - b1 ** t)
            v_hat = vk / (1.0 - b2 ** t)
            updated[key] = (p - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
        new_layers.append(type(layer)(layer.name, layer.kind, layer.stride, updated["weights"],
                                      updated["bias"], updated.get("prelu_alpha"), layer.group))
    new_state = AdamState(t, m, v, b1, b2, state.eps)
    return NetworkParams(new_layers), new_state
