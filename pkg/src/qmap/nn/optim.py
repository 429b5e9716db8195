"""Adam with bias correction and decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError

Params = dict[str, dict[str, np.ndarray]]


@dataclass
class AdamState:
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-11,
) -> tuple[Params, AdamState]:
    """One Adam update; returns new parameter and state dicts (inputs untouched).

    Weight decay is applied after the moment update as ``p -= lr * wd * p``.
    """
    for node, group in grads.items():
        for key, g in group.items():
            if not np.all(np.isfinite(g)):
                bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
                raise NumericError(
                    f"non-finite gradient for {node}/{key} at step {state.step + 1} "
                    f"({bad} of {np.size(g)} entries)"
                )
    step = state.step + 1
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for node, group in params.items():
        new_params[node], new_m[node], new_v[node] = {}, {}, {}
        for key, p in group.items():
            g = grads[node][key]
            m = state.m.get(node, {}).get(key)
            v = state.v.get(node, {}).get(key)
            if m is None:
                m = np.zeros_like(p)
                v = np.zeros_like(p)
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * (g * g)
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
            new_p = p - update
            if weight_decay:
                new_p = new_p - lr * weight_decay * p
            new_params[node][key] = new_p.astype(p.dtype, copy=False)
            new_m[node][key] = m.astype(p.dtype, copy=False)
            new_v[node][key] = v.astype(p.dtype, copy=False)
    return new_params, AdamState(step=step, m=new_m, v=new_v)
