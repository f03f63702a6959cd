"""Adam with bias correction and classic L2-style weight decay.

The decay term is added to the raw gradient before the moment updates,
so it flows through the adaptive scaling like any other gradient
contribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def init_adam_state(params) -> AdamState:
    state = AdamState()
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              weight_decay: float = 0.0, eps: float = 1e-8) -> AdamState:
    """Apply one Adam update in place; returns the advanced state."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g is None:
            g = np.zeros_like(p.data)
        if weight_decay:
            g = g + weight_decay * p.data
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state
