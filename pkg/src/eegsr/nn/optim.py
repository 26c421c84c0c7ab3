"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Optimizer moments and step counter for one parameter list."""

    lr: float
    beta1: float
    beta2: float
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {b}")

    @classmethod
    def for_params(cls, params, lr, beta1, beta2, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros(p.shape, dtype=p.dtype) for p in params]
        state.v = [np.zeros(p.shape, dtype=p.dtype) for p in params]
        return state


def adam_step(params, grads, state):
    """One in-place Adam update; gradients may be Tensors or arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(
            f"param/grad/state length mismatch: {len(params)}, {len(grads)}, {len(state.m)}"
        )
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(getattr(g, "data", g), dtype=p.dtype)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data = p.data - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state
