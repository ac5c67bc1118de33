"""Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .params import ParameterSet

DEFAULT_LEARNING_RATE = 1e-5


@dataclass
class AdamState:
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)


def clip_grad_norm(params: ParameterSet, max_norm: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(t.grad * t.grad)) for t in params if t.grad is not None)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for t in params:
            if t.grad is not None:
                t.grad *= scale
    return total


def adam_step(params: ParameterSet, state: AdamState) -> None:
    missing = [name for name, t in params.named() if t.grad is None]
    if missing:
        raise ContractError(f"adam_step called without gradients for {missing[:3]}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, t in params.named():
        g = t.grad
        m = state.first.get(name)
        if m is None:
            m = state.first[name] = np.zeros_like(t.data)
            state.second[name] = np.zeros_like(t.data)
        v = state.second[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data = t.data - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
