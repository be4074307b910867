"""SGD and Adam updates over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DimensionError
from .tensor import Tensor


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    @classmethod
    def for_params(cls, params: Sequence[Tensor], kind: str = "adam", **kw) -> "OptimizerState":
        state = cls(kind=kind, **kw)
        if kind == "adam":
            state.first_moment = [np.zeros(p.shape) for p in params]
            state.second_moment = [np.zeros(p.shape) for p in params]
        return state


def optimizer_step(state: OptimizerState, params: Sequence[Tensor],
                   grads: Sequence[np.ndarray | None]) -> None:
    """Update ``params`` in place. A ``None`` gradient counts as zero."""
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if g is not None and g.shape != p.shape:
            raise DimensionError(f"gradient {list(g.shape)} for parameter {list(p.shape)}")
    state.step_count += 1
    lr = state.learning_rate
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            if g is not None:
                p.data -= lr * g
        return

    if not state.first_moment:
        state.first_moment = [np.zeros(p.shape) for p in params]
        state.second_moment = [np.zeros(p.shape) for p in params]
    if len(state.first_moment) != len(params):
        raise DimensionError("optimizer moments do not match the parameter list")
    b1, b2, t = state.beta1, state.beta2, state.step_count
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if m.shape != p.shape:
            raise DimensionError(f"moment {list(m.shape)} for parameter {list(p.shape)}")
        g = np.zeros(p.shape) if g is None else g
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


def clip_grad_norm(grads: Sequence[np.ndarray | None], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads if g is not None)))
    if total > max_norm > 0:
        k = max_norm / total
        for g in grads:
            if g is not None:
                g *= k
    return total
