"""Adagrad and Adam updates over a list of parameter arrays (in place)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from src.config import ADAGRAD_EPS, ADAGRAD_LR, ADAM_BETAS, ADAM_EPS, ADAM_LR
from src.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)


def _check_shapes(params: list[np.ndarray], grads: list[np.ndarray], state: list[np.ndarray]) -> None:
    if len(params) != len(grads) or len(params) != len(state):
        raise ShapeError(
            f"{len(params)} parameters, {len(grads)} gradients, {len(state)} state slots"
        )
    for i, (p, g, s) in enumerate(zip(params, grads, state)):
        if p.shape != g.shape or p.shape != s.shape:
            raise ShapeError(f"Parameter {i}: shape {p.shape}, gradient {g.shape}, state {s.shape}")


@dataclass
class AdagradState:
    lr: float = ADAGRAD_LR
    eps: float = ADAGRAD_EPS
    accumulators: list[np.ndarray] = field(default_factory=list)

    name = "adagrad"

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "AdagradState":
        return cls(accumulators=[np.zeros_like(p) for p in params], **kwargs)

    def arrays(self) -> list[np.ndarray]:
        return self.accumulators

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        return adagrad_step(self, params, grads)


@dataclass
class AdamState:
    lr: float = ADAM_LR
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    eps: float = ADAM_EPS
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    name = "adam"

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kwargs) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **kwargs)

    def arrays(self) -> list[np.ndarray]:
        return self.m + self.v

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        return adam_step(self, params, grads)


def adagrad_step(state: AdagradState, params: list[np.ndarray],
                 grads: list[np.ndarray]) -> list[np.ndarray]:
    """G += g^2; theta -= lr * g / (sqrt(G) + eps)."""
    _check_shapes(params, grads, state.accumulators)
    for p, g, acc in zip(params, grads, state.accumulators):
        acc += g * g
        p -= state.lr * g / (np.sqrt(acc) + state.eps)
    return params


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray]) -> list[np.ndarray]:
    """Bias-corrected Adam update."""
    _check_shapes(params, grads, state.m)
    state.step_count += 1
    t = state.step_count
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# Registry of optimisers, keyed by CLI name
OPTIMIZERS = {
    "adagrad": AdagradState,
    "adam": AdamState,
}


def make_optimizer(name: str, params: list[np.ndarray], lr: float | None = None):
    """Create optimiser state sized for params."""
    if name not in OPTIMIZERS:
        raise ConfigError(f"Unknown optimizer: {name}. Available: {list(OPTIMIZERS.keys())}")
    kwargs = {} if lr is None else {"lr": lr}
    return OPTIMIZERS[name].for_params(params, **kwargs)
