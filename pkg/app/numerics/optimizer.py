"""Adaptive-moment (Adam) optimizer over MlpParameters."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from app.errors import InvalidArgumentError, NumericError
from app.numerics.mlp import Gradients, MlpParameters

LOGGER = logging.getLogger("starris.numerics")


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_model(cls, model: MlpParameters) -> "AdamState":
        return cls(
            m={name: np.zeros_like(value) for name, value in model.params.items()},
            v={name: np.zeros_like(value) for name, value in model.params.items()},
        )


def optimizer_step(
    model: MlpParameters,
    grads: Gradients,
    learning_rate: float,
    state: AdamState,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[MlpParameters, AdamState]:
    """Apply one descent step in place; returns the same (model, state) pair.

    Non-finite gradients raise before anything is touched.
    """
    if learning_rate <= 0:
        raise InvalidArgumentError("learning rate must be > 0")
    for name, value in model.params.items():
        grad = grads.params.get(name)
        if grad is None or grad.shape != value.shape:
            raise InvalidArgumentError(f"gradient for {name} is missing or has the wrong shape")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for {name}")

    state.t += 1
    correction1 = 1.0 - beta1**state.t
    correction2 = 1.0 - beta2**state.t
    for name in model.params:
        grad = grads.params[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * grad
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * grad * grad
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        model.params[name] = model.params[name] - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return model, state


class AdamOptimizer:
    """Owns the moment estimates for one network."""

    def __init__(
        self,
        model: MlpParameters,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState.for_model(model)

    def step(self, model: MlpParameters, grads: Gradients, ascend: bool = False) -> None:
        if ascend:
            grads = grads.negated()
        optimizer_step(model, grads, self.learning_rate, self.state, self.beta1, self.beta2, self.eps)
