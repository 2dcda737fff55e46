"""Adam and the plateau learning-rate schedule."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Mapping, Optional

import numpy as np

from ..core.errors import ConsistencyError
from .layers import Parameter

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Parameter],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
) -> None:
    """One bias-corrected Adam update, in place. Frozen parameters are skipped."""
    trainable = {name: p for name, p in params.items() if not p.frozen}
    missing = sorted(name for name in trainable if grads.get(name) is None)
    if missing:
        raise ConsistencyError(f"No gradient for trainable parameters: {missing}")
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, param in trainable.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ConsistencyError(f"Gradient shape {grad.shape} != parameter shape {param.shape} for {name}")
        m = state.m.get(name, np.zeros_like(param.data))
        v = state.v.get(name, np.zeros_like(param.data))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        param.data = param.data - state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


class Adam:
    """Adam over a model's parameter map, reading gradients from ``.grad``."""

    def __init__(
        self,
        params: Mapping[str, Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    def set_lr(self, lr: float) -> None:
        self.state.lr = lr

    def step(self, grads: Optional[Mapping[str, Optional[np.ndarray]]] = None) -> None:
        if grads is None:
            grads = {name: p.grad for name, p in self.params.items()}
        adam_step(self.params, grads, self.state)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = None


class LrAction(str, Enum):
    NONE = "none"
    HALVE = "halve"
    STOP = "stop"


class PlateauScheduler:
    """Tracks the best development loss.

    HALVE fires once when the loss has not improved for ``halve_patience``
    consecutive epochs; STOP fires at ``stop_patience``. Any improvement resets
    the counter.
    """

    def __init__(self, halve_patience: int = 6, stop_patience: int = 20):
        self.halve_patience = halve_patience
        self.stop_patience = stop_patience
        self.best = math.inf
        self.bad_epochs = 0

    def update(self, loss: float) -> LrAction:
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
            return LrAction.NONE
        self.bad_epochs += 1
        if self.bad_epochs >= self.stop_patience:
            return LrAction.STOP
        if self.bad_epochs == self.halve_patience:
            return LrAction.HALVE
        return LrAction.NONE

    @property
    def improved(self) -> bool:
        return self.bad_epochs == 0


def lr_schedule(history: Iterable[float], halve_patience: int = 6, stop_patience: int = 20) -> list[LrAction]:
    """Replay a per-epoch dev-loss history and return the action after each epoch."""
    scheduler = PlateauScheduler(halve_patience, stop_patience)
    return [scheduler.update(loss) for loss in history]
