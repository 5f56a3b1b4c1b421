from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import Parameters, SchemaError


def group_of(name: str) -> str:
    """Parameter group: the name prefix before the first dot."""
    return name.split(".", 1)[0]


@dataclass
class AdamState:
    m: Parameters
    v: Parameters
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Parameters, **kw) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), **kw)


def adam_step(
    params: Parameters,
    grads: Parameters,
    state: AdamState,
    lr: float | dict[str, float],
) -> None:
    """In-place Adam update with bias correction.

    ``lr`` is a scalar or a mapping from parameter group to learning rate.
    """
    if params.schema() != grads.schema() or params.schema() != state.m.schema():
        raise SchemaError("params, grads and optimizer state must share a schema")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        rate = lr if not isinstance(lr, dict) else lr[group_of(name)]
        p -= rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class ReduceOnPlateau:
    """Multiply the learning-rate scale by ``factor`` after ``patience``
    consecutive epochs without a strict decrease of the monitored loss."""

    patience: int = 6
    factor: float = 0.75
    scale: float = 1.0
    best: float = math.inf
    wait: int = 0
    reductions: int = 0

    def step(self, epoch_loss: float) -> bool:
        if epoch_loss < self.best:
            self.best = epoch_loss
            self.wait = 0
            return False
        self.wait += 1
        if self.wait >= self.patience:
            self.scale *= self.factor
            self.wait = 0
            self.reductions += 1
            return True
        return False


@dataclass
class EarlyStopping:
    patience: int = 12
    best: float = math.inf
    wait: int = 0
    stopped: bool = False

    def step(self, epoch_loss: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        if epoch_loss < self.best:
            self.best = epoch_loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.stopped = True
        return self.stopped


@dataclass
class OptimState:
    adam: AdamState
    base_lr: dict[str, float]
    scheduler: ReduceOnPlateau = field(default_factory=ReduceOnPlateau)

    def lr(self) -> dict[str, float]:
        return {g: r * self.scheduler.scale for g, r in self.base_lr.items()}
