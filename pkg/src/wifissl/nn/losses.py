"""Batch-mean losses returning ``(value, d value / d pred)``.

MSE and BCE average over every element; CE sums over classes and averages
over rows. Probabilities are clamped to [1e-7, 1 - 1e-7] before any log.

In the consistency role BCE is reported relative to the target's own
entropy, ``BCE(p, q) - BCE(q, q)``: the gradient in ``p`` is unchanged and
the value is zero when student and teacher agree.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

EPS = 1e-7


class LossKind(str, enum.Enum):
    MSE = "mse"
    BCE = "bce"
    CE = "ce"


class LossRole(str, enum.Enum):
    PREDICTION = "prediction"
    CONSISTENCY = "consistency"


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind
    role: LossRole = LossRole.PREDICTION


class LossDomainError(ValueError):
    pass


def mse(pred, target):
    d = pred - target
    return float(np.mean(d * d)), 2.0 * d / d.size


def bce(pred, target):
    if np.any((target < 0) | (target > 1)):
        raise LossDomainError("BCE targets must lie in [0, 1]")
    if np.any((pred < 0) | (pred > 1)):
        raise LossDomainError("BCE predictions must lie in [0, 1]")
    p = np.clip(pred, EPS, 1.0 - EPS)
    value = -np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    grad = (p - target) / (p * (1.0 - p)) / p.size
    # clamped entries have zero derivative w.r.t. pred
    grad = np.where((pred > EPS) & (pred < 1.0 - EPS), grad, 0.0)
    return float(value), grad


def ce(pred, target):
    if np.any(target < 0) or not np.allclose(target.sum(axis=-1), 1.0):
        raise LossDomainError("CE targets must be probability vectors")
    if np.any(pred < 0):
        raise LossDomainError("CE predictions must be non-negative")
    p = np.clip(pred, EPS, 1.0 - EPS)
    n = pred.shape[0]
    value = -np.sum(target * np.log(p)) / n
    grad = -target / p / n
    grad = np.where((pred > EPS) & (pred < 1.0 - EPS), grad, 0.0)
    return float(value), grad


_LOSSES = {LossKind.MSE: mse, LossKind.BCE: bce, LossKind.CE: ce}


def loss(kind: LossKind | LossSpec | str, pred: np.ndarray, target: np.ndarray):
    role = LossRole.PREDICTION
    if isinstance(kind, LossSpec):
        kind, role = kind.kind, LossRole(kind.role)
    kind = LossKind(kind)
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LossDomainError(f"shape mismatch {pred.shape} vs {target.shape}")
    value, grad = _LOSSES[kind](pred, target)
    if kind is LossKind.BCE and role is LossRole.CONSISTENCY:
        value -= _LOSSES[kind](target, target)[0]
    return value, grad
