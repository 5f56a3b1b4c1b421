"""Small float64 neural-network engine: layers, losses, Adam, schedules, checkpoints."""

from .layers import Act, Activation, Conv1D, Dense, Dropout, Flatten, Sequential, backward, forward
from .losses import LossKind, LossRole, LossSpec, loss
from .optim import AdamState, EarlyStopping, OptimState, ReduceOnPlateau, adam_step
from .params import Parameters, SchemaError

__all__ = [
    "Act",
    "Activation",
    "AdamState",
    "Conv1D",
    "Dense",
    "Dropout",
    "EarlyStopping",
    "Flatten",
    "LossKind",
    "LossRole",
    "LossSpec",
    "OptimState",
    "Parameters",
    "ReduceOnPlateau",
    "SchemaError",
    "Sequential",
    "adam_step",
    "backward",
    "forward",
    "loss",
]
