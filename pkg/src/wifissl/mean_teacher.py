"""Supervised pre-training and Mean Teacher SSL training."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .evaluate import success_rate
from .models import (
    ModelSpec,
    consistency_loss,
    head_targets,
    multi_head_backward,
    multi_head_forward,
    predict,
    prediction_loss,
)
from .nn.optim import AdamState, EarlyStopping, OptimState, ReduceOnPlateau, adam_step
from .nn.params import Parameters, SchemaError
from .preprocess import EncodedBatch
from .rng import Rng, derive_seed

LOG_COLUMNS = ("epoch", "ld", "lc", "lt", "lr", "gamma_dev")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, what: str = "loss"):
        super().__init__(f"non-finite {what} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class SslConfig:
    alpha: float = 0.999
    wc: float = 6.0
    batch_size: int = 32
    scheduler_patience: int = 6
    scheduler_factor: float = 0.75
    early_stop_patience: int = 12
    max_epochs: int = 100
    pretrain_max_epochs: int = 100
    holdout_fraction: float = 0.1
    sae_epochs: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.wc < 0:
            raise ValueError("wc must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    @classmethod
    def hybrid(cls, **kw) -> "SslConfig":
        return cls(**{"alpha": 0.999, "wc": 6.0, "scheduler_patience": 6, **kw})

    @classmethod
    def online(cls, **kw) -> "SslConfig":
        return cls(**{"alpha": 0.9, "wc": 10.0, "scheduler_patience": 10, **kw})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossBreakdown:
    ld: float
    lc: float
    lt: float


@dataclass
class EpochRecord:
    epoch: int
    ld: float
    lc: float
    lt: float
    lr: float
    gamma_dev: float | None = None

    def row(self) -> list[str]:
        g = "" if self.gamma_dev is None else repr(self.gamma_dev)
        return [str(self.epoch), repr(self.ld), repr(self.lc), repr(self.lt), repr(self.lr), g]


@dataclass
class TrainResult:
    params: Parameters
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


def write_log(history: list[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for rec in history:
            w.writerow(rec.row())


def total_loss(ld: float, lc: float, wc: float) -> float:
    return ld + wc * lc


def clone(theta_p: Parameters) -> tuple[Parameters, Parameters]:
    """Student and teacher start as independent copies of the pre-trained weights."""
    return theta_p.clone(), theta_p.clone()


def _batches(n: int, batch_size: int, rng: Rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


class _CyclingStream:
    """Shuffled mini-batches that reshuffle and restart when exhausted."""

    def __init__(self, n: int, batch_size: int, rng: Rng):
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self._it = iter(())

    def next(self) -> np.ndarray:
        idx = next(self._it, None)
        if idx is None:
            self._it = _batches(self.n, self.batch_size, self.rng)
            idx = next(self._it)
        return idx


def _gamma(spec, params, dev: EncodedBatch | None) -> float | None:
    if dev is None or len(dev) == 0:
        return None
    out = predict(spec, params, dev.features)
    bf = dev.bf_targets
    return success_rate(out, bf[:, :3].argmax(1), bf[:, 3:].argmax(1))


def supervised_step(spec, params, batch: EncodedBatch, opt: OptimState, rng: Rng) -> float:
    outs, caches = multi_head_forward(spec, params, batch.features, True, rng)
    ld, g = prediction_loss(spec, outs, head_targets(spec, batch))
    grads = multi_head_backward(spec, params, caches, g)
    adam_step(params, grads, opt.adam, opt.lr())
    return ld


def eval_loss(spec, params, batch: EncodedBatch, chunk: int = 1024) -> float:
    total = 0.0
    for i in range(0, len(batch), chunk):
        part = batch.take(slice(i, i + chunk))
        outs, _ = multi_head_forward(spec, params, part.features)
        total += prediction_loss(spec, outs, head_targets(spec, part))[0] * len(part)
    return total / len(batch)


def holdout_split(n: int, fraction: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (train, held-out) index split; held-out is empty for tiny sets."""
    n_hold = int(round(n * fraction))
    if n_hold == 0 or n_hold >= n:
        return np.arange(n), np.arange(0)
    perm = rng.permutation(n)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def fit_supervised(
    spec: ModelSpec,
    params: Parameters,
    labeled: EncodedBatch,
    cfg: SslConfig,
    max_epochs: int,
    dev: EncodedBatch | None = None,
) -> TrainResult:
    """Supervised training of ``params`` (modified in place).

    The learning-rate schedule follows the epoch-mean training loss; early
    stopping watches the loss on a seeded held-out slice of ``labeled``
    (the training loss when the slice would be empty). Returns the final
    weights.
    """
    if len(labeled) == 0:
        raise ValueError("labeled data is empty")
    root = Rng(derive_seed(cfg.seed, "fit"))
    hold_rng, shuffle_rng, drop_rng = root.spawn(), root.spawn(), root.spawn()
    train_idx, hold_idx = holdout_split(len(labeled), cfg.holdout_fraction, hold_rng)
    train, hold = labeled.take(train_idx), labeled.take(hold_idx)
    opt = OptimState(
        AdamState.for_params(params),
        spec.lr(),
        ReduceOnPlateau(cfg.scheduler_patience, cfg.scheduler_factor),
    )
    stopper = EarlyStopping(cfg.early_stop_patience)
    result = TrainResult(params)
    for epoch in range(1, max_epochs + 1):
        lr_used = opt.lr()["encoder"]
        losses, sizes = [], []
        for idx in _batches(len(train), cfg.batch_size, shuffle_rng):
            losses.append(supervised_step(spec, params, train.take(idx), opt, drop_rng))
            sizes.append(len(idx))
        ld = float(np.average(losses, weights=sizes))
        if not math.isfinite(ld) or not params.all_finite():
            raise DivergenceError(epoch)
        opt.scheduler.step(ld)
        monitor = eval_loss(spec, params, hold) if len(hold) else ld
        result.history.append(EpochRecord(epoch, ld, 0.0, ld, lr_used, _gamma(spec, params, dev)))
        result.best_epoch = epoch
        if stopper.step(monitor):
            break
    return result


def pretrain(
    spec: ModelSpec,
    labeled: EncodedBatch,
    cfg: SslConfig,
    init: Parameters | None = None,
    dev: EncodedBatch | None = None,
) -> TrainResult:
    """Supervised pre-training for at most ``cfg.pretrain_max_epochs`` epochs."""
    params = init.clone() if init is not None else spec.init(derive_seed(cfg.seed, "init"))
    return fit_supervised(spec, params, labeled, cfg, cfg.pretrain_max_epochs, dev)


def ssl_step(
    spec: ModelSpec,
    student: Parameters,
    teacher: Parameters,
    labeled: EncodedBatch,
    unlabeled: np.ndarray,
    cfg: SslConfig,
    opt: OptimState,
    rng: Rng,
) -> tuple[Parameters, Parameters, LossBreakdown]:
    """One Mean Teacher step.

    The student (train mode) is scored against labels on ``labeled`` and
    against the teacher (eval mode, treated as a constant) on ``unlabeled``.
    Adam updates the student in place on ``ld + wc * lc``; the returned
    teacher is ``alpha * teacher + (1 - alpha) * student``.
    """
    if student.schema() != teacher.schema():
        raise SchemaError("student and teacher schemas differ")
    outs_l, caches_l = multi_head_forward(spec, student, labeled.features, True, rng)
    ld, g_ld = prediction_loss(spec, outs_l, head_targets(spec, labeled))
    outs_u, caches_u = multi_head_forward(spec, student, unlabeled, True, rng)
    targets_u, _ = multi_head_forward(spec, teacher, unlabeled)
    lc, g_lc = consistency_loss(spec, outs_u, targets_u)
    grads = multi_head_backward(spec, student, caches_l, g_ld)
    g_lc = {k: cfg.wc * g for k, g in g_lc.items()}
    grads.add_(multi_head_backward(spec, student, caches_u, g_lc))
    adam_step(student, grads, opt.adam, opt.lr())
    new_teacher = teacher.blend(student, cfg.alpha)
    return student, new_teacher, LossBreakdown(ld, lc, total_loss(ld, lc, cfg.wc))


def ssl_train(
    spec: ModelSpec,
    theta_p: Parameters,
    labeled: EncodedBatch,
    unlabeled: np.ndarray,
    cfg: SslConfig,
    dev: EncodedBatch | None = None,
) -> TrainResult:
    """Mean Teacher training from pre-trained weights.

    Each step pairs one labeled and one unlabeled mini-batch; an epoch is one
    pass over the longer stream while the shorter one cycles with
    reshuffling. The schedule and early stopping follow epoch-mean ``lt``;
    the teacher from the lowest-``lt`` epoch is returned.
    """
    unlabeled = np.asarray(unlabeled, dtype=np.float64)
    if len(unlabeled) == 0:
        raise ValueError("unlabeled data is empty")
    if len(labeled) == 0:
        raise ValueError("labeled data is empty")
    student, teacher = clone(theta_p)
    root = Rng(derive_seed(cfg.seed, "ssl"))
    shuffle_rng, drop_rng = root.spawn(), root.spawn()
    opt = OptimState(
        AdamState.for_params(student),
        spec.lr(),
        ReduceOnPlateau(cfg.scheduler_patience, cfg.scheduler_factor),
    )
    stopper = EarlyStopping(cfg.early_stop_patience)
    result = TrainResult(teacher.clone())
    best = math.inf
    steps = math.ceil(max(len(labeled), len(unlabeled)) / cfg.batch_size)
    for epoch in range(1, cfg.max_epochs + 1):
        lr_used = opt.lr()["encoder"]
        lab = _CyclingStream(len(labeled), cfg.batch_size, shuffle_rng)
        unl = _CyclingStream(len(unlabeled), cfg.batch_size, shuffle_rng)
        sums = np.zeros(3)
        for _ in range(steps):
            student, teacher, lb = ssl_step(
                spec, student, teacher, labeled.take(lab.next()), unlabeled[unl.next()],
                cfg, opt, drop_rng,
            )
            sums += (lb.ld, lb.lc, lb.lt)
        ld, lc, lt = (sums / steps).tolist()
        if not math.isfinite(lt) or not student.all_finite():
            raise DivergenceError(epoch)
        opt.scheduler.step(lt)
        result.history.append(EpochRecord(epoch, ld, lc, lt, lr_used, _gamma(spec, teacher, dev)))
        if lt < best:
            best = lt
            result.params = teacher.clone()
            result.best_epoch = epoch
        if stopper.step(lt):
            break
    return result


def ema_half_life(alpha: float) -> float:
    """Steps for a teacher weight's dependence on its old value to halve."""
    return math.log(2.0) / math.log(1.0 / alpha)
