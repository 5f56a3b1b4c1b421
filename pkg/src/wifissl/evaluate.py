"""EvAAL error, success rate and relative improvement."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .preprocess import CoordScaler

BUILDING_PENALTY = 50.0
FLOOR_PENALTY = 4.0


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class Predictions:
    building: np.ndarray
    floor: np.ndarray
    coords: np.ndarray  # meters

    def __len__(self) -> int:
        return len(self.building)


@dataclass(frozen=True)
class EvalReport:
    evaal_error: float
    gamma: float
    b_miss: float
    f_miss: float
    mean_euc: float
    per_sample_errors: list
    n: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class ImprovementReport:
    eta: float
    error_ref: float
    error_prop: float


def evaal(pred: Predictions, truth: Dataset) -> EvalReport:
    """Per-sample ``50*[building wrong] + 4*[floor wrong] + 2D distance``, averaged.

    ``gamma`` is the fraction of samples with building and floor both right.
    """
    if len(pred) != len(truth):
        raise EvalError(f"{len(pred)} predictions for {len(truth)} records")
    if len(truth) == 0:
        raise EvalError("nothing to evaluate")
    b_wrong = np.asarray(pred.building) != truth.building
    f_wrong = np.asarray(pred.floor) != truth.floor
    euc = np.linalg.norm(np.asarray(pred.coords, dtype=np.float64) - truth.coords, axis=1)
    per_sample = BUILDING_PENALTY * b_wrong + FLOOR_PENALTY * f_wrong + euc
    return EvalReport(
        evaal_error=float(per_sample.mean()),
        gamma=float(np.mean(~b_wrong & ~f_wrong)),
        b_miss=float(b_wrong.mean()),
        f_miss=float(f_wrong.mean()),
        mean_euc=float(euc.mean()),
        per_sample_errors=per_sample.tolist(),
        n=len(truth),
    )


def improvement(error_ref: float, error_prop: float) -> ImprovementReport:
    """Relative improvement in percent; negative when the proposal is worse."""
    if not error_ref > 0:
        raise EvalError("reference error must be positive")
    return ImprovementReport((error_ref - error_prop) / error_ref * 100.0, error_ref, error_prop)


def decode_predictions(outputs: dict, scaler: CoordScaler) -> Predictions:
    """Argmax classification (ties go to the lowest index), affine coordinate decode.

    Accepts SIMO-DNN outputs (``bf``, ``l``) or CNNLoc outputs (``b``, ``f``, ``l``).
    """
    if "bf" in outputs:
        b_scores, f_scores = outputs["bf"][:, :3], outputs["bf"][:, 3:]
    else:
        b_scores, f_scores = outputs["b"], outputs["f"]
    return Predictions(
        np.argmax(b_scores, axis=1),
        np.argmax(f_scores, axis=1),
        scaler.inverse(outputs["l"]),
    )


def success_rate(outputs: dict, building: np.ndarray, floor: np.ndarray) -> float:
    if "bf" in outputs:
        b, f = outputs["bf"][:, :3].argmax(1), outputs["bf"][:, 3:].argmax(1)
    else:
        b, f = outputs["b"].argmax(1), outputs["f"].argmax(1)
    return float(np.mean((b == building) & (f == floor)))


def format_table(rows: list[dict]) -> str:
    """Aligned text table with Strategy, Model, gamma and EvAAL error columns.

    Each row needs ``strategy``, ``model``, ``gamma`` and ``evaal_error``;
    optional ``label`` (e.g. a case name) and ``*_std`` entries are shown
    when present.
    """
    header = ["", "Strategy", "Model", "gamma", "EvAAL Error"]
    body = []
    for r in rows:
        g = f"{r['gamma']:.3f}"
        e = f"{r['evaal_error']:.2f} [m]"
        if "gamma_std" in r:
            g += f" ± {r['gamma_std']:.3f}"
        if "evaal_error_std" in r:
            e = f"{r['evaal_error']:.2f} ± {r['evaal_error_std']:.2f} [m]"
        body.append([str(r.get("label", "")), r["strategy"], r["model"], g, e])
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in body]
    return "\n".join(lines)
