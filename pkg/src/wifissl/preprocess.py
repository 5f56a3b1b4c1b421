"""Feature normalization, label encoding and noise injection.

RSSI is mapped affinely from [-110, 0] dBm to [0, 1]; "not detected"
(100) maps to 0. Noise is applied in these normalized units.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import N_BUILDINGS, N_FLOORS, RSSI_MAX, RSSI_MIN, SENTINEL, Dataset, ValidationError
from .rng import Rng


def normalize(rssi):
    """Map raw dBm (or the 100 sentinel) to [0, 1]. Works on scalars and arrays."""
    r = np.asarray(rssi, dtype=np.float64)
    sentinel = r == SENTINEL
    bad = ~sentinel & ((r < RSSI_MIN) | (r > RSSI_MAX))
    if np.any(bad):
        raise ValidationError(f"RSSI {r[bad].flat[0]} outside [{RSSI_MIN}, {RSSI_MAX}]")
    out = np.where(sentinel, 0.0, (r - RSSI_MIN) / (RSSI_MAX - RSSI_MIN))
    return out if out.ndim else float(out)


def features(d: Dataset) -> np.ndarray:
    return normalize(d.rssi)


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class NoiseConfig:
    kind: NoiseKind = NoiseKind.GAUSSIAN
    mu: float = 0.0
    sigma: float = 0.1
    clip: float = 0.5
    uniform_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        object.__setattr__(self, "uniform_range", tuple(self.uniform_range))
        if self.kind is NoiseKind.GAUSSIAN and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        lo, hi = self.uniform_range
        if not (hi > 0 and lo == -hi):
            raise ValueError("uniform_range must be [-a, a] with a > 0")


def draw_perturbations(n: int, cfg: NoiseConfig, rng: Rng) -> np.ndarray:
    """Raw perturbation draws, before clipping."""
    if cfg.kind is NoiseKind.GAUSSIAN:
        return rng.normal(n, cfg.mu, cfg.sigma)
    lo, hi = cfg.uniform_range
    return rng.uniform(lo, hi, n)


def inject_noise(x: np.ndarray, cfg: NoiseConfig, seed: int) -> np.ndarray:
    """Perturb detected entries (x > 0) in row-major order; zeros stay zero.

    Each perturbation is clipped to [-clip, clip] and the sum to [0, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size and (x.min() < 0 or x.max() > 1):
        raise ValidationError("features must be normalized to [0, 1]")
    out = x.copy()
    detected = np.flatnonzero(x.ravel() > 0)
    eps = draw_perturbations(detected.size, cfg, Rng(seed))
    eps = np.clip(eps, -cfg.clip, cfg.clip)
    flat = out.reshape(-1)
    flat[detected] = np.clip(flat[detected] + eps, 0.0, 1.0)
    return out


class CoordScale(str, enum.Enum):
    TANH = "tanh"  # [-1, 1]
    UNIT = "unit"  # [0, 1]


@dataclass(frozen=True)
class CoordScaler:
    """Per-coordinate affine map fit on labeled training coordinates."""

    lo: tuple[float, float]
    hi: tuple[float, float]
    convention: CoordScale = CoordScale.TANH

    def __post_init__(self):
        object.__setattr__(self, "convention", CoordScale(self.convention))
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))

    @classmethod
    def fit(cls, coords: np.ndarray, convention: CoordScale | str) -> "CoordScaler":
        coords = np.asarray(coords, dtype=np.float64)
        lo, hi = coords.min(axis=0), coords.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        return cls(tuple(lo), tuple(hi), convention)

    def transform(self, coords: np.ndarray) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        u = (np.asarray(coords, dtype=np.float64) - lo) / (hi - lo)
        return 2.0 * u - 1.0 if self.convention is CoordScale.TANH else u

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        s = np.asarray(scaled, dtype=np.float64)
        u = (s + 1.0) / 2.0 if self.convention is CoordScale.TANH else s
        return lo + u * (hi - lo)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "convention": self.convention.value}

    @classmethod
    def from_dict(cls, d: dict) -> "CoordScaler":
        return cls(tuple(d["lo"]), tuple(d["hi"]), d["convention"])


def decode_coords(scaled, scaler: CoordScaler) -> np.ndarray:
    return scaler.inverse(scaled)


def one_hot(labels: np.ndarray, width: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= width):
        raise ValidationError(f"label outside 0..{width - 1}")
    out = np.zeros((labels.shape[0], width))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass
class EncodedBatch:
    features: np.ndarray
    bf_targets: np.ndarray | None = None
    coord_targets: np.ndarray | None = None
    coord_scaler: CoordScaler | None = None

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, idx) -> "EncodedBatch":
        return EncodedBatch(
            self.features[idx],
            None if self.bf_targets is None else self.bf_targets[idx],
            None if self.coord_targets is None else self.coord_targets[idx],
            self.coord_scaler,
        )


def encode_labels(
    d: Dataset,
    scaler: CoordScaler | None = None,
    convention: CoordScale | str = CoordScale.TANH,
) -> EncodedBatch:
    """Normalize features, one-hot building (3) + floor (5), scale coordinates.

    When ``scaler`` is None one is fit on ``d`` with ``convention``.
    """
    bf = np.hstack([one_hot(d.building, N_BUILDINGS), one_hot(d.floor, N_FLOORS)])
    coords = d.coords
    if scaler is None:
        scaler = CoordScaler.fit(coords, convention)
    return EncodedBatch(features(d), bf, scaler.transform(coords), scaler)


def encode_unlabeled(d: Dataset) -> EncodedBatch:
    return EncodedBatch(features(d))
