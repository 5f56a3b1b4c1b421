from __future__ import annotations

from collections.abc import Iterator, Mapping

import numpy as np


class SchemaError(ValueError):
    """Two parameter sets do not share names and shapes."""


class Parameters(Mapping):
    """Ordered name -> float64 array map with a fixed schema.

    Arrays can be updated in place but never reshaped or renamed.
    """

    def __init__(self, tensors: Mapping[str, np.ndarray] | None = None):
        self._t: dict[str, np.ndarray] = {}
        for name, value in (tensors or {}).items():
            if name in self._t:
                raise SchemaError(f"duplicate tensor name {name}")
            self._t[name] = np.array(value, dtype=np.float64, copy=True)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._t[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def __repr__(self) -> str:
        body = ", ".join(f"{k}{v.shape}" for k, v in self._t.items())
        return f"Parameters({body})"

    def schema(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(k, v.shape) for k, v in self._t.items()]

    def check_schema(self, other: "Parameters") -> None:
        if self.schema() != other.schema():
            raise SchemaError("parameter schemas differ")

    def size(self) -> int:
        return int(sum(v.size for v in self._t.values()))

    def clone(self) -> "Parameters":
        return Parameters(self._t)

    def zeros_like(self) -> "Parameters":
        return Parameters({k: np.zeros_like(v) for k, v in self._t.items()})

    def set(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._t[name].shape:
            raise SchemaError(f"{name}: shape {value.shape} != {self._t[name].shape}")
        self._t[name][...] = value

    def blend(self, other: "Parameters", alpha: float) -> "Parameters":
        """``alpha * self + (1 - alpha) * other``, elementwise, as a new set."""
        self.check_schema(other)
        beta = 1.0 - alpha
        return Parameters({k: alpha * v + beta * other[k] for k, v in self._t.items()})

    def add_(self, other: "Parameters", scale: float = 1.0) -> "Parameters":
        self.check_schema(other)
        for k, v in self._t.items():
            v += scale * other[k]
        return self

    def merge(self, other: "Parameters") -> "Parameters":
        """Union of two disjoint parameter sets (self's order first)."""
        out = dict(self._t)
        for k, v in other.items():
            if k in out:
                raise SchemaError(f"duplicate tensor name {k}")
            out[k] = v
        return Parameters(out)

    def subset(self, prefix: str) -> "Parameters":
        return Parameters({k: v for k, v in self._t.items() if k.startswith(prefix)})

    def equals(self, other: "Parameters") -> bool:
        return self.schema() == other.schema() and all(
            np.array_equal(v, other[k]) for k, v in self._t.items()
        )

    def max_abs(self) -> float:
        return max((float(np.abs(v).max()) for v in self._t.values() if v.size), default=0.0)

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self._t.values())
