"""UJIIndoorLoc CSV ingest and the deterministic splits used by the experiments.

Datasets are stored column-wise: an integer RSSI matrix and a float label
matrix holding the nine UJIIndoorLoc label columns. Supporting another
fingerprint database means writing another loader that returns the same
:class:`Dataset`; only the UJIIndoorLoc schema is implemented here.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .rng import Rng

N_APS = 520
SENTINEL = 100
RSSI_MIN = -110
RSSI_MAX = 0
N_BUILDINGS = 3
N_FLOORS = 5

AP_COLUMNS = tuple(f"WAP{i:03d}" for i in range(1, N_APS + 1))
LABEL_COLUMNS = (
    "LONGITUDE",
    "LATITUDE",
    "FLOOR",
    "BUILDINGID",
    "SPACEID",
    "RELATIVEPOSITION",
    "USERID",
    "PHONEID",
    "TIMESTAMP",
)
_FLOAT_LABELS = {"LONGITUDE", "LATITUDE"}
# Columns that make up the location label hidden from unlabeled data.
LOCATION_COLUMNS = ("LONGITUDE", "LATITUDE", "FLOOR", "BUILDINGID")


class DataError(Exception):
    """Base class for problems with input data."""


class ParseError(DataError):
    pass


class ValidationError(DataError):
    pass


class LabelAccessError(DataError):
    """Raised when code asks an unlabeled dataset for its location labels."""


class Role(str, enum.Enum):
    LABELED = "labeled"
    UNLABELED = "unlabeled"
    TEST = "test"


@dataclass(frozen=True)
class FingerprintRecord:
    rssi: np.ndarray
    longitude: float
    latitude: float
    floor: int
    building: int
    space_id: int
    relative_position: int
    user_id: int
    phone_id: int
    timestamp: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


class Dataset:
    """Immutable, column-aligned fingerprint collection with a role tag.

    ``rssi`` is ``(n, len(ap_ids))`` int64 in raw dBm units (100 = not
    detected). ``labels`` is ``(n, 9)`` float64 in :data:`LABEL_COLUMNS`
    order. For the unlabeled role the location columns stay in a shadow
    copy that only :meth:`audit_labels` exposes; ``row_ids`` identify the
    source rows so splits can be checked for coverage.
    """

    def __init__(self, rssi, labels, role: Role, ap_ids=AP_COLUMNS, row_ids=None):
        rssi = np.asarray(rssi, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.float64)
        ap_ids = tuple(ap_ids)
        if rssi.ndim != 2 or rssi.shape[1] != len(ap_ids):
            raise ValidationError(
                f"rssi shape {rssi.shape} does not match {len(ap_ids)} AP columns"
            )
        if labels.shape != (rssi.shape[0], len(LABEL_COLUMNS)):
            raise ValidationError(f"label shape {labels.shape} does not match rssi rows")
        if row_ids is None:
            row_ids = np.arange(rssi.shape[0])
        self.role = Role(role)
        self.ap_ids = ap_ids
        self.rssi = _readonly(rssi)
        self._labels = _readonly(labels)
        self.row_ids = _readonly(np.asarray(row_ids, dtype=np.int64))
        _validate(self)

    def __len__(self) -> int:
        return self.rssi.shape[0]

    def __repr__(self) -> str:
        return f"Dataset(role={self.role.value}, n={len(self)}, aps={len(self.ap_ids)})"

    def _column(self, name: str) -> np.ndarray:
        if self.role is Role.UNLABELED and name in LOCATION_COLUMNS:
            raise LabelAccessError(f"{name} is hidden on an unlabeled dataset")
        return self._labels[:, LABEL_COLUMNS.index(name)]

    @property
    def longitude(self) -> np.ndarray:
        return self._column("LONGITUDE")

    @property
    def latitude(self) -> np.ndarray:
        return self._column("LATITUDE")

    @property
    def coords(self) -> np.ndarray:
        return np.column_stack([self.longitude, self.latitude])

    @property
    def floor(self) -> np.ndarray:
        return self._column("FLOOR").astype(np.int64)

    @property
    def building(self) -> np.ndarray:
        return self._column("BUILDINGID").astype(np.int64)

    @property
    def timestamp(self) -> np.ndarray:
        return self._column("TIMESTAMP")

    def audit_labels(self) -> np.ndarray:
        """All nine label columns, including shadow labels. Never train on these."""
        return self._labels

    def record(self, i: int) -> FingerprintRecord:
        row = self._labels[i]
        ints = [int(v) if not math.isnan(v) else -1 for v in row[2:]]
        return FingerprintRecord(self.rssi[i], float(row[0]), float(row[1]), *ints)

    def __iter__(self):
        for i in range(len(self)):
            yield self.record(i)

    def take(self, idx, role: Role | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.rssi[idx],
            self._labels[idx],
            role or self.role,
            self.ap_ids,
            self.row_ids[idx],
        )

    def with_role(self, role: Role) -> "Dataset":
        return Dataset(self.rssi, self._labels, role, self.ap_ids, self.row_ids)

    def with_columns(self, rssi: np.ndarray, ap_ids) -> "Dataset":
        return Dataset(rssi, self._labels, self.role, ap_ids, self.row_ids)

    @staticmethod
    def concat(parts, role: Role | None = None) -> "Dataset":
        parts = list(parts)
        if not parts:
            raise DataError("nothing to concatenate")
        ap_ids = parts[0].ap_ids
        if any(p.ap_ids != ap_ids for p in parts):
            raise DataError("datasets have different AP columns")
        return Dataset(
            np.concatenate([p.rssi for p in parts]),
            np.concatenate([p._labels for p in parts]),
            role or parts[0].role,
            ap_ids,
            np.concatenate([p.row_ids for p in parts]),
        )

    def content_hash(self) -> str:
        """sha256 over RSSI values, all label columns and AP ids, in row order."""
        h = hashlib.sha256()
        h.update("\n".join(self.ap_ids).encode())
        h.update(np.ascontiguousarray(self.rssi).tobytes())
        h.update(np.ascontiguousarray(self._labels).tobytes())
        return h.hexdigest()


def _validate(d: Dataset) -> None:
    r = d.rssi
    bad = (r != SENTINEL) & ((r < RSSI_MIN) | (r > RSSI_MAX))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ValidationError(
            f"row {row}: {d.ap_ids[col]}={r[row, col]} outside [{RSSI_MIN}, {RSSI_MAX}]"
        )
    if d.role is Role.UNLABELED:
        return
    lab = d._labels[:, [LABEL_COLUMNS.index(c) for c in LOCATION_COLUMNS]]
    if np.isnan(lab).any():
        row = int(np.argwhere(np.isnan(lab))[0, 0])
        raise ValidationError(f"row {row}: missing location label on a {d.role.value} dataset")
    b = d._labels[:, LABEL_COLUMNS.index("BUILDINGID")]
    f = d._labels[:, LABEL_COLUMNS.index("FLOOR")]
    for name, v, hi in (("BUILDINGID", b, N_BUILDINGS), ("FLOOR", f, N_FLOORS)):
        bad = (v < 0) | (v >= hi) | (v != np.round(v))
        if bad.any():
            row = int(np.argmax(bad))
            raise ValidationError(f"row {row}: {name}={v[row]} not in 0..{hi - 1}")


def load_csv(path, role: Role | str) -> Dataset:
    """Read a UJIIndoorLoc-format CSV.

    Raises:
        ParseError: header mismatch, wrong column count or a non-numeric
            cell; the message names the 0-based data row.
        ValidationError: RSSI or label values out of range, or a missing
            location label outside the unlabeled role.
    """
    role = Role(role)
    path = Path(path)
    text = path.read_text()
    expected = list(AP_COLUMNS) + list(LABEL_COLUMNS)
    header = next(csv.reader(io.StringIO(text.split("\n", 1)[0])))
    header = [h.strip().strip('"') for h in header]
    if header != expected:
        raise ParseError(f"{path}: header does not match the UJIIndoorLoc schema")
    msg = _locate_bad_row(text, len(expected))
    if msg:
        raise ParseError(f"{path}: {msg}")
    raw = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False).to_numpy()
    values = np.empty(raw.shape, dtype=np.float64)
    for j in range(raw.shape[1]):
        col = raw[:, j]
        try:
            if j >= len(AP_COLUMNS):
                # empty label cells become NaN; Dataset decides whether that is allowed
                col = np.where(col == "", "nan", col)
            values[:, j] = col.astype(np.float64)
        except ValueError:
            for i, cell in enumerate(col):
                try:
                    float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {i}: non-numeric cell {cell!r} in column {expected[j]}"
                    ) from None
    rssi_f = values[:, : len(AP_COLUMNS)]
    if not np.all(rssi_f == np.round(rssi_f)):
        row = int(np.argwhere(rssi_f != np.round(rssi_f))[0, 0])
        raise ParseError(f"{path}: row {row}: RSSI values must be integers")
    return Dataset(rssi_f.astype(np.int64), values[:, len(AP_COLUMNS):], role)


def _locate_bad_row(text: str, width: int) -> str:
    reader = csv.reader(io.StringIO(text))
    next(reader)
    for i, row in enumerate(reader):
        if not row:
            continue
        if len(row) != width:
            return f"row {i}: expected {width} columns, got {len(row)}"
    return ""


def _format_label(name: str, v: float) -> str:
    if math.isnan(v):
        return ""
    if name in _FLOAT_LABELS:
        return repr(float(v))
    return str(int(v))


def write_csv(d: Dataset, path) -> None:
    """Write in the UJIIndoorLoc schema. Shadow labels are written out too."""
    if d.ap_ids != AP_COLUMNS:
        raise DataError("only full 520-column datasets can be written as UJIIndoorLoc CSV")
    labels = d.audit_labels()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(AP_COLUMNS) + list(LABEL_COLUMNS))
        for i in range(len(d)):
            cells = [str(v) for v in d.rssi[i].tolist()]
            cells += [_format_label(n, v) for n, v in zip(LABEL_COLUMNS, labels[i].tolist())]
            w.writerow(cells)


def split_quarters(d: Dataset, seed: int = 42) -> list[Dataset]:
    """Seeded shuffle then four contiguous parts; earlier parts take the remainder."""
    if d.role is not Role.LABELED:
        raise DataError("split_quarters expects a labeled dataset")
    n = len(d)
    if n < 4:
        raise DataError(f"need at least 4 records to split into quarters, got {n}")
    perm = Rng(seed).permutation(n)
    sizes = [n // 4 + (1 if i < n % 4 else 0) for i in range(4)]
    bounds = np.cumsum([0] + sizes)
    return [d.take(perm[bounds[i] : bounds[i + 1]]) for i in range(4)]


def split_online(d: Dataset) -> tuple[Dataset, Dataset]:
    """Sort by timestamp (stable) and halve: first ceil(n/2) unlabeled, rest test."""
    if d.role is not Role.TEST:
        raise DataError("split_online expects a test dataset")
    n = len(d)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    order = np.argsort(d.timestamp, kind="stable")
    half = (n + 1) // 2
    return d.take(order[:half], Role.UNLABELED), d.take(order[half:], Role.TEST)
