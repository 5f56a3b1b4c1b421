"""Unique-value AP selection.

An AP is kept when its raw RSSI column (sentinel included) takes at least
two distinct values over the merged labeled + unlabeled rows. Test data
never contributes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataError, Dataset


@dataclass(frozen=True)
class SelectionMask:
    selected_ids: tuple[str, ...]
    source_fingerprint: str

    def __post_init__(self):
        if not self.selected_ids:
            raise DataError("selection mask is empty")
        if len(set(self.selected_ids)) != len(self.selected_ids):
            raise DataError("selection mask contains duplicate AP ids")

    def __len__(self) -> int:
        return len(self.selected_ids)


def _merged_fingerprint(rssi: np.ndarray, ap_ids) -> str:
    # rows sorted lexicographically so the digest ignores row order
    order = np.lexsort(rssi.T[::-1]) if rssi.shape[0] else np.arange(0)
    h = hashlib.sha256()
    h.update("\n".join(ap_ids).encode())
    h.update(np.ascontiguousarray(rssi[order]).tobytes())
    return h.hexdigest()


def unique_counts(rssi: np.ndarray) -> np.ndarray:
    """Number of distinct values in every column."""
    s = np.sort(rssi, axis=0)
    return 1 + (np.diff(s, axis=0) != 0).sum(axis=0)


def build_mask(labeled: Dataset, unlabeled: Dataset | None = None) -> SelectionMask:
    parts = [labeled] if unlabeled is None or len(unlabeled) == 0 else [labeled, unlabeled]
    if any(p.ap_ids != labeled.ap_ids for p in parts):
        raise DataError("labeled and unlabeled data have different AP columns")
    rssi = np.concatenate([p.rssi for p in parts])
    if rssi.shape[0] == 0:
        raise DataError("cannot select APs from zero rows")
    keep = unique_counts(rssi) >= 2
    if not keep.any():
        raise DataError("no AP has two or more distinct values")
    ids = tuple(a for a, k in zip(labeled.ap_ids, keep) if k)
    return SelectionMask(ids, _merged_fingerprint(rssi, labeled.ap_ids))


def apply_mask(d: Dataset, mask: SelectionMask) -> Dataset:
    pos = {a: i for i, a in enumerate(d.ap_ids)}
    missing = [a for a in mask.selected_ids if a not in pos]
    if missing:
        raise DataError(f"mask references APs absent from the dataset: {missing[:5]}")
    cols = np.array([pos[a] for a in mask.selected_ids], dtype=np.int64)
    return d.with_columns(d.rssi[:, cols], mask.selected_ids)


def save_mask(mask: SelectionMask, path) -> None:
    lines = [f"# {mask.source_fingerprint}", *mask.selected_ids]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mask(path) -> SelectionMask:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise DataError(f"{path}: missing fingerprint header line")
    return SelectionMask(tuple(lines[1:]), lines[0][1:].strip())
