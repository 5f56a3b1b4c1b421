"""Synthetic UJIIndoorLoc-format data: log-distance path loss from random
AP positions over three buildings with up to five floors."""

from __future__ import annotations

import numpy as np

from wifissl.data import AP_COLUMNS, LABEL_COLUMNS, N_APS, SENTINEL, Dataset, Role

ORIGIN = np.array([-7690.0, 4864740.0])
BUILDING_OFFSETS = np.array([[0.0, 200.0], [150.0, 100.0], [300.0, 0.0]])
FLOORS_PER_BUILDING = (4, 4, 5)


def make_uji(n: int, seed: int = 0, n_active: int = 80, role=Role.LABELED, t0: int = 1_370_000_000):
    """``n`` fingerprints; only the first ``n_active`` APs ever hear anything."""
    rng = np.random.default_rng(seed)
    ap_rng = np.random.default_rng(12345)  # AP layout is shared by every call
    ap_building = ap_rng.integers(0, 3, n_active)
    ap_xy = ORIGIN + BUILDING_OFFSETS[ap_building] + ap_rng.uniform(0, 100, (n_active, 2))
    ap_floor = np.array([ap_rng.integers(0, FLOORS_PER_BUILDING[b]) for b in ap_building])

    building = rng.integers(0, 3, n)
    floor = np.array([rng.integers(0, FLOORS_PER_BUILDING[b]) for b in building])
    xy = ORIGIN + BUILDING_OFFSETS[building] + rng.uniform(0, 100, (n, 2))

    rssi = np.full((n, N_APS), SENTINEL, dtype=np.int64)
    dist = np.linalg.norm(xy[:, None, :] - ap_xy[None, :, :], axis=2) + 1.0
    floor_gap = np.abs(floor[:, None] - ap_floor[None, :]) * 12.0
    wall = (building[:, None] != ap_building[None, :]) * 25.0
    level = -30.0 - 25.0 * np.log10(dist) - floor_gap - wall + rng.normal(0, 3.0, dist.shape)
    level = np.round(level).astype(np.int64)
    heard = level >= -100
    rssi[:, :n_active] = np.where(heard, np.clip(level, -104, 0), SENTINEL)

    labels = np.zeros((n, len(LABEL_COLUMNS)))
    labels[:, 0], labels[:, 1] = xy[:, 0], xy[:, 1]
    labels[:, 2], labels[:, 3] = floor, building
    labels[:, 4] = rng.integers(1, 250, n)
    labels[:, 5] = rng.integers(1, 3, n)
    labels[:, 6] = rng.integers(0, 19, n)
    labels[:, 7] = rng.integers(1, 25, n)
    labels[:, 8] = t0 + rng.permutation(n) * 7
    return Dataset(rssi, labels, role, AP_COLUMNS)
