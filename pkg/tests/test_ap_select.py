import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wifissl.ap_select import apply_mask, build_mask, load_mask, save_mask, unique_counts
from wifissl.data import AP_COLUMNS, LABEL_COLUMNS, DataError, Dataset, Role


def _dataset(rssi, role=Role.LABELED, ap_ids=None):
    n = rssi.shape[0]
    ap_ids = ap_ids or tuple(f"A{i}" for i in range(rssi.shape[1]))
    lab = np.zeros((n, len(LABEL_COLUMNS)))
    return Dataset(rssi, lab, role, ap_ids)


rssi_values = st.sampled_from([100, -30, -60, -80, -100])
matrices = arrays(np.int64, st.tuples(st.integers(1, 12), st.integers(1, 6)), elements=rssi_values)


def test_constant_column_dropped():
    d = _dataset(np.array([[100, 100], [100, -80]]))
    assert build_mask(d).selected_ids == ("A1",)


def test_no_informative_ap_is_an_error():
    with pytest.raises(DataError):
        build_mask(_dataset(np.full((3, 2), 100)))


def test_unique_counts_independent_scan():
    rng = np.random.default_rng(0)
    r = rng.choice([100, -50, -70, -90], size=(30, 8))
    assert unique_counts(r).tolist() == [len(set(r[:, j])) for j in range(8)]


@settings(max_examples=60, deadline=None)
@given(matrices, st.randoms(use_true_random=False))
def test_mask_ignores_row_order(r, rnd):
    if not (unique_counts(r) >= 2).any():
        return
    perm = list(range(r.shape[0]))
    rnd.shuffle(perm)
    a, b = build_mask(_dataset(r)), build_mask(_dataset(r[perm]))
    assert a == b


@settings(max_examples=60, deadline=None)
@given(matrices, matrices)
def test_adding_rows_never_removes_aps(a, extra):
    if a.shape[1] != extra.shape[1] or not (unique_counts(a) >= 2).any():
        return
    base = build_mask(_dataset(a))
    more = build_mask(_dataset(a), _dataset(extra, Role.UNLABELED))
    assert set(base.selected_ids) <= set(more.selected_ids)
    assert len(more) == int((unique_counts(np.vstack([a, extra])) >= 2).sum())


def test_mask_preserves_column_order_and_labels(small_train):
    mask = build_mask(small_train)
    proj = apply_mask(small_train, mask)
    assert list(mask.selected_ids) == [a for a in AP_COLUMNS if a in set(mask.selected_ids)]
    assert proj.rssi.shape == (len(small_train), len(mask))
    assert np.array_equal(proj.audit_labels(), small_train.audit_labels())
    assert apply_mask(proj, mask).content_hash() == proj.content_hash()


def test_full_mask_is_identity(small_train):
    from wifissl.ap_select import SelectionMask

    proj = apply_mask(small_train, SelectionMask(AP_COLUMNS, "x"))
    assert np.array_equal(proj.rssi, small_train.rssi)


def test_missing_ap_is_an_error(small_train):
    mask = build_mask(small_train)
    narrow = apply_mask(small_train, mask)
    from wifissl.ap_select import SelectionMask

    with pytest.raises(DataError):
        apply_mask(narrow, SelectionMask(AP_COLUMNS, "x"))


def test_test_set_projection_width(small_train, small_test):
    mask = build_mask(small_train)
    assert apply_mask(small_test, mask).rssi.shape[1] == len(mask)


def test_mask_file_round_trip(tmp_path, small_train):
    mask = build_mask(small_train)
    save_mask(mask, tmp_path / "m.txt")
    assert load_mask(tmp_path / "m.txt") == mask


def test_mask_rejects_duplicates():
    from wifissl.ap_select import SelectionMask

    with pytest.raises(DataError):
        SelectionMask(("A", "A"), "x")
