import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trisegnet.data import HARD, SOFT, MaskGrid
from trisegnet.metrics import (
    METRIC_NAMES,
    TABLE_COLUMNS,
    ConfusionCounts,
    aggregate_rows,
    boundary_dice,
    confusion_counts,
    evaluate_pair,
    evaluate_set,
    extract_boundary,
    overlap_metrics,
    rvd,
    surface_distances,
    write_report_csv,
)

from oracles import brute_boundary_dice, brute_surface_distances


def _hard(arr):
    return MaskGrid(np.asarray(arr, dtype=np.float64), HARD)


def _rand_mask(rng, size=16, p=0.5):
    return _hard((rng.random((size, size)) < p).astype(np.float64))


def test_confusion_hand_tally():
    # 4x4 pair counted by hand:
    # gt rows: 1100/1100/0000/0000 (4 fg), ms rows: 1000/1110/0100/0000 (5 fg)
    gt = _hard([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
    ms = _hard([[1, 0, 0, 0], [1, 1, 1, 0], [0, 1, 0, 0], [0, 0, 0, 0]])
    c = confusion_counts(ms, gt)
    assert (c.tp, c.fp, c.fn, c.tn) == (3, 2, 1, 10)
    assert c.total == 16


def test_confusion_requires_hard():
    soft = MaskGrid(np.full((4, 4), 0.4), SOFT)
    with pytest.raises(ValueError):
        confusion_counts(soft, _hard(np.ones((4, 4))))


def test_confusion_shape_mismatch():
    with pytest.raises(ValueError):
        confusion_counts(_hard(np.ones((4, 4))), _hard(np.ones((5, 5))))


def test_overlap_metrics_identity():
    rng = np.random.default_rng(0)
    m = _rand_mask(rng)
    vals = overlap_metrics(confusion_counts(m, m))
    assert vals == (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)


def test_overlap_metrics_hand_case():
    c = ConfusionCounts(tp=25, fp=25, fn=25, tn=25)
    dice, iou, acc, prec, sens, spec = overlap_metrics(c)
    assert dice == 0.5
    assert iou == 1.0 / 3.0
    assert acc == 0.5
    assert prec == 0.5 and sens == 0.5 and spec == 0.5


def test_overlap_metrics_empty_conventions():
    # both masks empty: positive-class ratios are 0/0 -> 1 by convention
    dice, iou, acc, prec, sens, spec = overlap_metrics(ConfusionCounts(0, 0, 0, 16))
    assert (dice, iou, acc, prec, sens, spec) == (1.0,) * 6


@settings(max_examples=200)
@given(
    tp=st.integers(0, 10**6),
    fp=st.integers(0, 10**6),
    fn=st.integers(0, 10**6),
    tn=st.integers(1, 10**6),
)
def test_dice_iou_identity(tp, fp, fn, tn):
    dice, iou = overlap_metrics(ConfusionCounts(tp, fp, fn, tn))[:2]
    assert abs(dice - 2 * iou / (1 + iou)) < 1e-12


def test_rvd_cases():
    gt = _hard(np.pad(np.ones((10, 10)), 3))  # 100 fg
    ms_over = _hard(np.pad(np.ones((10, 12)), 3))  # 120 fg
    ms_under = _hard(np.pad(np.ones((10, 8)), 3))  # 80 fg
    assert rvd(gt, gt) == 0.0
    assert rvd(ms_over, gt) == pytest.approx(0.2, abs=1e-15)
    assert rvd(ms_under, gt) == pytest.approx(0.2, abs=1e-15)
    assert rvd(gt, _hard(np.zeros((16, 16)))) is None


def test_extract_boundary_square():
    # 3x3 block: all but the center pixel are boundary
    arr = np.zeros((8, 8))
    arr[2:5, 2:5] = 1.0
    b = extract_boundary(_hard(arr))
    assert b.sum() == 8
    assert not b[3, 3]


def test_extract_boundary_full_frame_is_ring():
    b = extract_boundary(_hard(np.ones((6, 7))))
    assert b.sum() == 2 * 6 + 2 * 7 - 4
    assert not b[2:-2, 2:-2].any()


def test_extract_boundary_single_pixel():
    arr = np.zeros((5, 5))
    arr[2, 2] = 1.0
    assert extract_boundary(_hard(arr)).sum() == 1


def test_surface_distances_identity():
    rng = np.random.default_rng(1)
    m = _rand_mask(rng)
    if not m.pixels.any():
        pytest.skip("degenerate draw")
    assert surface_distances(m, m) == (0.0, 0.0)


def test_surface_distances_three_four_five():
    a = np.zeros((8, 8))
    b = np.zeros((8, 8))
    a[0, 0] = 1.0
    b[3, 4] = 1.0  # distance 5 by the 3-4-5 triangle
    hd, assd = surface_distances(_hard(a), _hard(b))
    assert hd == 5.0
    assert assd == 5.0


def test_surface_distances_empty_mask_warns():
    m = _hard(np.zeros((8, 8)))
    g = _hard(np.ones((8, 8)))
    with pytest.warns(UserWarning):
        assert surface_distances(m, g) == (None, None)


def test_surface_distances_match_brute_force():
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 25:
        ms = _rand_mask(rng, p=rng.uniform(0.2, 0.8))
        gt = _rand_mask(rng, p=rng.uniform(0.2, 0.8))
        ref = brute_surface_distances(ms.as_bool(), gt.as_bool())
        if ref == (None, None):
            continue
        with np.errstate(all="ignore"):
            got = surface_distances(ms, gt)
        assert got[0] == ref[0]  # exact, not approximate
        assert got[1] == ref[1]
        checked += 1


def test_surface_distances_symmetric():
    rng = np.random.default_rng(3)
    ms, gt = _rand_mask(rng), _rand_mask(rng)
    assert surface_distances(ms, gt) == surface_distances(gt, ms)


def test_boundary_dice_identity():
    rng = np.random.default_rng(4)
    m = _rand_mask(rng, p=0.4)
    dbd_g, dbd_m, sbd = boundary_dice(m, m)
    assert dbd_g == 1.0 and dbd_m == 1.0 and sbd == 1.0


def test_boundary_dice_disjoint_far_masks():
    a = np.zeros((16, 16))
    b = np.zeros((16, 16))
    a[1:3, 1:3] = 1.0
    b[10:14, 10:14] = 1.0
    dbd_g, dbd_m, sbd = boundary_dice(_hard(a), _hard(b))
    assert dbd_g == 0.0 and dbd_m == 0.0 and sbd == 0.0


def test_boundary_dice_empty_boundary_is_none():
    empty = _hard(np.zeros((8, 8)))
    full = _hard(np.ones((8, 8)))
    assert boundary_dice(empty, full) == (None, None, None)


def test_boundary_dice_matches_brute_force():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 25:
        ms = _rand_mask(rng, p=rng.uniform(0.2, 0.8))
        gt = _rand_mask(rng, p=rng.uniform(0.2, 0.8))
        ref = brute_boundary_dice(ms.as_bool(), gt.as_bool())
        if ref == (None, None, None):
            continue
        got = boundary_dice(ms, gt)
        for a, b in zip(got, ref):
            assert abs(a - b) < 1e-12
        checked += 1


def test_boundary_dice_shift_by_one():
    # identical 3x3 squares shifted one pixel: every neighborhood shares
    # mass, so scores are strictly between 0 and 1
    a = np.zeros((8, 8))
    b = np.zeros((8, 8))
    a[2:5, 2:5] = 1.0
    b[2:5, 3:6] = 1.0
    dbd_g, dbd_m, sbd = boundary_dice(_hard(b), _hard(a))
    ref = brute_boundary_dice(b.astype(bool), a.astype(bool))
    assert abs(dbd_g - ref[0]) < 1e-12
    assert abs(dbd_m - ref[1]) < 1e-12
    assert abs(sbd - ref[2]) < 1e-12
    assert 0.0 < sbd < 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**20))
def test_sbd_is_weighted_average(seed):
    rng = np.random.default_rng(seed)
    ms, gt = _rand_mask(rng, size=12), _rand_mask(rng, size=12)
    out = boundary_dice(ms, gt)
    if out == (None, None, None):
        return
    dbd_g, dbd_m, sbd = out
    n_g = int(extract_boundary(gt).sum())
    n_m = int(extract_boundary(ms).sum())
    expect = (dbd_g * n_g + dbd_m * n_m) / (n_g + n_m)
    assert abs(sbd - expect) < 1e-12


def test_boundary_dice_swap_swaps_roles():
    rng = np.random.default_rng(7)
    ms, gt = _rand_mask(rng), _rand_mask(rng)
    g1, m1, s1 = boundary_dice(ms, gt)
    g2, m2, s2 = boundary_dice(gt, ms)
    assert g1 == m2 and m1 == g2 and s1 == s2


def test_metrics_translation_invariant():
    a = np.zeros((20, 20))
    b = np.zeros((20, 20))
    a[2:6, 2:7] = 1.0
    b[3:7, 2:7] = 1.0
    base = evaluate_pair(_hard(b), _hard(a))
    shifted = evaluate_pair(
        _hard(np.roll(b, (4, 5), (0, 1))), _hard(np.roll(a, (4, 5), (0, 1)))
    )
    for k in METRIC_NAMES:
        assert base[k] == shifted[k], k


def test_evaluate_pair_keys_and_types():
    rng = np.random.default_rng(8)
    row = evaluate_pair(_rand_mask(rng), _rand_mask(rng))
    assert tuple(row.keys()) == METRIC_NAMES
    assert all(v is None or isinstance(v, float) for v in row.values())


def test_aggregate_rows_counts_missing():
    rng = np.random.default_rng(9)
    full = evaluate_pair(_rand_mask(rng), _rand_mask(rng))
    with np.errstate(all="ignore"), pytest.warns(UserWarning):
        empty = evaluate_pair(_hard(np.zeros((8, 8))), _hard(np.ones((8, 8))))
    agg = aggregate_rows([full, empty])
    assert agg["count"] == 2
    assert agg["missing"]["hd"] == 1
    assert agg["missing"]["assd"] == 1
    # dice defined on both rows
    assert "dice" not in agg["missing"]
    assert agg["mean"]["dice"] == pytest.approx((full["dice"] + empty["dice"]) / 2)


def test_write_report_csv_column_order(tmp_path):
    rng = np.random.default_rng(10)
    pairs = [(_rand_mask(rng), _rand_mask(rng)) for _ in range(3)]
    report = evaluate_set(pairs)
    out = tmp_path / "report.csv"
    write_report_csv(report, out)
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["image"] + list(TABLE_COLUMNS)
    assert len(rows) == 1 + 3 + 1  # header, per-image, mean row
    assert rows[-1][0] == "mean"


def test_write_report_csv_blank_for_missing(tmp_path):
    with np.errstate(all="ignore"), pytest.warns(UserWarning):
        report = evaluate_set([(_hard(np.zeros((8, 8))), _hard(np.ones((8, 8))))])
    out = tmp_path / "report.csv"
    write_report_csv(report, out, ids=["img_0"])
    with open(out) as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    row = dict(zip(header, rows[1]))
    assert row["image"] == "img_0"
    assert row["hd"] == "" and row["assd"] == ""
    assert row["dice"] != ""
