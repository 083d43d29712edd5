import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from camot.errors import InvalidInputError
from camot.geometry import BBox
from camot.metrics import clear_mot, evaluate, idf1, identity_overlaps

A = BBox(0, 0, 10, 10)
B = BBox(100, 0, 10, 10)


def swap_fixture():
    """Two objects over four frames; object 1's prediction changes id at frame 3."""
    gt = {f: [(1, A), (2, B)] for f in range(1, 5)}
    pred = {
        1: [(10, A), (20, B)],
        2: [(10, A), (20, B)],
        3: [(30, A), (20, B)],
        4: [(30, A), (20, B)],
    }
    return gt, pred


def brute_force_idf1(gt, pred, gate=0.5):
    """IDF1 by enumerating every partial one-to-one identity matching."""
    g_ids, p_ids, counts, gsize, psize = identity_overlaps(gt, pred, gate)
    total = int(gsize.sum() + psize.sum())
    if total == 0:
        return 1.0
    best = 0
    n, m = len(g_ids), len(p_ids)
    k = min(n, m)
    for rows in itertools.permutations(range(n), k) if n >= m else [tuple(range(n))]:
        for cols in itertools.permutations(range(m), k) if n < m else [tuple(range(m))]:
            best = max(best, sum(int(counts[r, c]) for r, c in zip(rows, cols)))
    return 2 * best / total


# --------------------------------------------------------------------------
# CLEAR-MOT

def test_perfect_tracking():
    gt, _ = swap_fixture()
    rep = evaluate(gt, gt)
    assert (rep.mota, rep.fp, rep.fn, rep.idsw, rep.idf1) == (1.0, 0, 0, 0, 1.0)


def test_empty_prediction():
    gt = {f: [(i, BBox(20 * i, 0, 10, 10)) for i in range(10)] for f in range(1, 11)}
    rep = evaluate(gt, {})
    assert rep.fn == 100 and rep.fp == 0 and rep.mota == 0.0 and rep.idf1 == 0.0


def test_toy_id_swap():
    gt, pred = swap_fixture()
    rep = clear_mot(gt, pred)
    assert (rep.idsw, rep.fp, rep.fn, rep.num_gt, rep.matches) == (1, 0, 0, 8, 8)
    assert abs(rep.mota - (1 - 1 / 8)) < 1e-12
    assert [s.idsw for s in rep.frames] == [0, 0, 1, 0]


def test_toy_id_swap_idf1():
    gt, pred = swap_fixture()
    # gt1 <-> 10 (2 frames) and gt2 <-> 20 (4 frames): 2 * 6 / (8 + 8)
    assert abs(idf1(gt, pred) - 0.75) < 1e-12
    assert idf1(gt, pred) == brute_force_idf1(gt, pred)


def test_mutual_exchange_counts_two_switches():
    gt = {f: [(1, A), (2, B)] for f in (1, 2)}
    pred = {1: [(10, A), (20, B)], 2: [(20, A), (10, B)]}
    assert clear_mot(gt, pred).idsw == 2


def test_switch_counted_against_last_match_after_gap():
    gt = {1: [(1, A)], 2: [(1, A)], 3: [(1, A)]}
    pred = {1: [(10, A)], 3: [(11, A)]}
    rep = clear_mot(gt, pred)
    assert (rep.fn, rep.idsw) == (1, 1)


def test_previous_correspondence_is_kept():
    # pred 20 overlaps better at frame 2, but 10 still clears the gate
    a2 = BBox(0, 0, 10, 8)
    gt = {1: [(1, A)], 2: [(1, A)]}
    pred = {1: [(10, A)], 2: [(10, a2), (20, A)]}
    rep = clear_mot(gt, pred)
    assert (rep.idsw, rep.fp) == (0, 1)


def test_false_positive_below_gate():
    gt = {1: [(1, A)]}
    pred = {1: [(5, BBox(6, 0, 10, 10))]}
    rep = clear_mot(gt, pred)
    assert (rep.fp, rep.fn, rep.mota) == (1, 1, -1.0)


def test_do_not_consider_rows_are_ignored():
    gt = {1: [(1, A), (2, BBox(100, 0, 10, 10, 0.0))]}
    rep = clear_mot(gt, {1: [(7, A)]})
    assert (rep.num_gt, rep.fn, rep.mota) == (1, 0, 1.0)


def test_errors():
    with pytest.raises(InvalidInputError):
        clear_mot({1: [(1, A), (1, B)]}, {})
    with pytest.raises(InvalidInputError):
        clear_mot({1: [(1, A)]}, {1: [(3, A), (3, B)]})
    with pytest.raises(InvalidInputError):
        clear_mot({}, {1: [(3, A)]})
    with pytest.raises(InvalidInputError):
        clear_mot({1: [(1, A)]}, {}, iou_gate=0.0)


def test_idf1_empty_both():
    assert idf1({}, {}) == 1.0


# --------------------------------------------------------------------------
# IDF1 against the brute-force bijection oracle

slots = [BBox(100 * k, 0, 50, 50) for k in range(6)]
jiggle = [BBox(100 * k + 10, 0, 50, 50) for k in range(6)]  # IoU 0.67 with its slot


@st.composite
def instances(draw):
    n_frames = draw(st.integers(1, 6))
    n_gt = draw(st.integers(1, 5))
    n_pred = draw(st.integers(0, 5))
    gt, pred = {}, {}
    for f in range(1, n_frames + 1):
        gids = draw(st.lists(st.integers(1, n_gt), unique=True, max_size=n_gt))
        gt[f] = [(g, slots[g]) for g in gids]
        rows = []
        used = set()
        for k in draw(st.lists(st.integers(0, 5), unique=True, max_size=n_pred)):
            pid = draw(st.integers(1, max(n_pred, 1)))
            if pid in used:
                continue
            used.add(pid)
            rows.append((pid, draw(st.sampled_from([slots[k], jiggle[k]]))))
        pred[f] = rows
    return gt, pred


@given(instances())
def test_idf1_matches_brute_force(inst):
    gt, pred = inst
    assert abs(idf1(gt, pred) - brute_force_idf1(gt, pred)) < 1e-12


@given(instances())
def test_clear_mot_invariants(inst):
    gt, pred = inst
    if not any(b.conf > 0 for rows in gt.values() for _, b in rows):
        return
    rep = clear_mot(gt, pred)
    assert rep.matches + rep.fn == rep.num_gt
    assert rep.matches + rep.fp == rep.num_pred
    assert rep.idsw <= rep.matches
    assert rep.mota <= 1.0
