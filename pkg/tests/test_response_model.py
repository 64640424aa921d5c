import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from answerchange.ingest import expand_matrix
from answerchange.response_model import (
    ItemTally,
    ResponseRecord,
    ResponseType,
    ValidationError,
    classify,
    impute_rows,
    tally_from_matrix,
    tally_item,
)
from conftest import ITEM1

LABELS4 = ("A", "B", "C", "D")


@pytest.mark.parametrize(
    "initial, final, expected",
    [
        ("D", "D", (ResponseType.RR, 0)),
        ("A", "D", (ResponseType.WR, 1)),
        ("A", "B", (ResponseType.WW_CHANGED, 1)),
        ("D", "C", (ResponseType.RW, 1)),
        ("C", "C", (ResponseType.WW_RETAINED, 0)),
    ],
)
def test_classify_examples(initial, final, expected):
    assert classify(initial, final, "D", 4) == expected


def test_classify_rejects_foreign_label():
    with pytest.raises(ValidationError):
        classify("E", "D", "D", 4)
    with pytest.raises(ValidationError):
        classify("a", "D", "D", 4)


def test_classify_trims_whitespace_and_custom_labels():
    assert classify(" 1", "3 ", "3", 3, labels=["1", "2", "3"]) == (ResponseType.WR, 1)


def test_classify_exhaustive_k4():
    for initial, final, key in itertools.product(LABELS4, repeat=3):
        rtype, t = classify(initial, final, key, 4)
        assert t == int(initial != final)
        if initial == key and final == key:
            assert rtype is ResponseType.RR and t == 0


@given(st.integers(2, 6), st.data())
def test_classify_change_status(k, data):
    labels = "ABCDEF"[:k]
    initial, final, key = (data.draw(st.sampled_from(labels)) for _ in range(3))
    _, t = classify(initial, final, key, k)
    assert t == int(initial != final)


def test_tally_from_item1():
    tally = tally_from_matrix(ITEM1, key_index=3, k=4)
    assert (tally.n_ww_retained, tally.n_ww_changed, tally.n_wr, tally.n_rw, tally.n_rr) == (
        8728, 120, 740, 111, 60086,
    )
    assert tally.n_total == 69785


def test_tally_from_item1_matches_cellwise_classification():
    # independent path: classify each cell and add its count
    totals = dict.fromkeys(ResponseType, 0)
    for r, c in itertools.product(range(4), repeat=2):
        rtype, _ = classify(LABELS4[r], LABELS4[c], "D", 4)
        totals[rtype] += ITEM1[r][c]
    tally = tally_from_matrix(ITEM1, 3, 4)
    assert {rt: tally.count(rt) for rt in ResponseType} == totals


def test_tally_from_matrix_2x2_and_empty():
    t = tally_from_matrix([[3, 1], [2, 4]], key_index=1, k=2)
    assert (t.n_ww_retained, t.n_ww_changed, t.n_wr, t.n_rw, t.n_rr, t.n_total) == (3, 0, 1, 2, 4, 10)
    z = tally_from_matrix([[0] * 4 for _ in range(4)], 0, 4)
    assert z.n_total == 0


def test_tally_from_matrix_negative_cell():
    with pytest.raises(ValidationError):
        tally_from_matrix([[1, -1], [0, 0]], 0, 2)


def test_tally_item_examples():
    recs = [ResponseRecord("e1", "i1", "A", "D"), ResponseRecord("e2", "i1", "D", "D")]
    t = tally_item(recs, "D", 4)
    assert (t.n_wr, t.n_rr, t.n_ww_retained, t.n_ww_changed, t.n_rw) == (1, 1, 0, 0, 0)
    assert tally_item([], "D", 4).n_total == 0


def test_tally_item_duplicate_rejected():
    recs = [ResponseRecord("e1", "i1", "A", "D"), ResponseRecord("e1", "i1", "B", "D")]
    with pytest.raises(ValidationError):
        tally_item(recs, "D", 4)


def test_tally_item_changed_cells_of_item1():
    changed = [[0 if r == c else ITEM1[r][c] for c in range(4)] for r in range(4)]
    records = expand_matrix(changed, LABELS4, "1")
    assert len(records) == 971
    t = tally_item(records, "D", 4)
    assert (t.n_ww_changed, t.n_wr, t.n_rw) == (120, 740, 111)


small_matrix = st.integers(2, 4).flatmap(
    lambda k: st.tuples(
        st.just(k),
        st.lists(st.lists(st.integers(0, 3), min_size=k, max_size=k), min_size=k, max_size=k),
        st.integers(0, k - 1),
    )
)


@given(small_matrix)
def test_matrix_and_record_paths_agree(args):
    k, counts, key_index = args
    labels = "ABCD"[:k]
    from_matrix = tally_from_matrix(counts, key_index, k, item_id="x")
    from_records = tally_item(expand_matrix(counts, labels, "x"), labels[key_index], k, item_id="x")
    assert from_matrix == from_records
    assert from_matrix.n_total == sum(map(sum, counts))


def test_item_tally_invariants():
    with pytest.raises(ValidationError):
        ItemTally("x", 2, n_ww_changed=1)
    with pytest.raises(ValidationError):
        ItemTally("x", 4, n_rr=-1)


def test_impute_rows_true_false():
    rows = impute_rows(2)
    assert [r.tau for r in rows] == [1, 1, -1, -1]
    ww = rows[0]
    assert (ww.t, ww.y1, ww.y0, ww.tau) == (0, 1, 0, 1)
    for r in rows:
        assert r.y1 == 1 - r.f
        assert r.y0 == r.f


def test_impute_rows_k4():
    rows = impute_rows(4)
    assert len(rows) == 6
    by_label = {r.label: r for r in rows}
    rr = by_label["RR"]
    assert (rr.t, rr.y1, rr.y0, rr.tau) == (0, 0, 1, -1)
    assert by_label["WW_retained:null"].tau == 0
    assert by_label["WW_changed"].tau == 0
    assert by_label["WW_retained:gain"].tau == 1
    assert [r.tau for r in rows] == [1, 0, 0, 1, -1, -1]
    assert all(r.y1 is not None for r in rows)


def test_impute_rows_domain():
    with pytest.raises(ValueError):
        impute_rows(1)
