import io
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from answerchange.estimators import ate_bound_item, att_item, atu_bound_item, item_effects, test_level
from answerchange.ingest import KeyEntry
from answerchange.response_model import ItemTally, ResponseRecord, tally_item
from answerchange.synthlab import (
    GenConfig,
    LatentUnit,
    brute_force_bounds,
    generate,
    read_truth,
    true_effects,
    verify,
    write_truth,
)


def unit(f, t, y1, initial="A", final="A", ex="e", item="i1"):
    return LatentUnit(ex, item, f, t, y1, f, initial, final)


def test_truth_symmetric_pair():
    units = [unit(0, 1, 1, ex="e1"), unit(1, 1, 0, ex="e2")]
    assert true_effects(units).pooled.ate == 0


def test_truth_all_wr():
    units = [unit(0, 1, 1, ex=f"e{i}") for i in range(4)]
    truth = true_effects(units).pooled
    assert truth.ate == truth.att == 1
    assert truth.atu is None


def test_truth_empty():
    with pytest.raises(ValueError):
        true_effects([])


def test_brute_force_hand_enumeration():
    tally = ItemTally("x", 4, n_ww_retained=2, n_ww_changed=1, n_wr=1, n_rw=1, n_rr=5)
    ate, atu = brute_force_bounds(tally)
    assert ate == (F(-1, 2), F(-3, 10))
    assert atu == (F(-5, 7), F(-3, 7))
    assert ate == ate_bound_item(tally).bound
    assert atu == atu_bound_item(tally).bound


def test_brute_force_no_retained():
    tally = ItemTally("x", 4, n_ww_changed=1, n_wr=2, n_rw=1, n_rr=3)
    ate, atu = brute_force_bounds(tally)
    assert ate[0] == ate[1] and atu == (-1, -1)


def test_generate_no_treatment():
    records, keys, units = generate(GenConfig(p_change_given_wrong=0, p_change_given_right=0, seed=1))
    key_of = {k.item_id: k for k in keys}
    for item in {r.item_id for r in records}:
        tally = tally_item([r for r in records if r.item_id == item], key_of[item].key, 4)
        assert tally.n_wr == tally.n_rw == tally.n_ww_changed == 0
        assert not att_item(tally).defined
    assert all(u.t == 0 for u in units)


def test_generate_all_first_correct():
    _, _, units = generate(GenConfig(p_first_correct=1, p_change_given_right=0.3, seed=2))
    truth = true_effects(units)
    assert truth.pooled.att == -1
    assert {u.f for u in units} == {1}


def test_generate_default_treated_share():
    _, _, units = generate(GenConfig(n_examinees=2000, seed=3))
    share = true_effects(units).pooled.treated_share
    # expectation .3*.08 + .7*.02 = .038; 20000 cells
    se = (0.038 * 0.962 / 20000) ** 0.5
    assert abs(float(share) - 0.038) < 4 * se


def test_generate_deterministic():
    a = generate(GenConfig(seed=42))
    b = generate(GenConfig(seed=42))
    assert a == b
    assert generate(GenConfig(seed=43))[2] != a[2]


def test_generate_unit_invariants():
    records, keys, units = generate(GenConfig(k=5, p_change_given_wrong=0.6, p_change_given_right=0.3, seed=7))
    key_of = {k.item_id: k.key for k in keys}
    for r, u in zip(records, units):
        key = key_of[u.item_id]
        assert u.y0 == u.f
        if u.f:
            assert u.y1 == 0
        y = int(r.final == key)
        assert y == u.y
        if not u.t:
            assert r.final == r.initial
        elif u.y:
            assert r.final == key
        else:
            assert r.final != key and r.final != r.initial


def test_generate_true_false():
    _, _, units = generate(GenConfig(k=2, p_switch_success=1, p_change_given_wrong=0.5, seed=4))
    assert all(u.y1 == 1 - u.f for u in units)
    with pytest.raises(ValueError):
        GenConfig(k=2)


def test_config_errors():
    with pytest.raises(ValueError):
        GenConfig(p_first_correct=1.2)
    with pytest.raises(ValueError):
        GenConfig(n_items=3, p_first_correct=(0.5, 0.5))


def test_weighted_identity_exact():
    _, _, units = generate(GenConfig(seed=9, p_change_given_wrong=0.3))
    t = true_effects(units)
    for truth in [t.pooled, *t.items.values()]:
        if truth.att is not None and truth.atu is not None:
            s = truth.treated_share
            assert truth.ate == s * truth.att + (1 - s) * truth.atu


def test_latent_shares_sum_to_one():
    _, _, units = generate(GenConfig(seed=10))
    assert sum(true_effects(units).latent_shares.values()) == 1


def test_verify_default_population():
    report = verify(*generate(GenConfig(seed=0)))
    assert report.passed, report.failures
    assert report.items_checked == 10 and report.units_checked == 2000


def test_verify_all_right_changers():
    report = verify(*generate(GenConfig(p_change_given_right=1, seed=5)))
    assert report.passed, report.failures


def test_verify_four_unit_population():
    keys = [KeyEntry("i1", "D", 4)]
    rows = [("e1", "A", "D", 0, 1, 1), ("e2", "D", "A", 1, 1, 0), ("e3", "A", "B", 0, 1, 0), ("e4", "D", "D", 1, 0, 0)]
    records = [ResponseRecord(e, "i1", a, b) for e, a, b, *_ in rows]
    units = [LatentUnit(e, "i1", f, t, y1, f, a, b) for e, a, b, f, t, y1 in rows]
    tally = tally_item(records, "D", 4)
    assert att_item(tally).point == 0 == true_effects(units).pooled.att
    assert verify(records, keys, units).passed


def test_verify_flags_tampered_unit():
    records, keys, units = generate(GenConfig(seed=0))
    bad = units[17]
    units[17] = LatentUnit(bad.examinee_id, bad.item_id, bad.f, bad.t, bad.y1, 1 - bad.y0, bad.initial, bad.final)
    report = verify(records, keys, units)
    assert not report.passed
    assert any(f"unit {bad.examinee_id}/{bad.item_id}" in f for f in report.failures)


def test_truth_roundtrip():
    records, _, units = generate(GenConfig(seed=6, n_examinees=20, n_items=3))
    buf = io.StringIO()
    write_truth(units, buf)
    buf.seek(0)
    assert read_truth(buf, records) == units


def test_heterogeneity_realizable():
    cfg = GenConfig(p_switch_success=0.95, p_change_given_wrong=0.3, p_change_given_right=0.01, seed=12)
    truth = true_effects(generate(cfg)[2])
    assert truth.test_att > 0 and truth.test_atu < 0


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32),
    k=st.integers(3, 6),
    p_first=st.floats(0, 1),
    p_wrong=st.floats(0, 1),
    p_right=st.floats(0, 1),
    p_switch=st.floats(0, 1),
    confounded=st.booleans(),
)
def test_identification_and_containment(seed, k, p_first, p_wrong, p_right, p_switch, confounded):
    cfg = GenConfig(
        n_examinees=40, n_items=4, k=k, p_first_correct=p_first, p_change_given_wrong=p_wrong,
        p_change_given_right=p_right, p_switch_success=p_switch, seed=seed, confounded=confounded,
    )
    records, keys, units = generate(cfg)
    report = verify(records, keys, units)
    assert report.passed, report.failures
    effects = []
    truth = true_effects(units)
    for key in keys:
        tally = tally_item([r for r in records if r.item_id == key.item_id], key.key, k)
        eff = item_effects(tally)
        effects.append(eff)
        assert eff.ate.contains(truth.items[key.item_id].ate)
    att, _, _ = test_level(effects)
    assert (att.point if att.defined else None) == truth.test_att
