import math

import numpy as np
import pytest

from demakeup.evaluation import (
    EstimationShift,
    EvalReport,
    ScoreSet,
    age_group_accuracy,
    age_report,
    build_score_set,
    demographic_slice,
    identity_report,
    mae,
    minor_adult_accuracy,
    operating_point,
    roc,
    shift_stats,
    t_confidence_interval,
    t_quantile,
    tmr_at_fmr,
)
from oracles import (
    T_TABLE_975,
    group_accuracy_loop,
    mae_loop,
    minor_adult_loop,
    roc_bruteforce,
    shift_split_loop,
    tmr_at_fmr_bruteforce,
)


def dyadic_ages(rng, n, lo=0, hi=69):
    # multiples of 1/8 keep every sum exact in binary floating point
    return np.round(rng.uniform(lo, hi, n) * 8) / 8


def test_age_metrics_match_loops():
    rng = np.random.default_rng(0)
    truth = dyadic_ages(rng, 1000)
    pred = np.clip(truth + np.round(rng.normal(0, 6, 1000) * 8) / 8, 0, 80)
    assert mae(pred, truth) == mae_loop(pred, truth)
    assert age_group_accuracy(pred, truth) == group_accuracy_loop(pred, truth)
    assert minor_adult_accuracy(pred, truth) == minor_adult_loop(pred, truth)


def test_group_boundaries():
    # integer bin edges; fractional ages belong to the bin of their floor
    assert age_group_accuracy([2.9], [0.0]) == 1.0
    assert age_group_accuracy([3.0], [2.0]) == 0.0
    assert age_group_accuracy([69.5], [50]) == 1.0
    assert age_group_accuracy([75], [50]) == 0.0
    assert minor_adult_accuracy([18.0, 17.99], [18.0, 17.0]) == 1.0


def test_metric_input_errors():
    with pytest.raises(ValueError):
        mae([1, 2], [1])
    with pytest.raises(ValueError):
        mae([], [])


def test_roc_matches_bruteforce():
    rng = np.random.default_rng(1)
    gen = np.round(rng.normal(0.6, 0.15, 1000), 3)
    imp = np.round(rng.normal(0.1, 0.15, 1000), 3)
    curve = roc(ScoreSet(gen, imp))
    brute = roc_bruteforce(gen.tolist(), imp.tolist())
    assert len(curve) == len(brute)
    for (th, fm, tm), row in zip(brute, curve.rows()):
        assert (row["threshold"], row["fmr"], row["tmr"]) == (th, fm, tm)
    for target in (1e-4, 1e-3, 0.01, 0.1, 0.5):
        assert tmr_at_fmr(curve, target) == tmr_at_fmr_bruteforce(gen, imp, target)


def test_roc_invariants():
    rng = np.random.default_rng(2)
    curve = roc(ScoreSet(rng.normal(size=300), rng.normal(size=700)))
    assert np.all(np.diff(curve.fmr) >= 0) and np.all(np.diff(curve.tmr) >= 0)
    assert (curve.fmr[0], curve.tmr[0], curve.fmr[-1], curve.tmr[-1]) == (0, 0, 1, 1)


def test_operating_point_bracket():
    curve = roc(ScoreSet([0.9, 0.8, 0.4], [0.85, 0.3, 0.2, 0.1]))
    op = operating_point(curve, 0.0)
    assert (op.threshold, op.tmr, op.fmr) == (0.9, 1 / 3, 0.0)
    assert op.next_fmr == 0.25 and op.next_threshold == 0.85
    assert operating_point(curve, 1.0).tmr == 1.0


def test_score_set_validation_and_building():
    with pytest.raises(ValueError):
        ScoreSet([], [0.1])
    with pytest.raises(ValueError):
        ScoreSet([np.nan], [0.1])
    rng = np.random.default_rng(3)
    emb = rng.normal(size=(20, 8))
    ids = [f"s{k // 2}" for k in range(20)]
    s = build_score_set(emb, emb, ids, impostor_ratio=10, seed=0)
    assert s.genuine.size == 20 and s.impostor.size == 200
    np.testing.assert_allclose(s.genuine, 1.0)
    s2 = build_score_set(emb, emb, ids, impostor_ratio=10, seed=0)
    assert np.array_equal(s.impostor, s2.impostor)
    with pytest.raises(ValueError):
        build_score_set(emb[:2], emb[:2], ["a", "a"])


def test_shift_stats_match_loop():
    rng = np.random.default_rng(4)
    before = dyadic_ages(rng, 1000)
    after = before + np.round(rng.normal(0, 4, 1000) * 8) / 8
    after[:50] = before[:50]
    st = shift_stats(EstimationShift(before, after))
    (nu, mu, su), (no, mo, so), same = shift_split_loop(before.tolist(), after.tolist())
    assert (st.under.count, st.over.count, st.unchanged) == (nu, no, same)
    assert st.under.mean == mu and st.over.mean == mo
    assert st.under.std == pytest.approx(su, rel=1e-12) and st.over.std == pytest.approx(so, rel=1e-12)


def test_shift_stats_small_groups():
    st = shift_stats(EstimationShift([10, 20], [12, 20]))
    assert st.over.count == 1 and math.isnan(st.over.std)
    assert st.under.count == 0 and math.isnan(st.under.mean)
    assert st.unchanged == 1


def test_t_quantile_against_tables():
    for df, t in T_TABLE_975.items():
        assert t_quantile(0.975, df) == pytest.approx(t, abs=1e-4)
    assert t_quantile(0.5, 3) == 0.0
    assert t_quantile(0.025, 4) == pytest.approx(-2.7764, abs=1e-4)
    with pytest.raises(ValueError):
        t_quantile(1.0, 3)


def test_t_interval_small_sample():
    lo, hi, m = t_confidence_interval([1, 2, 3, 4, 5])
    assert m == pytest.approx(1.963, abs=1e-3)
    assert (lo, hi) == pytest.approx((1.037, 4.963), abs=1e-3)
    with pytest.raises(ValueError):
        t_confidence_interval([1.0])


def test_demographic_slice():
    out = demographic_slice([(20, 22, "a"), (30, 30, "b"), (10, 16, "a")])
    assert out == {"a": {"count": 2, "mae": 4.0}, "b": {"count": 1, "mae": 0.0}}
    with pytest.raises(ValueError):
        demographic_slice([(1, 1, "")])


def test_reports_round_trip(tmp_path):
    rep = age_report([20, 30, 15, 40], [22, 28, 17, 45], groups=["x", "y", "x", "y"], before=[25, 25, 16, 41])
    assert rep.metrics["mae"] == 2.75
    path = rep.to_csv(tmp_path / "r.csv")
    back = EvalReport.from_csv(path)
    assert back.groups == rep.groups
    assert all(back.metrics[k] == pytest.approx(v, nan_ok=True) for k, v in rep.metrics.items())
    assert "mae" in rep.summary()
    irep, curve = identity_report(ScoreSet([0.9, 0.7], [0.8, 0.1]), 0.0)
    assert irep.metrics["tmr"] == 0.5 and len(curve) == 6
