"""Detection/localisation scoring: hand-checked counts, threshold tuning, reports."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vpkl.evaluate import (
    MetricsReport,
    Threshold,
    Trial,
    aggregate_runs,
    compute_metrics,
    detect,
    prf_percent,
    render_table,
    score_trial,
    tune_threshold,
)


def trial(i, contains, span=None, keyword="a"):
    return Trial(keyword=keyword, query_id=f"q{i}", utterance_id=f"u{i}",
                 contains_keyword=contains, span=span)


# ---------------------------------------------------------------------------
# hand-computed confusion counts


def test_prf_matches_hand_computation():
    p, r, f1, flags = prf_percent(tp=2, fp=1, fn=2)
    assert p == pytest.approx(200.0 / 3.0)
    assert r == pytest.approx(50.0)
    assert f1 == pytest.approx(400.0 / 7.0)
    assert (round(p, 2), round(r, 2), round(f1, 2)) == (66.67, 50.0, 57.14)
    assert flags == []
    # symmetric case: equal misses on both sides collapse P, R and F1
    p, r, f1, _ = prf_percent(tp=2, fp=1, fn=1)
    assert p == r == f1 == pytest.approx(200.0 / 3.0)


def test_prf_zero_denominators_flag_not_crash():
    p, r, f1, flags = prf_percent(0, 0, 0)
    assert (p, r, f1) == (0.0, 0.0, 0.0)
    assert set(flags) == {"precision_zero_denominator", "recall_zero_denominator",
                          "f1_zero_denominator"}
    _, _, f1, flags = prf_percent(0, 3, 2)
    assert f1 == 0.0 and "f1_zero_denominator" in flags


def test_compute_metrics_reproduces_hand_counts():
    outcomes = [
        score_trial(trial(0, True, (2, 5)), True, 3),    # det TP, loc TP
        score_trial(trial(1, True, (0, 4)), True, 2),    # det TP, loc TP
        score_trial(trial(2, True, (1, 3)), False, None),  # det FN
        score_trial(trial(3, True, (1, 3)), False, None),  # det FN
        score_trial(trial(4, False), True, 7),           # det FP, loc FP
        score_trial(trial(5, False), False, None),       # det TN
    ]
    report = compute_metrics(outcomes)
    assert report.counts == {"det_tp": 2, "det_fp": 1, "det_fn": 2, "det_tn": 1,
                             "loc_tp": 2, "loc_fp": 1, "loc_fn": 2}
    assert report.detection["precision"] == pytest.approx(200.0 / 3.0)
    assert report.detection["recall"] == pytest.approx(50.0)
    assert report.detection["f1"] == pytest.approx(400.0 / 7.0)
    assert report.localisation["f1"] == pytest.approx(400.0 / 7.0)


# ---------------------------------------------------------------------------
# trial classification


def test_score_trial_cases():
    hit = score_trial(trial(0, True, (2, 5)), True, 5)
    assert (hit.detection, hit.localisation) == ("TP", "TP")
    off = score_trial(trial(1, True, (2, 5)), True, 6)
    assert off.detection == "TP"
    assert (off.loc_tp, off.loc_fp, off.loc_fn) == (0, 1, 1)
    assert off.localisation == "FP+FN"
    miss = score_trial(trial(2, True, (2, 5)), False, None)
    assert (miss.detection, miss.loc_fn) == ("FN", 1)
    alarm = score_trial(trial(3, False), True, 0)
    assert (alarm.detection, alarm.loc_fp) == ("FP", 1)
    reject = score_trial(trial(4, False), False, None)
    assert (reject.detection, reject.localisation) == ("TN", "TN")


def test_score_trial_and_trial_validation():
    with pytest.raises(ValueError, match="predicted_frame"):
        score_trial(trial(0, True, (1, 2)), True, None)
    with pytest.raises(ValueError, match="predicted_frame"):
        score_trial(trial(0, False), False, 3)
    with pytest.raises(ValueError, match="span"):
        Trial(keyword="a", query_id="q", utterance_id="u", contains_keyword=True)
    with pytest.raises(ValueError, match="span"):
        Trial(keyword="a", query_id="q", utterance_id="u",
              contains_keyword=False, span=(1, 2))
    with pytest.raises(ValueError, match="bad span"):
        Trial(keyword="a", query_id="q", utterance_id="u",
              contains_keyword=True, span=(4, 2))


def test_trial_record_round_trip():
    for t in (trial(0, True, (3, 9)), trial(1, False)):
        assert Trial.from_record(t.to_record()) == t


@st.composite
def outcome_lists(draw):
    outcomes = []
    for i in range(draw(st.integers(1, 25))):
        contains = draw(st.booleans())
        detected = draw(st.booleans())
        span = None
        if contains:
            start = draw(st.integers(0, 15))
            span = (start, start + draw(st.integers(0, 8)))
        t = trial(i, contains, span, keyword=draw(st.sampled_from("abc")))
        frame = draw(st.integers(0, 30)) if detected else None
        outcomes.append(score_trial(t, detected, frame))
    return outcomes


@given(outcome_lists())
def test_localisation_hits_never_exceed_detection_hits(outcomes):
    counts = compute_metrics(outcomes).counts
    assert counts["loc_tp"] <= counts["det_tp"]
    positives = sum(1 for o in outcomes if o.trial.contains_keyword)
    assert counts["det_tp"] + counts["det_fn"] == positives
    assert counts["det_fp"] + counts["det_tn"] == len(outcomes) - positives


# ---------------------------------------------------------------------------
# threshold tuning


def test_tune_threshold_separable():
    th = tune_threshold([(1.0, False), (3.0, True), (2.0, False), (4.0, True)])
    assert th.alpha == pytest.approx(2.5)


def test_tune_threshold_tie_takes_smallest_candidate():
    # anti-separated scores: every candidate yields F1 = 0, so the first
    # (smallest) midpoint wins
    th = tune_threshold([(0.0, True), (1.0, False), (2.0, False)])
    assert th.alpha == pytest.approx(0.5)


def test_tune_threshold_errors():
    with pytest.raises(ValueError, match="empty"):
        tune_threshold([])
    with pytest.raises(ValueError, match="both positive and negative"):
        tune_threshold([(1.0, True), (2.0, True)])
    with pytest.raises(ValueError, match="identical"):
        tune_threshold([(1.0, True), (1.0, False)])


def test_detect_is_strictly_above():
    assert not detect(1.0, Threshold(1.0))
    assert detect(1.0 + 1e-9, Threshold(1.0))
    assert detect(2.0, 1.5), "plain float thresholds are accepted"
    with pytest.raises(ValueError, match="finite"):
        Threshold(float("nan"))


@given(st.lists(st.tuples(st.floats(-100, 100), st.booleans()), min_size=2, max_size=40))
def test_tuned_threshold_is_optimal_over_candidates(dev):
    labels = {lab for _, lab in dev}
    values = sorted({s for s, _ in dev})
    if len(labels) != 2 or len(values) < 2:
        return
    th = tune_threshold(dev)

    def f1_at(alpha):
        tp = sum(1 for s, lab in dev if lab and s > alpha)
        fp = sum(1 for s, lab in dev if not lab and s > alpha)
        fn = sum(1 for s, lab in dev if lab and s <= alpha)
        p, r, f1, _ = prf_percent(tp, fp, fn)
        return f1

    best = max(f1_at((a + b) / 2) for a, b in zip(values, values[1:]))
    assert f1_at(th.alpha) == pytest.approx(best)


# ---------------------------------------------------------------------------
# macro accuracy, aggregation, rendering


def test_macro_accuracy_skips_keywords_without_positives():
    outcomes = [
        score_trial(trial(0, True, (0, 3), keyword="a"), True, 1),   # a: 100%
        score_trial(trial(1, True, (0, 3), keyword="b"), False, None),  # b: 0%
        score_trial(trial(2, False, keyword="c"), False, None),      # c: no positives
    ]
    report = compute_metrics(outcomes)
    assert report.detection["accuracy"] == pytest.approx(50.0)
    assert report.localisation["accuracy"] == pytest.approx(50.0)
    assert report.per_keyword["c"]["n_positive_trials"] == 0
    assert "accuracy_no_positive_trials" not in report.flags


def test_macro_accuracy_flag_when_no_positive_trials_at_all():
    outcomes = [score_trial(trial(0, False), False, None)]
    report = compute_metrics(outcomes)
    assert report.detection["accuracy"] == 0.0
    assert "accuracy_no_positive_trials" in report.flags
    with pytest.raises(ValueError, match="no outcomes"):
        compute_metrics([])


def make_report(det_f1):
    return MetricsReport(
        detection={"precision": det_f1, "recall": det_f1, "f1": det_f1,
                   "accuracy": det_f1},
        localisation={"precision": 0.0, "recall": 0.0, "f1": 0.0, "accuracy": 0.0},
        per_keyword={}, counts={},
    )


def test_aggregate_runs_mean_and_sample_std():
    agg = aggregate_runs([make_report(v) for v in (90.0, 94.0, 98.0)])
    assert agg["n_runs"] == 3
    assert agg["detection"]["f1"]["mean"] == pytest.approx(94.0)
    assert agg["detection"]["f1"]["std"] == pytest.approx(
        float(np.std([90.0, 94.0, 98.0], ddof=1)))
    single = aggregate_runs([make_report(88.0)])
    assert single["detection"]["f1"] == {"mean": 88.0, "std": None}
    with pytest.raises(ValueError, match="nothing"):
        aggregate_runs([])


def test_render_table_smoke():
    agg = aggregate_runs([make_report(v) for v in (90.0, 94.0)])
    text = render_table(agg, title="oracle")
    assert "Detection" in text and "Localisation" in text
    assert "oracle" in text and "±" in text
    flat = render_table(make_report(75.0).to_dict(), title="single")
    assert "±" not in flat and "75.00" in flat
