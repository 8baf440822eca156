import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadiri.errors import LengthMismatch
from roadiri.evaluate import (
    RideClass,
    RideThresholds,
    class_counts,
    classification_accuracy,
    classify,
    format_table,
    metric_json,
    metrics,
    repeatability,
    write_metric_csv,
    write_repeatability_csv,
)


def test_hand_checked_metrics():
    r = metrics([110, 190], [100, 200])
    assert r.rmse == pytest.approx(10.0)
    assert r.mape == pytest.approx(7.5)
    assert r.r2 == pytest.approx(1 - 200 / 5000)
    assert r.n == 2 and r.flags == ()


def test_perfect_prediction():
    r = metrics([50.0, 80.0, 120.0], [50.0, 80.0, 120.0])
    assert (r.rmse, r.mape, r.r2) == (0.0, 0.0, 1.0)


def test_degenerate_cases_are_flagged():
    r = metrics([1.0, 2.0], [5.0, 5.0])
    assert r.r2 is None and "zero_variance" in r.flags
    r = metrics([1.0, 2.0], [0.0, 5.0])
    assert r.mape is None and "zero_truth" in r.flags
    with pytest.raises(LengthMismatch):
        metrics([1.0], [1.0, 2.0])
    with pytest.raises(LengthMismatch):
        metrics([], [])


vals = st.lists(st.floats(1, 400), min_size=2, max_size=40)


@settings(max_examples=100, deadline=None)
@given(vals, st.randoms(use_true_random=False))
def test_symmetry_properties(truth, rnd):
    pred = [t * rnd.uniform(0.5, 1.5) for t in truth]
    assert metrics(pred, truth).rmse == pytest.approx(metrics(truth, pred).rmse)
    assert classification_accuracy(pred, truth) == classification_accuracy(truth, pred)
    assert 0 <= classification_accuracy(pred, truth) <= 100


def test_classify_bands():
    assert classify(80) is RideClass.GOOD
    assert classify(120) is RideClass.FAIR
    assert classify(200) is RideClass.POOR
    assert classify(95) is RideClass.FAIR and classify(170) is RideClass.FAIR
    assert classify(94.999) is RideClass.GOOD and classify(170.001) is RideClass.POOR
    assert classify(50, RideThresholds(40, 60)) is RideClass.FAIR
    with pytest.raises(ValueError):
        RideThresholds(100, 90)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 500), st.floats(0, 500))
def test_classify_is_monotone(a, b):
    order = [RideClass.GOOD, RideClass.FAIR, RideClass.POOR]
    lo, hi = sorted((a, b))
    assert order.index(classify(lo)) <= order.index(classify(hi))


def test_accuracy_examples_and_confusion_oracle():
    truth = np.array([50.0, 60, 70])
    assert classification_accuracy(truth + 10, truth) == 100.0
    assert classification_accuracy(truth + 200, truth) == 0.0
    rng = np.random.default_rng(0)
    t = rng.uniform(20, 250, 300)
    p = t + rng.normal(0, 25, 300)
    band = lambda v: np.digitize(v, [95, 170.0000001])
    conf = np.zeros((3, 3))
    np.add.at(conf, (band(t), band(p)), 1)
    assert classification_accuracy(p, t) == pytest.approx(100 * np.trace(conf) / conf.sum())
    counts = class_counts(t)
    assert sum(counts.values()) == 300 and counts["Good"] == np.sum(t < 95)


def test_repeatability_hand_check():
    rep = repeatability([[100, 100], [120, 100]])
    assert rep.sd[0] == pytest.approx(10.0)
    assert rep.cv[0] == pytest.approx(100 * 10 / 110)
    assert rep.sd[1] == 0 and rep.cv[1] == 0


def test_repeatability_identical_runs_and_scaling():
    runs = np.random.default_rng(1).uniform(50, 150, (4, 20))
    same = repeatability([runs[0]] * 3)
    assert np.all(same.sd == 0) and same.mean_cv == 0
    a = repeatability(runs)
    b = repeatability(runs * 3.7)
    np.testing.assert_allclose(a.cv, b.cv, rtol=1e-12)
    assert a.count_cv_over_20 == int(np.sum(a.cv > 20))


def test_repeatability_errors_and_zero_mean():
    with pytest.raises(LengthMismatch):
        repeatability([[1.0, 2.0]])
    with pytest.raises(LengthMismatch):
        repeatability([[1.0, 2.0], [1.0]])
    rep = repeatability([[0.0, 10.0], [0.0, 12.0]])
    assert rep.zero_mean_segments == (0,)
    assert np.isnan(rep.cv[0]) and rep.mean_cv == pytest.approx(rep.cv[1])


def test_report_outputs():
    r = metrics([110, 190], [100, 200])
    buf = io.StringIO()
    write_metric_csv(r.rows(), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "metric,value" and lines[1].startswith("rmse,10")
    assert json.loads(metric_json(r, accuracy=100.0))["mape"] == pytest.approx(7.5)
    assert "n/a" in format_table(metrics([1.0, 2.0], [5.0, 5.0]).rows())
    buf = io.StringIO()
    write_repeatability_csv(repeatability([[100, 0], [120, 0]]), buf)
    assert buf.getvalue().splitlines() == ["index,mean,sd,cv", "0,110.0,10.0,9.090909090909092", "1,0.0,0.0,"]
