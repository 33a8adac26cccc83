import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from outerface.errors import SingleClass, TooFewPairs
from outerface.evaluation.metrics import (
    ScoredFrame, accuracy_at_threshold, auc_from_scores, average_ranks, calibrate_threshold,
    pair_verification_accuracy, roc_auc, roc_curve, youden_threshold,
)

from oracles import auc_pairs


def _frames(labels, scores, videos=None):
    videos = videos or [f"v{i}" for i in range(len(labels))]
    return [ScoredFrame(f"f{i}", "id", v, bool(y), float(s)) for i, (y, s, v) in enumerate(zip(labels, scores, videos))]


def test_auc_examples():
    assert roc_auc(_frames([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1])).auc == 1.0
    assert roc_auc(_frames([1, 0, 1, 0], [0.5] * 4)).auc == 0.5
    assert roc_auc(_frames([1, 1, 0, 0], [0.8, 0.4, 0.6, 0.2])).auc == 0.75


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        roc_auc(_frames([0, 0], [0.1, 0.2]))
    with pytest.raises(SingleClass):
        calibrate_threshold(_frames([1, 1], [0.1, 0.2]))


def test_non_finite_score_rejected():
    with pytest.raises(ValueError):
        ScoredFrame("f", "i", "v", True, float("nan"))


def test_average_ranks():
    assert average_ranks(np.array([3.0, 1.0, 3.0, 2.0])).tolist() == [3.5, 1.0, 3.5, 2.0]


labelled_scores = st.integers(2, 120).flatmap(lambda n: st.tuples(
    st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda y: any(y) and not all(y)),
    st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 1.0, 1.3, 2.0]) | st.floats(0, 2), min_size=n, max_size=n),
))


grid_scores = st.integers(2, 120).flatmap(lambda n: st.tuples(
    st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda y: any(y) and not all(y)),
    st.lists(st.integers(0, 128).map(lambda k: k / 64), min_size=n, max_size=n),
))


@settings(max_examples=100)
@given(labelled_scores)
def test_auc_matches_pair_counting_oracle(data):
    labels, scores = data
    assert abs(auc_from_scores(labels, scores) - auc_pairs(labels, scores)) < 1e-12


@given(labelled_scores)
def test_auc_complement(data):
    labels, scores = data
    assert auc_from_scores(labels, -np.array(scores)) == pytest.approx(1 - auc_from_scores(labels, scores), abs=1e-12)


@given(grid_scores)
def test_auc_monotone_transform_invariance(data):
    labels, scores = data
    s = np.array(scores)
    for transform in (lambda x: 3 * x + 1, np.exp, lambda x: x ** 3):
        assert abs(auc_from_scores(labels, transform(s)) - auc_from_scores(labels, s)) < 1e-12


@given(labelled_scores)
def test_roc_curve_shape(data):
    labels, scores = data
    curve = np.array(roc_curve(labels, scores))
    assert tuple(curve[0]) == (0.0, 0.0) and tuple(curve[-1]) == (1.0, 1.0)
    assert np.all(np.diff(curve, axis=0) >= 0)
    # trapezoid area under the sweep equals the rank AUC
    area = np.sum(np.diff(curve[:, 0]) * (curve[1:, 1] + curve[:-1, 1]) / 2)
    assert area == pytest.approx(auc_from_scores(labels, scores), abs=1e-12)


def test_curve_csv():
    rep = roc_auc(_frames([1, 0], [0.9, 0.1]))
    assert rep.curve_csv() == "fpr,tpr\n0.0,0.0\n0.0,1.0\n1.0,1.0\n"
    assert (rep.n_real, rep.n_fake) == (1, 1)


def test_accuracy_examples():
    per, overall = accuracy_at_threshold(_frames([0, 0, 0], [0.0] * 3), 0.1)
    assert overall == 1.0
    frames = _frames([1, 1, 0, 1], [0.9, 0.8, 0.2, 0.1], ["a", "a", "b", "b"])
    per, overall = accuracy_at_threshold(frames, 0.5)
    assert per == {"a": 1.0, "b": 0.5} and overall == 0.75


def test_youden_examples():
    assert youden_threshold([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == (0.2, 1.0)
    assert youden_threshold([0, 1, 0, 1], [0.4] * 4) == (0.4, 0.0)
    assert calibrate_threshold(_frames([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])) == 0.2


@given(labelled_scores)
def test_youden_is_optimal_over_candidates(data):
    labels, scores = data
    y, s = np.array(labels), np.array(scores)
    tau, j = youden_threshold(y, s)
    for t in np.unique(s):
        jt = np.mean(s[y] > t) - np.mean(s[~y] > t)
        assert jt <= j + 1e-12
        if t < tau:
            assert jt < j - 1e-12


def _pair(d, same):
    a = np.array([1.0, 0.0])
    c = 1.0 - d
    return a, np.array([c, np.sqrt(max(0.0, 1 - c * c))]), same


def test_pair_verification_perfect():
    pairs = [_pair(0.0, True), _pair(1.0, False)] * 10
    assert pair_verification_accuracy(pairs) == 1.0


def test_pair_verification_inverted_hand_case():
    # held {s.9,d.1}: tau .8 from {s.8,d.2} -> 0 correct; held {s.8,d.2}: tau .9 -> 1 of 2
    pairs = [_pair(0.9, True), _pair(0.1, False), _pair(0.8, True), _pair(0.2, False)]
    assert pair_verification_accuracy(pairs, folds=2) == pytest.approx(0.25)


def test_pair_verification_guards():
    with pytest.raises(TooFewPairs):
        pair_verification_accuracy([_pair(0.0, True)] * 5, folds=10)
    with pytest.raises(TooFewPairs):
        # the lone diff pair sits in the last fold, leaving that fold's training set all-same
        pair_verification_accuracy([_pair(0.0, True)] * 10 + [_pair(1.0, False)])
