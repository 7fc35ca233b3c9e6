import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marssl.errors import LengthMismatch
from marssl.evaluation import (
    accuracy,
    diagram_from_arrays,
    region_decomposed_errors,
    reliability_diagram,
)
from marssl.ssl import Prediction


def preds(labels, q):
    return [Prediction(l, np.array([1 - e, e]), float(e), True, np.zeros(2)) for l, e in zip(labels, q)]


def test_perfect_zero_error():
    d = reliability_diagram(preds([1] * 20, [0.0] * 20), [1] * 20)
    occupied = [b for b in d.bins if b.count]
    assert len(occupied) == 1
    assert occupied[0].empirical_error == 0.0
    assert d.ece == 0.0


def test_hand_count():
    d = reliability_diagram(preds([0] * 10, [0.25] * 10), [0] * 6 + [1] * 4)
    b = d.bins[2]
    assert (b.lo, b.hi, b.count) == (0.2, 0.3, 10)
    assert b.mean_nominal == pytest.approx(0.25)
    assert b.empirical_error == pytest.approx(0.4)
    assert d.ece == pytest.approx(0.15, abs=1e-12)


def test_empty_bins_reported():
    d = reliability_diagram(preds([0], [0.55]), [0])
    assert len(d.bins) == 10
    assert d.bins[0].count == 0 and d.bins[0].mean_nominal is None
    assert d.to_csv().splitlines()[1] == "0.0,0.1,0,,"


def test_upper_edge_in_last_bin():
    d = diagram_from_arrays([1.0, 0.0], [False, True])
    assert d.bins[-1].count == 1 and d.bins[0].count == 1


def test_region_decomposition_mask_false():
    rng = np.random.default_rng(0)
    q = rng.uniform(0, 0.5, 200)
    lab = rng.integers(0, 2, 200)
    truth = rng.integers(0, 2, 200)
    p = preds(lab, q)
    rare, rest = region_decomposed_errors(p, truth, np.zeros(200, dtype=bool))
    assert rare.n == 0
    assert rest == reliability_diagram(p, truth)


def test_region_decomposition_perfect_and_awful():
    p = preds([0] * 10, [0.05] * 10)
    truth = [0] * 5 + [1] * 5
    mask = np.array([True] * 5 + [False] * 5)
    good, bad = region_decomposed_errors(p, truth, mask)
    assert good.empirical_error == 0.0 and bad.empirical_error == 1.0


def test_accuracy_hand_counts():
    assert accuracy(preds([1, 1], [0, 0]), [1, 1]) == 1.0
    assert accuracy(preds([1, 1], [0, 0]), [0, 0]) == 0.0
    assert accuracy(preds([1, 1, 1, 0], [0] * 4), [1, 1, 1, 1]) == 0.75


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        reliability_diagram(preds([1, 1], [0, 0]), [1])
    with pytest.raises(LengthMismatch):
        region_decomposed_errors(preds([1, 1], [0, 0]), [1, 1], [True])


def test_rejects_out_of_range():
    with pytest.raises(ValueError):
        diagram_from_arrays([1.5], [True])


def test_oracle_classifier_calibrated():
    from marssl.datagen import TwoClusterConfig, two_cluster_test_set

    cfg = TwoClusterConfig()
    X, y, _ = two_cluster_test_set(cfg, 10_000, seed=11)
    post = cfg.true_posterior(X)
    d = diagram_from_arrays(1 - post.max(axis=1), np.argmax(post, axis=1) == y)
    assert d.ece < 0.03


@given(q=st.lists(st.floats(0, 1), min_size=2, max_size=200), seed=st.integers(0, 10_000),
       n_bins=st.integers(1, 20))
@settings(max_examples=100, deadline=None)
def test_invariants_and_merge(q, seed, n_bins):
    q = np.array(q)
    correct = np.random.default_rng(seed).random(q.size) < 0.7
    full = diagram_from_arrays(q, correct, n_bins)
    assert full.n == q.size
    assert 0.0 <= full.ece <= 1.0
    assert full.bins[0].lo == 0.0 and full.bins[-1].hi == 1.0
    for a, b in zip(full.bins, full.bins[1:]):
        assert a.hi == b.lo
    for b in full.bins:
        if b.count:
            assert 0.0 <= b.empirical_error <= 1.0
    h = q.size // 2
    merged = diagram_from_arrays(q[:h], correct[:h], n_bins).merge(
        diagram_from_arrays(q[h:], correct[h:], n_bins))
    assert [b.count for b in merged.bins] == [b.count for b in full.bins]
    assert [b.error_count for b in merged.bins] == [b.error_count for b in full.bins]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
@settings(max_examples=50, deadline=None)
def test_ece_zero_when_bins_match(q):
    # an outcome pattern that matches every bin's nominal rate exactly
    q = np.array(q)
    counts = np.ones_like(q, dtype=bool)
    d = diagram_from_arrays(np.zeros_like(q), counts)
    assert d.ece == 0.0
    d1 = diagram_from_arrays(np.ones_like(q), ~counts)
    assert d1.ece == 0.0


def test_overconfidence_direction(fig1):
    _, _, _, _, X, y, in_b, models = fig1
    from marssl.ssl import predict_batch

    p = predict_batch(models["mcar"], X[in_b])
    d = reliability_diagram(p, y[in_b])
    flagged = [b for b in d.bins if b.count >= 50]
    assert flagged
    assert all(b.empirical_error > b.mean_nominal for b in flagged)
