import math

import numpy as np
import pytest

from marssl.datagen import (
    MarSplitConfig,
    TwoClusterConfig,
    gen_gaussian_classes,
    gen_two_cluster_mar,
    mar_split_by_class,
    mar_split_indices,
    two_cluster_test_set,
    two_cluster_unlabeled_clusters,
)
from marssl.errors import InsufficientData


def test_sizes_exact():
    cfg = TwoClusterConfig(n_labeled=37, n_unlabeled=91, seed=2)
    d1, d0, truth = gen_two_cluster_mar(cfg)
    assert len(d1) == 37 and len(d0) == 91 and truth.shape == (91,)


@pytest.mark.parametrize("bad", [dict(n_labeled=0), dict(n_unlabeled=0), dict(noise_scale=0.0),
                                 dict(class_boundary_axis=2)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TwoClusterConfig(**bad)


def test_seed_determinism():
    cfg = TwoClusterConfig(seed=5)
    a, b = gen_two_cluster_mar(cfg), gen_two_cluster_mar(cfg)
    np.testing.assert_array_equal(a[0].features, b[0].features)
    np.testing.assert_array_equal(a[1].features, b[1].features)
    np.testing.assert_array_equal(a[2], b[2])


def test_labeled_only_from_cluster_a():
    cfg = TwoClusterConfig(seed=1)
    d1, d0, _ = gen_two_cluster_mar(cfg)
    b_center = cfg.centers()[1].mean(axis=0)
    assert np.all(np.linalg.norm(d1.features - b_center, axis=1) > np.linalg.norm(d1.features, axis=1))
    in_b = two_cluster_unlabeled_clusters(cfg)
    assert 0.4 < in_b.mean() < 0.6
    assert np.allclose(d0.features[in_b].mean(axis=0), b_center, atol=0.15)


def test_separation_zero_is_mcar():
    cfg = TwoClusterConfig(cluster_separation=0.0, n_labeled=2000, n_unlabeled=2000, seed=3)
    d1, d0, _ = gen_two_cluster_mar(cfg)
    diff = d1.features.mean(axis=0) - d0.features.mean(axis=0)
    se = np.sqrt(d1.features.var(axis=0) / len(d1) + d0.features.var(axis=0) / len(d0))
    assert np.all(np.abs(diff) < 3 * se)


def test_bayes_error_closed_form():
    cfg = TwoClusterConfig()
    # Gaussian tail: Phi(-2)
    assert cfg.bayes_error == pytest.approx(0.022750131948179195, abs=1e-15)
    X, y, _ = two_cluster_test_set(cfg, 10_000, seed=4)
    oracle = np.argmax(cfg.true_posterior(X), axis=1)
    assert abs(np.mean(oracle != y) - cfg.bayes_error) < 0.02


def test_same_label_rule_for_both_sets():
    cfg = TwoClusterConfig(seed=6)
    d1, d0, truth = gen_two_cluster_mar(cfg)
    # rule: side of the cluster's class boundary along the boundary axis
    def rule(X, centers):
        c = centers.mean(axis=1)
        near = np.argmin(((X[:, None, :] - c[None]) ** 2).sum(-1), axis=1)
        return (X[:, 1] > c[near, 1]).astype(int)

    centers = cfg.centers()
    a1 = np.mean(rule(d1.features, centers) == d1.labels)
    a0 = np.mean(rule(d0.features, centers) == truth)
    assert abs(a1 - (1 - cfg.bayes_error)) < 0.02
    assert abs(a0 - (1 - cfg.bayes_error)) < 0.02


def test_posterior_same_in_both_clusters():
    cfg = TwoClusterConfig()
    labeled_only = TwoClusterConfig(unlabeled_b_fraction=0.0)
    d1, _, _ = gen_two_cluster_mar(cfg)
    # labeled draws: conditional from the full generator vs cluster A alone
    diff = np.abs(cfg.true_posterior(d1.features) - labeled_only.true_posterior(d1.features))
    assert diff.max() < 1e-6


def test_centers_geometry():
    cfg = TwoClusterConfig()
    c = cfg.centers()
    b = c[1].mean(axis=0)
    assert np.linalg.norm(b) == pytest.approx(10.0)
    assert math.atan2(b[1], b[0]) == pytest.approx(math.pi / 6)
    np.testing.assert_allclose(c[0, 1] - c[0, 0], [0.0, 4.0])


def test_split_sixty_thousand_counts():
    X, y = gen_gaussian_classes(60_000, dim=4, seed=0)
    d1, d0, truth = mar_split_by_class(X, y, MarSplitConfig({0, 1, 7}, 1000, 0.05, seed=0))
    assert len(d1) == 1000 and len(d0) == 59_000 and truth.shape == (59_000,)


def test_split_partition_and_determinism():
    y = np.repeat(np.arange(10), 100)
    cfg = MarSplitConfig({3}, 200, 0.1, seed=4)
    li, ui = mar_split_indices(y, cfg)
    assert np.intersect1d(li, ui).size == 0
    np.testing.assert_array_equal(np.sort(np.concatenate([li, ui])), np.arange(1000))
    li2, _ = mar_split_indices(y, cfg)
    np.testing.assert_array_equal(li, li2)


def test_split_empty_rare_is_uniform():
    y = np.repeat(np.arange(10), 2000)
    li, _ = mar_split_indices(y, MarSplitConfig(frozenset(), 2000, 0.01, seed=1))
    counts = np.bincount(y[li], minlength=10)
    # binomial oracle: 200 +- 3 sigma
    sd = math.sqrt(2000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 200) < 3 * sd)


def test_split_rare_fraction_binomial():
    y = np.repeat(np.arange(10), 10_000)
    li, _ = mar_split_indices(y, MarSplitConfig({0}, 1000, 0.01, seed=2))
    counts = np.bincount(y[li], minlength=10)
    p_rare = 0.01 / (9 + 0.01)
    p_common = 1 / (9 + 0.01)
    assert abs(counts[0] - 1000 * p_rare) <= 3 * math.sqrt(1000 * p_rare * (1 - p_rare)) + 1
    sd = math.sqrt(1000 * p_common * (1 - p_common))
    assert np.all(np.abs(counts[1:] - 1000 * p_common) < 3 * sd)
    assert 1000 * p_common == pytest.approx(111, abs=0.1)


def test_split_insufficient():
    with pytest.raises(InsufficientData):
        mar_split_indices(np.zeros(10), MarSplitConfig(frozenset(), 10))


def test_split_config_validation():
    with pytest.raises(ValueError):
        MarSplitConfig(rare_label_fraction=1.0)
    with pytest.raises(ValueError):
        MarSplitConfig(n_labeled_total=0)
