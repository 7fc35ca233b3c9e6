import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from marssl.density import (
    GmmDensity,
    VbConfig,
    fit_gaussian,
    fit_vb_gmm,
    log_density,
    sample,
    vb_fit,
)
from marssl.errors import DegenerateDataWarning, DimMismatch, EmptyData

LN_INV_2PI = -math.log(2 * math.pi)


def std_normal_2d():
    return GmmDensity(np.ones(1), np.zeros((1, 2)), np.eye(2)[None])


def two_cluster_data(n=2000, seed=3):
    rng = np.random.default_rng(seed)
    centers = np.array([[-3.0, 0.0], [3.0, 0.0]])
    z = rng.integers(0, 2, n)
    return centers[z] + rng.standard_normal((n, 2)), z, centers


# ---------------------------------------------------------------- log_density

def test_log_density_at_mode():
    assert log_density(std_normal_2d(), [0.0, 0.0]) == pytest.approx(-1.8378770664093453, abs=1e-12)
    assert LN_INV_2PI == pytest.approx(-1.837877, abs=1e-6)


def test_log_density_quadratic_term():
    assert log_density(std_normal_2d(), [1.0, 0.0]) == pytest.approx(-2.337877066409345, abs=1e-12)


def test_identical_components_collapse():
    single = std_normal_2d()
    double = GmmDensity(np.array([0.5, 0.5]), np.zeros((2, 2)), np.stack([np.eye(2)] * 2))
    X = np.random.default_rng(0).normal(scale=4, size=(50, 2))
    np.testing.assert_allclose(double.logpdf(X), single.logpdf(X), rtol=0, atol=1e-12)


def test_log_density_matches_scipy(rng):
    w = np.array([0.2, 0.5, 0.3])
    mu = rng.normal(size=(3, 3))
    A = rng.normal(size=(3, 3, 3))
    cov = A @ np.transpose(A, (0, 2, 1)) + np.eye(3)
    q = GmmDensity(w, mu, cov)
    X = rng.normal(size=(40, 3))
    naive = np.log(sum(w[k] * multivariate_normal(mu[k], cov[k]).pdf(X) for k in range(3)))
    np.testing.assert_allclose(q.logpdf(X), naive, rtol=1e-12, atol=1e-12)


def test_log_density_dim_mismatch():
    with pytest.raises(DimMismatch):
        log_density(std_normal_2d(), [0.0, 0.0, 0.0])


def test_log_density_finite_far_in_tail():
    q = GmmDensity(np.ones(1), np.zeros((1, 2)), (1e-6 * np.eye(2))[None])
    v = q.log_density([1e4, -1e4])
    assert np.isfinite(v)


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2))
@settings(max_examples=50, deadline=None)
def test_log_density_never_minus_inf(x):
    q = GmmDensity(np.array([0.3, 0.7]), np.array([[0.0, 0.0], [5.0, 5.0]]),
                   np.stack([np.eye(2), 0.1 * np.eye(2)]))
    assert np.isfinite(q.log_density(x))


# ---------------------------------------------------------------- sample

def test_sample_rejects_zero():
    with pytest.raises(ValueError):
        sample(std_normal_2d(), 0)


def test_sample_concentration():
    q = GmmDensity(np.ones(1), np.array([[5.0, 5.0]]), (1e-6 * np.eye(2))[None])
    X = sample(q, 100, seed=1)
    assert np.all(np.abs(X - 5.0) < 0.01)


def test_sample_deterministic():
    q = std_normal_2d()
    np.testing.assert_array_equal(sample(q, 10, 7), sample(q, 10, 7))


def test_sample_entropy_monte_carlo():
    X, _, _ = two_cluster_data()
    q = fit_vb_gmm(X)
    a = q.logpdf(sample(q, 100_000, seed=1))
    b = q.logpdf(sample(q, 100_000, seed=2))
    se = math.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) < 3 * se


def test_sample_entropy_single_gaussian_closed_form():
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    q = GmmDensity(np.ones(1), np.zeros((1, 2)), cov[None])
    lp = q.logpdf(sample(q, 100_000, seed=3))
    entropy = 0.5 * math.log(np.linalg.det(2 * math.pi * math.e * cov))
    assert abs(-lp.mean() - entropy) < 3 * lp.std() / math.sqrt(lp.size)


# ---------------------------------------------------------------- fit_gaussian

def test_fit_gaussian_single_point():
    q = fit_gaussian(np.array([[1.0, 2.0]]), reg_floor=1e-6)
    np.testing.assert_array_equal(q.means[0], [1.0, 2.0])
    np.testing.assert_allclose(q.covariances[0], 1e-6 * np.eye(2), rtol=1e-12)


def test_fit_gaussian_two_points_mean():
    q = fit_gaussian(np.array([[0.0, 0.0], [2.0, 0.0]]))
    np.testing.assert_array_equal(q.means[0], [1.0, 0.0])


def test_fit_gaussian_empty():
    with pytest.raises(EmptyData):
        fit_gaussian(np.zeros((0, 2)))


def test_fit_gaussian_recovers_parameters(rng):
    mu = np.array([1.0, -2.0, 0.5])
    A = rng.normal(size=(3, 3))
    cov = A @ A.T + np.eye(3)
    X = rng.multivariate_normal(mu, cov, size=5000)
    q = fit_gaussian(X)
    # closed-form MLE on the same draws
    np.testing.assert_allclose(q.means[0], X.mean(axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(q.covariances[0], np.cov(X.T, bias=True), rtol=1e-10, atol=1e-12)
    # and the generator, within 5% relative (scale of the entries)
    assert np.max(np.abs(q.means[0] - mu)) < 0.05 * np.max(np.abs(mu))
    assert np.max(np.abs(q.covariances[0] - cov)) < 0.05 * np.max(np.abs(cov))


# ---------------------------------------------------------------- fit_vb_gmm

def test_vb_single_gaussian_one_dominant_component():
    X = np.random.default_rng(1).standard_normal((2000, 2))
    q = fit_vb_gmm(X, VbConfig(max_components=8))
    k = np.argmax(q.weights)
    assert q.weights[k] >= 0.95
    assert np.linalg.norm(q.means[k]) < 0.1
    # oracle: sample mean of the same draws
    np.testing.assert_allclose(q.means[k], X.mean(axis=0), atol=0.02)


def test_vb_two_clusters_recovered():
    X, _, centers = two_cluster_data()
    q = fit_vb_gmm(X)
    big = q.weights > 0.05
    assert big.sum() == 2
    assert np.all((q.weights[big] >= 0.4) & (q.weights[big] <= 0.6))
    # oracle: nearest-true-mean assignment, then per-cluster sample stats
    assign = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    for c in range(2):
        k = np.argmin(np.linalg.norm(q.means - centers[c], axis=1))
        np.testing.assert_allclose(q.means[k], X[assign == c].mean(axis=0), atol=0.05)
        assert abs(q.weights[k] - np.mean(assign == c)) < 0.02


def test_vb_degenerate_rows():
    X = np.zeros((2, 2))
    with pytest.warns(DegenerateDataWarning):
        q = fit_vb_gmm(X, VbConfig(reg_floor=1e-6))
    assert q.n_components == 1
    np.testing.assert_array_equal(q.means[0], [0.0, 0.0])
    np.testing.assert_array_equal(q.covariances[0], 1e-6 * np.eye(2))


def test_vb_needs_two_rows():
    with pytest.raises(EmptyData):
        fit_vb_gmm(np.zeros((1, 2)))


def test_vb_rejects_nonfinite():
    X = np.random.default_rng(0).normal(size=(10, 2))
    X[3, 1] = np.nan
    with pytest.raises(ValueError):
        fit_vb_gmm(X)


@pytest.mark.parametrize("bad", [dict(max_iters=0), dict(elbo_tol=0.0), dict(reg_floor=0.0),
                                 dict(max_components=0), dict(dirichlet_concentration=-1.0)])
def test_vb_config_validation(bad):
    with pytest.raises(ValueError):
        VbConfig(**bad)


def test_vb_respects_max_components():
    X, _, _ = two_cluster_data()
    q = fit_vb_gmm(X, VbConfig(max_components=3))
    assert q.n_components <= 3


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_elbo_monotone(seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(size=(300, 2)) * [1, 3],
                   rng.normal(size=(200, 2)) + [4, 4],
                   rng.normal(size=(100, 2)) * 0.3 - 3])
    res = vb_fit(X, VbConfig(seed=seed))
    assert res.elbo.size >= 2
    assert np.all(np.diff(res.elbo) >= -1e-8)


def test_seed_determinism_bitwise():
    X, _, _ = two_cluster_data()
    a, b = fit_vb_gmm(X, VbConfig(seed=5)), fit_vb_gmm(X, VbConfig(seed=5))
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covariances, b.covariances)


def test_permutation_invariance():
    X, _, _ = two_cluster_data(n=800)
    perm = np.random.default_rng(9).permutation(X.shape[0])
    a, b = fit_vb_gmm(X), fit_vb_gmm(X[perm])
    grid = np.random.default_rng(10).uniform(-8, 8, size=(200, 2))
    assert np.max(np.abs(a.logpdf(grid) - b.logpdf(grid))) < 1e-6


def test_invariants_after_fit():
    X, _, _ = two_cluster_data()
    cfg = VbConfig()
    q = fit_vb_gmm(X, cfg)
    assert np.all(q.weights >= 0) and abs(q.weights.sum() - 1) < 1e-9
    for c in q.covariances:
        np.testing.assert_array_equal(c, c.T)
        assert np.linalg.eigvalsh(c).min() >= cfg.reg_floor * (1 - 1e-9)


def test_pruning_threshold():
    X, _, _ = two_cluster_data()
    res = vb_fit(X)
    # every surviving component carries at least 1/(10 N) of the posterior mass
    assert np.all(res.density.weights >= 1.0 / (10 * X.shape[0]) * 0.5)


def test_normalization_on_grid():
    X, _, _ = two_cluster_data()
    q = fit_vb_gmm(X)
    sd = np.sqrt(np.array([np.diag(c) for c in q.covariances]))
    lo = (q.means - 8 * sd).min(axis=0)
    hi = (q.means + 8 * sd).max(axis=0)
    xs = np.linspace(lo[0], hi[0], 600)
    ys = np.linspace(lo[1], hi[1], 600)
    G = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    dens = np.exp(q.logpdf(G)).reshape(600, 600)
    mass = trapezoid(trapezoid(dens, ys, axis=1), xs)
    assert abs(mass - 1.0) < 0.01


# ---------------------------------------------------------------- serialization

def test_json_round_trip_exact():
    X, _, _ = two_cluster_data()
    q = fit_vb_gmm(X)
    doc = json.loads(json.dumps(q.to_dict()))
    assert doc["dim"] == 2
    assert len(doc["components"][0]["covariance"]) == 4
    r = GmmDensity.from_dict(doc)
    assert r == q
    pts = np.random.default_rng(0).normal(size=(30, 2))
    np.testing.assert_array_equal(r.logpdf(pts), q.logpdf(pts))


def test_density_is_immutable():
    q = std_normal_2d()
    with pytest.raises(ValueError):
        q.means[0, 0] = 1.0


def test_rejects_bad_weights():
    with pytest.raises(ValueError):
        GmmDensity(np.array([0.5, 0.6]), np.zeros((2, 1)), np.ones((2, 1, 1)))


def test_concurrent_reads_consistent():
    from concurrent.futures import ThreadPoolExecutor

    X, _, _ = two_cluster_data()
    q = fit_vb_gmm(X)
    pts = np.random.default_rng(1).normal(size=(500, 2))
    expected = q.logpdf(pts)
    with ThreadPoolExecutor(4) as ex:
        outs = list(ex.map(lambda _: q.logpdf(pts), range(16)))
    for o in outs:
        np.testing.assert_array_equal(o, expected)


def test_no_warnings_on_regular_fit():
    X, _, _ = two_cluster_data(n=500)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit_vb_gmm(X)
