"""Synthetic scenarios with known ground truth.

``gen_two_cluster_mar`` builds a two-cluster feature space where each cluster
holds both classes, split along one axis, and labels are observed in only one
cluster. ``mar_split_by_class`` turns any labeled dataset into a MAR split by
under-sampling some classes in the labeled part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import LabeledSet, UnlabeledSet
from .errors import InsufficientData


@dataclass(frozen=True)
class TwoClusterConfig:
    """Geometry of the two-cluster scenario.

    Cluster A sits at the origin. Cluster B sits ``cluster_separation`` away,
    in the direction ``offset_angle`` (radians) measured from the non-boundary
    axis towards ``class_boundary_axis``, so B's class split is shifted
    relative to A's whenever the angle is nonzero. Within a cluster the two
    classes are isotropic Gaussians ``class_margin`` either side of the
    cluster center along ``class_boundary_axis``.
    """

    n_labeled: int = 500
    n_unlabeled: int = 5000
    cluster_separation: float = 10.0
    class_boundary_axis: int = 1
    noise_scale: float = 1.0
    class_margin: float = 2.0
    offset_angle: float = math.pi / 6
    unlabeled_b_fraction: float = 0.5
    dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_labeled < 1 or self.n_unlabeled < 1:
            raise ValueError("counts must be >= 1")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be > 0")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not 0 <= self.class_boundary_axis < self.dim:
            raise ValueError("class_boundary_axis out of range")
        if not 0.0 <= self.unlabeled_b_fraction <= 1.0:
            raise ValueError("unlabeled_b_fraction must be in [0, 1]")

    @property
    def bayes_error(self) -> float:
        """Within-cluster Bayes error, ``Phi(-margin / noise)``."""
        return 0.5 * math.erfc(self.class_margin / self.noise_scale / math.sqrt(2.0))

    def centers(self) -> np.ndarray:
        """Class means, shape (2 clusters, 2 classes, dim)."""
        b = self.class_boundary_axis
        a = 0 if b != 0 else 1
        out = np.zeros((2, 2, self.dim))
        out[1, :, a] = self.cluster_separation * math.cos(self.offset_angle)
        out[1, :, b] = self.cluster_separation * math.sin(self.offset_angle)
        out[:, 0, b] -= self.class_margin
        out[:, 1, b] += self.class_margin
        return out

    def true_posterior(self, X) -> np.ndarray:
        """``p(y | x)`` under the full generator (both clusters), shape (N, 2)."""
        X = np.asarray(X, dtype=np.float64)
        mu = self.centers().reshape(4, self.dim)
        pc = np.array([1 - self.unlabeled_b_fraction, self.unlabeled_b_fraction])
        with np.errstate(divide="ignore"):
            log_w = np.repeat(np.log(pc), 2) + math.log(0.5)
        d2 = ((X[:, None, :] - mu[None, :, :]) ** 2).sum(axis=2)
        lj = log_w[None, :] - 0.5 * d2 / self.noise_scale**2
        per_class = np.stack([logsumexp(lj[:, [0, 2]], axis=1),
                              logsumexp(lj[:, [1, 3]], axis=1)], axis=1)
        return np.exp(per_class - logsumexp(per_class, axis=1, keepdims=True))


def _draw(cfg: TwoClusterConfig, clusters: np.ndarray, rng: np.random.Generator):
    n = clusters.shape[0]
    y = rng.integers(0, 2, size=n)
    mu = cfg.centers()[clusters, y]
    X = mu + cfg.noise_scale * rng.standard_normal((n, cfg.dim))
    return X, y


def _two_cluster(cfg: TwoClusterConfig):
    rng = np.random.default_rng(cfg.seed)
    X1, y1 = _draw(cfg, np.zeros(cfg.n_labeled, dtype=np.int64), rng)
    c0 = (rng.random(cfg.n_unlabeled) < cfg.unlabeled_b_fraction).astype(np.int64)
    X0, y0 = _draw(cfg, c0, rng)
    return X1, y1, X0, y0, c0


def gen_two_cluster_mar(cfg: TwoClusterConfig):
    """Labeled rows from cluster A, unlabeled rows from both clusters.

    Returns
    -------
    (LabeledSet, UnlabeledSet, numpy.ndarray)
        The last item holds the true labels of the unlabeled rows.
    """
    X1, y1, X0, y0, _ = _two_cluster(cfg)
    return LabeledSet(X1, y1), UnlabeledSet(X0), y0


def two_cluster_unlabeled_clusters(cfg: TwoClusterConfig) -> np.ndarray:
    """Boolean mask over the unlabeled rows of ``gen_two_cluster_mar(cfg)``: True in cluster B."""
    return _two_cluster(cfg)[4].astype(bool)


def two_cluster_test_set(cfg: TwoClusterConfig, n: int, seed: int):
    """Fresh test draws from the unlabeled distribution.

    Returns ``(X, y, in_b)`` where ``in_b`` marks rows from the cluster that
    never has labels.
    """
    rng = np.random.default_rng(seed)
    c = (rng.random(n) < cfg.unlabeled_b_fraction).astype(np.int64)
    X, y = _draw(cfg, c, rng)
    return X, y, c.astype(bool)


@dataclass(frozen=True)
class MarSplitConfig:
    rare_labels: frozenset = field(default_factory=frozenset)
    n_labeled_total: int = 1000
    rare_label_fraction: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rare_labels", frozenset(self.rare_labels))
        if self.n_labeled_total < 1:
            raise ValueError("n_labeled_total must be >= 1")
        if not 0.0 <= self.rare_label_fraction < 1.0:
            raise ValueError("rare_label_fraction must be in [0, 1)")


def mar_split_indices(labels, cfg: MarSplitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (labeled, unlabeled) row indices for :func:`mar_split_by_class`."""
    labels = np.asarray(labels)
    N = labels.shape[0]
    if cfg.n_labeled_total >= N:
        raise InsufficientData(
            f"need more than {cfg.n_labeled_total} rows to leave an unlabeled part, got {N}")
    rare = np.isin(labels, list(cfg.rare_labels)) if cfg.rare_labels else np.zeros(N, dtype=bool)
    weight = np.where(rare, cfg.rare_label_fraction, 1.0)
    if np.count_nonzero(weight) < cfg.n_labeled_total:
        raise InsufficientData("not enough non-rare rows for the requested labeled count")
    rng = np.random.default_rng(cfg.seed)
    chosen = rng.choice(N, size=cfg.n_labeled_total, replace=False, p=weight / weight.sum())
    mask = np.zeros(N, dtype=bool)
    mask[chosen] = True
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def mar_split_by_class(features, labels, cfg: MarSplitConfig):
    """Labeled subsample with ``rare_labels`` down-weighted; the rest unlabeled.

    Each rare-label row is ``rare_label_fraction`` times as likely to be drawn
    into the labeled set as any other row.

    Returns
    -------
    (LabeledSet, UnlabeledSet, numpy.ndarray)
        The last item holds the true labels of the unlabeled rows.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    li, ui = mar_split_indices(y, cfg)
    return LabeledSet(X[li], y[li]), UnlabeledSet(X[ui]), y[ui]


def gen_gaussian_classes(n: int, n_classes: int = 10, dim: int = 20, spread: float = 4.0,
                         seed: int = 0):
    """Balanced Gaussian class blobs; a stand-in for image features at desk scale.

    Returns ``(X, y)`` with ``y`` in ``0..n_classes-1``.
    """
    rng = np.random.default_rng(seed)
    centers = spread * rng.standard_normal((n_classes, dim))
    y = rng.integers(0, n_classes, size=n)
    X = centers[y] + rng.standard_normal((n, dim))
    return X, y
