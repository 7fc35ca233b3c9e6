"""Likelihood-ratio partition of feature space.

A point is label-informative when, for some class, the labeled class density
exceeds the unlabeled density by more than ``kappa`` in log terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .density import GmmDensity, _as_matrix
from .errors import DimMismatch

DEFAULT_KAPPA = 0.0


@dataclass(frozen=True, eq=False)
class RegionTest:
    """Labeled class densities against one unlabeled density.

    ``labels[i]`` is the class whose density is ``class_densities[i]``.
    ``class_prior`` (optional) is the labeled class prior used when
    pseudo-labels are drawn.
    """

    labels: tuple
    class_densities: tuple
    unlabeled_density: GmmDensity
    kappa: float = DEFAULT_KAPPA
    class_prior: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "class_densities", tuple(self.class_densities))
        if not self.labels:
            raise ValueError("label set must be nonempty")
        if len(self.labels) != len(self.class_densities):
            raise ValueError("one density per label required")
        d = self.unlabeled_density.dim
        if any(q.dim != d for q in self.class_densities):
            raise DimMismatch("all densities must share one dimension")
        if self.class_prior is not None:
            p = np.asarray(self.class_prior, dtype=np.float64)
            if p.shape != (len(self.labels),):
                raise ValueError("class_prior must have one entry per label")
            object.__setattr__(self, "class_prior", p)

    @property
    def dim(self) -> int:
        return self.unlabeled_density.dim

    @property
    def labeled_class_densities(self) -> dict:
        return dict(zip(self.labels, self.class_densities))

    def with_kappa(self, kappa: float) -> "RegionTest":
        return replace(self, kappa=float(kappa))

    def class_logpdf(self, X) -> np.ndarray:
        """Labeled class log-densities, shape (N, |labels|)."""
        X = _as_matrix(X, self.dim)
        return np.column_stack([q.logpdf(X) for q in self.class_densities])

    def ratios(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Max log-likelihood ratio per row and the index of the maximizing label."""
        X = _as_matrix(X, self.dim)
        llr = self.class_logpdf(X) - self.unlabeled_density.logpdf(X)[:, None]
        idx = np.argmax(llr, axis=1)  # first maximum wins ties
        return llr[np.arange(X.shape[0]), idx], idx

    def contains(self, X) -> np.ndarray:
        """Boolean membership for every row; strict ``ratio > kappa``."""
        return self.ratios(X)[0] > self.kappa


def _vector(test: RegionTest, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != test.dim:
        raise DimMismatch(f"expected a vector of length {test.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return x


def log_likelihood_ratio(test: RegionTest, x) -> tuple[float, object]:
    """``max_y [ln q(x|y, labeled) - ln q(x|unlabeled)]`` and its label."""
    x = _vector(test, x)
    val, idx = test.ratios(x[None, :])
    return float(val[0]), test.labels[int(idx[0])]


def in_region(test: RegionTest, x) -> bool:
    x = _vector(test, x)
    return bool(test.contains(x[None, :])[0])


def build_region_test(labels: Sequence, class_densities: Sequence[GmmDensity],
                      unlabeled_density: GmmDensity, kappa: float = DEFAULT_KAPPA,
                      class_prior=None) -> RegionTest:
    return RegionTest(tuple(labels), tuple(class_densities), unlabeled_density, float(kappa),
                      class_prior)
