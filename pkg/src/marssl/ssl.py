"""Semi-supervised generative classification with labels missing at random.

The proposed method (:func:`fit_mar`) fits initial densities, pseudo-labels
only the unlabeled points that fall in the label-informative region, and
then combines a labeled model (fitted on the augmented set) with a
class-independent unlabeled model (fitted on the rest) through the mixture
weight ``w = |D'| / (|D'| + |D''|)``. Points far from any labeled data fall
back towards a uniform label distribution instead of an extrapolated,
overconfident one.

Two baselines share the same :class:`MarModel` container and prediction
path: self-training that pseudo-labels every unlabeled point
(:func:`fit_mcar_selftrain`) and a labeled-data-only fit
(:func:`fit_supervised`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import LabeledSet, UnlabeledSet
from .density import GmmDensity, VbConfig, _as_matrix, fit_gaussian, fit_vb_gmm
from .errors import DimMismatch, EmptyClassWarning, EmptyData
from .partition import DEFAULT_KAPPA, RegionTest

METHODS = ("mar", "mcar", "supervised")
FORMAT = "marssl-model"
FORMAT_VERSION = 1


def _native(v):
    return v.item() if isinstance(v, np.generic) else v


def split_seed(seed: int) -> tuple[int, int, int]:
    """Derive (init, sampling, fitting) seeds from one master seed."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return tuple(int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(3))


def _sub_seeds(seed: int, n: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(n)]


def _resolve_labels(d1: LabeledSet, label_set: Sequence | None) -> tuple:
    present = sorted({_native(v) for v in d1.labels.tolist()})
    if label_set is None:
        return tuple(present)
    labels = tuple(_native(v) for v in label_set)
    if len(set(labels)) != len(labels):
        raise ValueError("label_set has duplicates")
    extra = set(present) - set(labels)
    if extra:
        raise ValueError(f"labels {sorted(extra)} not in the declared label set")
    return labels


def class_prior_from_counts(counts) -> np.ndarray:
    """Empirical label frequencies; add-one smoothed if any class is empty."""
    c = np.asarray(counts, dtype=np.float64)
    if np.any(c == 0):
        c = c + 1.0
    return c / c.sum()


def _fit_density(X: np.ndarray, cfg: VbConfig, seed: int) -> GmmDensity:
    # too few rows for a mixture covariance: single Gaussian
    if X.shape[0] < max(3 * X.shape[1], 2):
        return fit_gaussian(X, cfg.reg_floor)
    return fit_vb_gmm(X, cfg.replace(seed=seed))


def _fit_classes(feats: np.ndarray, labels: np.ndarray, label_set: tuple,
                 cfg: VbConfig, seed: int):
    seeds = _sub_seeds(seed, len(label_set))
    counts = np.array([np.sum(labels == y) for y in label_set], dtype=np.int64)
    pooled = None
    dens = []
    for y, n_y, s in zip(label_set, counts, seeds):
        if n_y == 0:
            warnings.warn(f"class {y!r} has no samples; using the pooled density",
                          EmptyClassWarning, stacklevel=3)
            if pooled is None:
                pooled = fit_gaussian(feats, cfg.reg_floor)
            dens.append(pooled)
        else:
            dens.append(_fit_density(feats[labels == y], cfg, s))
    return tuple(dens), counts


def _check_pair(d1: LabeledSet, d0: UnlabeledSet | None):
    if len(d1) == 0:
        raise EmptyData("labeled set is empty")
    if d0 is not None and len(d0) > 0 and d0.dim != d1.dim:
        raise DimMismatch(f"labeled dim {d1.dim} != unlabeled dim {d0.dim}")


def fit_initial_models(d1: LabeledSet, d0: UnlabeledSet, cfg: VbConfig | None = None,
                       kappa: float = DEFAULT_KAPPA, label_set: Sequence | None = None,
                       seed: int | None = None) -> RegionTest:
    """Initial class densities from ``d1`` and an unlabeled density from ``d0``.

    Classes with fewer than ``3 d`` rows get a single Gaussian. ``seed``
    defaults to ``cfg.seed``.
    """
    cfg = cfg or VbConfig()
    _check_pair(d1, d0)
    if len(d0) == 0:
        raise EmptyData("unlabeled set is empty")
    labels = _resolve_labels(d1, label_set)
    seed = cfg.seed if seed is None else seed
    class_seed, unl_seed = _sub_seeds(seed, 2)
    dens, counts = _fit_classes(d1.features, d1.labels, labels, cfg, class_seed)
    q0 = _fit_density(d0.features, cfg, unl_seed)
    return RegionTest(labels, dens, q0, float(kappa), class_prior_from_counts(counts))


def _draw_labels(class_logpdf: np.ndarray, log_prior: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draws from the normalized rows of the log joint."""
    lj = class_logpdf + log_prior[None, :]
    mx = lj.max(axis=1, keepdims=True)
    p = np.exp(lj - mx)
    cdf = np.cumsum(p, axis=1)
    cdf /= cdf[:, -1:]
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, lj.shape[1] - 1)


def _sample_into(region: RegionTest, d1: LabeledSet, X0: np.ndarray, mask: np.ndarray,
                 seed: int) -> tuple[LabeledSet, UnlabeledSet]:
    # one uniform per unlabeled row, so a row's label does not depend on
    # which other rows were selected
    u = np.random.default_rng(seed).random(X0.shape[0])
    prior = region.class_prior
    if prior is None:
        counts = [np.sum(d1.labels == y) for y in region.labels]
        prior = class_prior_from_counts(counts)
    sel = X0[mask]
    if sel.shape[0]:
        with np.errstate(divide="ignore"):
            idx = _draw_labels(region.class_logpdf(sel), np.log(prior), u[mask])
        new_labels = np.asarray(region.labels, dtype=object)[idx]
        labels = np.concatenate([d1.labels.astype(object), new_labels])
        labels = np.asarray(labels.tolist())
    else:
        labels = d1.labels.copy()
    d_aug = LabeledSet(np.vstack([d1.features, sel]), labels)
    d_res = UnlabeledSet(X0[~mask].reshape(-1, d1.dim))
    return d_aug, d_res


def selective_label_sample(region: RegionTest, d1: LabeledSet, d0: UnlabeledSet,
                           seed: int = 0) -> tuple[LabeledSet, UnlabeledSet]:
    """Pseudo-label the unlabeled rows inside the region.

    Returns ``(D', D'')``: ``d1`` followed by the in-region rows of ``d0``
    with labels drawn from the initial labeled posterior, and the remaining
    rows of ``d0`` in their original order.
    """
    _check_pair(d1, d0)
    if d1.dim != region.dim:
        raise DimMismatch("region and data dimensions differ")
    X0 = d0.features.reshape(-1, d1.dim)
    mask = region.contains(X0) if X0.shape[0] else np.zeros(0, dtype=bool)
    return _sample_into(region, d1, X0, mask, seed)


@dataclass(frozen=True, eq=False)
class MarModel:
    """Fitted classifier: labeled class model, unlabeled model and mixture weight."""

    labels: tuple
    class_densities: tuple
    class_prior: np.ndarray
    unlabeled_density: GmmDensity
    w: float
    kappa: float
    augmented_count: int
    residual_count: int
    class_counts: np.ndarray
    method: str = "mar"
    _region: RegionTest = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(_native(v) for v in self.labels))
        object.__setattr__(self, "class_densities", tuple(self.class_densities))
        prior = np.asarray(self.class_prior, dtype=np.float64)
        counts = np.asarray(self.class_counts, dtype=np.int64)
        if prior.shape != (len(self.labels),) or counts.shape != prior.shape:
            raise ValueError("class_prior and class_counts need one entry per label")
        if abs(prior.sum() - 1.0) > 1e-9 or np.any(prior < 0):
            raise ValueError("class_prior must be a probability vector")
        if not 0.0 <= self.w <= 1.0:
            raise ValueError("w must lie in [0, 1]")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        prior.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "class_prior", prior)
        object.__setattr__(self, "class_counts", counts)
        object.__setattr__(self, "w", float(self.w))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "_region", RegionTest(self.labels, self.class_densities,
                                                       self.unlabeled_density, self.kappa))

    @property
    def dim(self) -> int:
        return self.unlabeled_density.dim

    @property
    def label_set(self) -> tuple:
        return self.labels

    @property
    def region(self) -> RegionTest:
        """Region test built from the refit densities and the model's kappa."""
        return self._region

    def log_joint(self, X) -> np.ndarray:
        """``ln q(x|y) + ln q(y)`` for every row and class, shape (N, |labels|)."""
        X = _as_matrix(X, self.dim)
        C = len(self.labels)
        lq1 = self._region.class_logpdf(X)
        lq0 = self.unlabeled_density.logpdf(X)
        log_w = math.log(self.w) if self.w > 0 else -math.inf
        log_1mw = math.log1p(-self.w) if self.w < 1 else -math.inf
        with np.errstate(divide="ignore"):
            log_qx = np.logaddexp(log_w + lq1, log_1mw + lq0[:, None])
            log_qy = np.log(self.w * self.class_prior + (1.0 - self.w) / C)
        return log_qx + log_qy[None, :]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "method": self.method,
            "labels": list(self.labels),
            "class_prior": [float(v) for v in self.class_prior],
            "class_counts": [int(v) for v in self.class_counts],
            "w": self.w,
            "kappa": _enc_float(self.kappa),
            "augmented_count": int(self.augmented_count),
            "residual_count": int(self.residual_count),
            "class_densities": [q.to_dict() for q in self.class_densities],
            "unlabeled_density": self.unlabeled_density.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MarModel":
        if doc.get("format") != FORMAT:
            raise ValueError("not a marssl model document")
        return cls(
            labels=tuple(doc["labels"]),
            class_densities=tuple(GmmDensity.from_dict(q) for q in doc["class_densities"]),
            class_prior=np.array(doc["class_prior"], dtype=np.float64),
            unlabeled_density=GmmDensity.from_dict(doc["unlabeled_density"]),
            w=float(doc["w"]),
            kappa=_dec_float(doc["kappa"]),
            augmented_count=int(doc["augmented_count"]),
            residual_count=int(doc["residual_count"]),
            class_counts=np.array(doc["class_counts"], dtype=np.int64),
            method=doc["method"],
        )


def _enc_float(v: float):
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


def _dec_float(v) -> float:
    return float(v)


@dataclass(frozen=True)
class Prediction:
    label: object
    posterior: np.ndarray
    error_prob: float
    in_region: bool
    log_marginals: np.ndarray


@dataclass(frozen=True, eq=False)
class PredictionBatch:
    """Column-wise predictions for many points."""

    labels: tuple
    label_index: np.ndarray
    posterior: np.ndarray
    error_prob: np.ndarray
    in_region: np.ndarray
    log_marginals: np.ndarray

    def __len__(self):
        return self.label_index.shape[0]

    @property
    def predicted(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=object)[self.label_index]

    def __getitem__(self, i) -> Prediction:
        return Prediction(
            label=self.labels[int(self.label_index[i])],
            posterior=self.posterior[i],
            error_prob=float(self.error_prob[i]),
            in_region=bool(self.in_region[i]),
            log_marginals=self.log_marginals[i],
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def predict_batch(model: MarModel, X) -> PredictionBatch:
    X = _as_matrix(X, model.dim)
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    m = model.log_joint(X)
    mx = m.max(axis=1, keepdims=True)
    post = np.exp(m - mx)
    post /= post.sum(axis=1, keepdims=True)
    idx = np.argmax(post, axis=1)
    err = 1.0 - post[np.arange(X.shape[0]), idx]
    region = model.region.contains(X) if X.shape[0] else np.zeros(0, dtype=bool)
    return PredictionBatch(model.labels, idx, post, err, region, m)


def predict(model: MarModel, x) -> Prediction:
    """Classify one feature vector.

    ``q(x|y) = w q(x|y, labeled) + (1 - w) q(x|unlabeled)`` and
    ``q(y) = w q(y|labeled) + (1 - w) / |Y|``; the label maximizes
    ``q(x|y) q(y)`` (first label on ties) and ``error_prob`` is one minus
    its normalized share.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise DimMismatch(f"expected a vector of length {model.dim}, got shape {x.shape}")
    return predict_batch(model, x[None, :])[0]


def error_probability(model: MarModel, x) -> float:
    return predict(model, x).error_prob


def _refit(d_aug: LabeledSet, d_res: UnlabeledSet | None, labels: tuple, kappa: float,
           cfg: VbConfig, seed: int, method: str) -> MarModel:
    class_seed, unl_seed = _sub_seeds(seed, 2)
    dens, counts = _fit_classes(d_aug.features, d_aug.labels, labels, cfg, class_seed)
    n_res = 0 if d_res is None else len(d_res)
    if n_res == 0:
        # carries zero weight once w = 1
        q0 = fit_gaussian(d_aug.features, cfg.reg_floor)
    else:
        q0 = _fit_density(d_res.features, cfg, unl_seed)
    n_aug = len(d_aug)
    return MarModel(
        labels=labels,
        class_densities=dens,
        class_prior=class_prior_from_counts(counts),
        unlabeled_density=q0,
        w=n_aug / (n_aug + n_res),
        kappa=kappa,
        augmented_count=n_aug,
        residual_count=n_res,
        class_counts=counts,
        method=method,
    )


def fit_mar(d1: LabeledSet, d0: UnlabeledSet, kappa: float = DEFAULT_KAPPA,
            cfg: VbConfig | None = None, seed: int = 0,
            label_set: Sequence | None = None) -> MarModel:
    """Fit the MAR-robust classifier.

    Runs :func:`fit_initial_models`, :func:`selective_label_sample`, then
    fits class densities and the class prior on ``D'`` and a single
    class-independent density on ``D''``. With the unlabeled model shared by
    all classes and a uniform unlabeled label prior, the joint likelihood
    splits into these two independent fits.
    """
    cfg = cfg or VbConfig()
    _check_pair(d1, d0)
    if len(d0) == 0:
        raise EmptyData("unlabeled set is empty")
    labels = _resolve_labels(d1, label_set)
    init_seed, sample_seed, fit_seed = split_seed(seed)
    region = fit_initial_models(d1, d0, cfg, kappa, labels, seed=init_seed)
    d_aug, d_res = selective_label_sample(region, d1, d0, sample_seed)
    return _refit(d_aug, d_res, labels, float(kappa), cfg, fit_seed, "mar")


def fit_mcar_selftrain(d1: LabeledSet, d0: UnlabeledSet | None, cfg: VbConfig | None = None,
                       seed: int = 0, label_set: Sequence | None = None) -> MarModel:
    """Self-training baseline: pseudo-label every unlabeled row, refit, ``w = 1``."""
    cfg = cfg or VbConfig()
    _check_pair(d1, d0)
    labels = _resolve_labels(d1, label_set)
    init_seed, sample_seed, fit_seed = split_seed(seed)
    if d0 is None or len(d0) == 0:
        d_aug = d1
    else:
        class_seed, _ = _sub_seeds(init_seed, 2)
        dens, counts = _fit_classes(d1.features, d1.labels, labels, cfg, class_seed)
        # accept-everything region; the unlabeled density is never consulted
        region = RegionTest(labels, dens, dens[0], -math.inf, class_prior_from_counts(counts))
        X0 = d0.features
        d_aug, _ = _sample_into(region, d1, X0, np.ones(X0.shape[0], dtype=bool), sample_seed)
    return _refit(d_aug, None, labels, -math.inf, cfg, fit_seed, "mcar")


def fit_supervised(d1: LabeledSet, cfg: VbConfig | None = None, seed: int = 0,
                   label_set: Sequence | None = None) -> MarModel:
    """Labeled-data-only generative classifier (``w = 1``)."""
    model = fit_mcar_selftrain(d1, None, cfg, seed, label_set)
    return replace(model, method="supervised", kappa=DEFAULT_KAPPA)


def fit(method: str, d1: LabeledSet, d0: UnlabeledSet | None, kappa: float = DEFAULT_KAPPA,
        cfg: VbConfig | None = None, seed: int = 0,
        label_set: Sequence | None = None) -> MarModel:
    """Dispatch on ``method`` in ``("mar", "mcar", "supervised")``."""
    if method == "mar":
        return fit_mar(d1, d0, kappa, cfg, seed, label_set)
    if method == "mcar":
        return fit_mcar_selftrain(d1, d0, cfg, seed, label_set)
    if method == "supervised":
        return fit_supervised(d1, cfg, seed, label_set)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
