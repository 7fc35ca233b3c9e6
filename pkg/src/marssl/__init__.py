"""Reliable semi-supervised classification when labels are missing at random."""
from .data import LabeledSet, UnlabeledSet
from .datagen import (
    MarSplitConfig,
    TwoClusterConfig,
    gen_two_cluster_mar,
    mar_split_by_class,
)
from .density import GmmDensity, VbConfig, fit_gaussian, fit_vb_gmm, log_density, sample
from .dimred import PcaMap, fit_pca, transform
from .evaluation import ReliabilityDiagram, accuracy, region_decomposed_errors, reliability_diagram
from .kernels import BACKEND
from .partition import RegionTest, in_region, log_likelihood_ratio
from .ssl import (
    MarModel,
    Prediction,
    PredictionBatch,
    error_probability,
    fit_initial_models,
    fit_mar,
    fit_mcar_selftrain,
    fit_supervised,
    predict,
    predict_batch,
    selective_label_sample,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "GmmDensity",
    "LabeledSet",
    "MarSplitConfig",
    "MarModel",
    "PcaMap",
    "Prediction",
    "PredictionBatch",
    "RegionTest",
    "TwoClusterConfig",
    "ReliabilityDiagram",
    "UnlabeledSet",
    "VbConfig",
    "accuracy",
    "error_probability",
    "fit_gaussian",
    "fit_initial_models",
    "fit_mar",
    "fit_mcar_selftrain",
    "fit_pca",
    "fit_supervised",
    "fit_vb_gmm",
    "gen_two_cluster_mar",
    "in_region",
    "log_density",
    "log_likelihood_ratio",
    "mar_split_by_class",
    "predict",
    "predict_batch",
    "reliability_diagram",
    "region_decomposed_errors",
    "sample",
    "selective_label_sample",
    "transform",
]
