"""Reliability diagrams over the predicted error probability.

Bins are equal-width on ``error_prob`` in [0, 1]; each bin reports the mean
nominal error and the empirical misclassification rate. A model is
overconfident in a bin when the empirical rate exceeds the nominal one.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch

DEFAULT_BINS = 10


@dataclass(frozen=True)
class Bin:
    lo: float
    hi: float
    count: int
    nominal_sum: float
    error_count: int

    @property
    def mean_nominal(self) -> float | None:
        return self.nominal_sum / self.count if self.count else None

    @property
    def empirical_error(self) -> float | None:
        return self.error_count / self.count if self.count else None


@dataclass(frozen=True)
class ReliabilityDiagram:
    bins: tuple

    @property
    def n(self) -> int:
        return sum(b.count for b in self.bins)

    @property
    def ece(self) -> float:
        n = self.n
        if n == 0:
            return 0.0
        return float(sum(b.count * abs(b.mean_nominal - b.empirical_error)
                         for b in self.bins if b.count) / n)

    @property
    def overall_accuracy(self) -> float:
        n = self.n
        if n == 0:
            return float("nan")
        return 1.0 - sum(b.error_count for b in self.bins) / n

    @property
    def mean_nominal(self) -> float:
        return sum(b.nominal_sum for b in self.bins) / self.n

    @property
    def empirical_error(self) -> float:
        return sum(b.error_count for b in self.bins) / self.n

    def merge(self, other: "ReliabilityDiagram") -> "ReliabilityDiagram":
        """Combine diagrams built on disjoint data with the same binning."""
        if [(b.lo, b.hi) for b in self.bins] != [(b.lo, b.hi) for b in other.bins]:
            raise ValueError("diagrams use different binning")
        return ReliabilityDiagram(tuple(
            Bin(a.lo, a.hi, a.count + b.count, a.nominal_sum + b.nominal_sum,
                a.error_count + b.error_count)
            for a, b in zip(self.bins, other.bins)
        ))

    def rows(self) -> list[dict]:
        return [
            {
                "bin_lo": b.lo,
                "bin_hi": b.hi,
                "count": b.count,
                "mean_nominal": b.mean_nominal,
                "empirical_error": b.empirical_error,
            }
            for b in self.bins
        ]

    def to_dict(self) -> dict:
        return {
            "bins": self.rows(),
            "ece": self.ece,
            "overall_accuracy": self.overall_accuracy,
            "n": self.n,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "mean_nominal", "empirical_error"])
        for r in self.rows():
            w.writerow([_fmt(r["bin_lo"]), _fmt(r["bin_hi"]), r["count"],
                        _fmt(r["mean_nominal"]), _fmt(r["empirical_error"])])
        return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _arrays(predictions, truth):
    """(error_prob, correct) arrays from a PredictionBatch or a sequence of Predictions."""
    truth = list(truth)
    if hasattr(predictions, "error_prob") and hasattr(predictions, "predicted"):
        q = np.asarray(predictions.error_prob, dtype=np.float64)
        pred = list(predictions.predicted.tolist())
    else:
        preds = list(predictions)
        q = np.array([p.error_prob for p in preds], dtype=np.float64)
        pred = [p.label for p in preds]
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions but {len(truth)} labels")
    correct = np.array([a == b for a, b in zip(pred, truth)], dtype=bool)
    return q, correct


def diagram_from_arrays(error_prob, correct, n_bins: int = DEFAULT_BINS) -> ReliabilityDiagram:
    """Reliability diagram from nominal error probabilities and a correctness mask."""
    q = np.asarray(error_prob, dtype=np.float64)
    c = np.asarray(correct, dtype=bool)
    if q.shape != c.shape:
        raise LengthMismatch(f"{q.shape[0]} error probabilities but {c.shape[0]} outcomes")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if np.any((q < 0) | (q > 1)) or not np.all(np.isfinite(q)):
        raise ValueError("error probabilities must lie in [0, 1]")
    idx = np.minimum((q * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=q, minlength=n_bins)
    errs = np.bincount(idx, weights=(~c).astype(np.float64), minlength=n_bins)
    bins = tuple(
        Bin(k / n_bins, (k + 1) / n_bins, int(counts[k]), float(sums[k]), int(round(errs[k])))
        for k in range(n_bins)
    )
    return ReliabilityDiagram(bins)


def reliability_diagram(predictions, truth, n_bins: int = DEFAULT_BINS) -> ReliabilityDiagram:
    """Bin predictions by their error probability and compare with actual errors."""
    q, correct = _arrays(predictions, truth)
    if q.shape[0] < 1:
        raise ValueError("need at least one prediction")
    return diagram_from_arrays(q, correct, n_bins)


def region_decomposed_errors(predictions, truth, rare_mask,
                             n_bins: int = DEFAULT_BINS) -> tuple[ReliabilityDiagram, ReliabilityDiagram]:
    """Separate diagrams for the masked rows and for the rest."""
    q, correct = _arrays(predictions, truth)
    m = np.asarray(rare_mask, dtype=bool)
    if m.shape != q.shape:
        raise LengthMismatch(f"mask has {m.shape[0]} entries for {q.shape[0]} predictions")
    return (diagram_from_arrays(q[m], correct[m], n_bins),
            diagram_from_arrays(q[~m], correct[~m], n_bins))


def accuracy(predictions, truth) -> float:
    q, correct = _arrays(predictions, truth)
    if correct.size == 0:
        raise ValueError("need at least one prediction")
    return float(correct.mean())
