"""PCA feature reduction.

Used in place of a learned encoder: the classifier only needs some
low-dimensional representation to fit densities on.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, RankTooLowWarning


@dataclass(frozen=True, eq=False)
class PcaMap:
    """Affine map ``x -> (x - mean) @ basis``.

    ``basis`` has orthonormal columns ordered by decreasing
    ``explained_variance`` (sample variance, ``N - 1`` denominator).
    """

    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def output_dim(self) -> int:
        return self.basis.shape[1]

    def transform(self, data) -> np.ndarray:
        X = np.asarray(data, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.input_dim:
            raise DimMismatch(f"expected {self.input_dim} columns, got {X.shape[1]}")
        return (X - self.mean) @ self.basis

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim == 1:
            Z = Z[None, :]
        if Z.shape[1] != self.output_dim:
            raise DimMismatch(f"expected {self.output_dim} columns, got {Z.shape[1]}")
        return Z @ self.basis.T + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "basis": [float(v) for v in self.basis.reshape(-1)],
            "explained_variance": [float(v) for v in self.explained_variance],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PcaMap":
        mean = np.array(doc["mean"], dtype=np.float64)
        var = np.array(doc["explained_variance"], dtype=np.float64)
        basis = np.array(doc["basis"], dtype=np.float64).reshape(mean.shape[0], var.shape[0])
        return cls(mean, basis, var)


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def fit_pca(data, r: int) -> PcaMap:
    """Top-``r`` principal directions of the centered data.

    ``r`` must satisfy ``1 <= r <= min(N - 1, d)``. If it exceeds the
    numerical rank of the data it is clamped to the rank with a
    :class:`RankTooLowWarning`.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise DimMismatch("data must be a 2-d matrix")
    N, d = X.shape
    if not 1 <= r <= min(N - 1, d):
        raise ValueError(f"r must be in [1, {min(N - 1, d)}], got {r}")
    mean = X.mean(axis=0)
    C = X - mean
    if N >= d:
        vals, vecs = np.linalg.eigh(C.T @ C / (N - 1))
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
    else:
        # Gram-matrix route: eigenvectors of C C^T map to those of C^T C
        gvals, gvecs = np.linalg.eigh(C @ C.T / (N - 1))
        order = np.argsort(gvals)[::-1]
        gvals, gvecs = gvals[order], gvecs[:, order]
        pos = gvals > 0
        vals = np.zeros(d)
        vecs = np.zeros((d, d))
        k = min(int(pos.sum()), d)
        vals[:k] = gvals[:k]
        v = C.T @ gvecs[:, :k]
        vecs[:, :k] = v / np.linalg.norm(v, axis=0)
    vals = np.clip(vals, 0.0, None)
    tol = max(N, d) * np.finfo(float).eps * (vals[0] if vals.size else 0.0)
    rank = int((vals > tol).sum())
    if r > rank:
        warnings.warn(f"requested {r} components but data rank is {rank}; clamping",
                      RankTooLowWarning, stacklevel=2)
        r = max(rank, 1)
    basis = vecs[:, :r]
    if r > 1 or N < d:
        # re-orthonormalize; eigh output is orthonormal already to ~1e-15
        q, _ = np.linalg.qr(basis)
        basis = q * np.sign(np.sum(q * basis, axis=0))
    basis = _fix_signs(basis)
    return PcaMap(mean, np.ascontiguousarray(basis), vals[:r].copy())


def transform(pca: PcaMap, data) -> np.ndarray:
    """``(data - mean) @ basis``."""
    return pca.transform(data)
