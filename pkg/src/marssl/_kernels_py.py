"""Pure numpy versions of the Gaussian-mixture kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature and semantics. Inputs are assumed validated and C-contiguous
float64: ``X`` (N, d), ``means`` (K, d), ``chols`` (K, d, d) lower-triangular
with covariance = L @ L.T, ``log_coef`` (K,).
"""
import numpy as np
from scipy.linalg import solve_triangular


def mahalanobis(X, means, chols):
    """Squared Mahalanobis distances, shape (N, K)."""
    N, K = X.shape[0], means.shape[0]
    out = np.empty((N, K))
    for k in range(K):
        z = solve_triangular(chols[k], (X - means[k]).T, lower=True, check_finite=False)
        out[:, k] = np.einsum("ij,ij->j", z, z)
    return out


def mixture_logpdf(X, means, chols, log_coef):
    """Per-row log-sum-exp over components of ``log_coef[k] - maha[n, k] / 2``."""
    t = np.asarray(log_coef)[None, :] - 0.5 * mahalanobis(X, means, chols)
    m = t.max(axis=1)
    finite = np.isfinite(m)
    out = np.full(X.shape[0], -np.inf)
    mf = m[finite]
    out[finite] = mf + np.log(np.exp(t[finite] - mf[:, None]).sum(axis=1))
    return out
