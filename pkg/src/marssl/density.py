"""Gaussian mixture densities fitted by variational Bayes.

A fitted :class:`GmmDensity` is an immutable point estimate (weights, means,
covariances). Fitting follows the conjugate Dirichlet / Gaussian-Wishart
mean-field scheme: responsibilities and the parameter posterior are updated
in turn, and the variational lower bound is tracked so that convergence and
monotonicity can be checked.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

from . import kernels
from .errors import DegenerateDataWarning, DimMismatch, EmptyData

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class VbConfig:
    """Hyperparameters for :func:`fit_vb_gmm`.

    ``dirichlet_concentration=None`` means ``1 / max_components``.
    """

    max_components: int = 10
    dirichlet_concentration: float | None = None
    prior_mean_scale: float = 1.0
    wishart_dof_offset: float = 0.0
    max_iters: int = 200
    elbo_tol: float = 1e-5
    reg_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_components < 1:
            raise ValueError("max_components must be >= 1")
        if self.dirichlet_concentration is not None and self.dirichlet_concentration <= 0:
            raise ValueError("dirichlet_concentration must be > 0")
        if self.prior_mean_scale <= 0:
            raise ValueError("prior_mean_scale must be > 0")
        if self.wishart_dof_offset < 0:
            raise ValueError("wishart_dof_offset must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.elbo_tol <= 0:
            raise ValueError("elbo_tol must be > 0")
        if self.reg_floor <= 0:
            raise ValueError("reg_floor must be > 0")

    @property
    def alpha0(self) -> float:
        if self.dirichlet_concentration is None:
            return 1.0 / self.max_components
        return float(self.dirichlet_concentration)

    def replace(self, **changes) -> "VbConfig":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "max_components": self.max_components,
            "dirichlet_concentration": self.dirichlet_concentration,
            "prior_mean_scale": self.prior_mean_scale,
            "wishart_dof_offset": self.wishart_dof_offset,
            "max_iters": self.max_iters,
            "elbo_tol": self.elbo_tol,
            "reg_floor": self.reg_floor,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VbConfig":
        known = cls().to_dict().keys()
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown VB config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GmmDensity:
    """Gaussian mixture density with cached Cholesky factors.

    Parameters
    ----------
    weights : array of shape (K,)
    means : array of shape (K, d)
    covariances : array of shape (K, d, d)
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    _chols: np.ndarray = field(init=False, repr=False)
    _log_coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        mu = np.ascontiguousarray(self.means, dtype=np.float64)
        cov = np.ascontiguousarray(self.covariances, dtype=np.float64)
        if mu.ndim != 2 or mu.shape[0] != w.shape[0]:
            raise ValueError("means must have shape (K, d)")
        K, d = mu.shape
        if K < 1 or d < 1:
            raise ValueError("need at least one component and one dimension")
        if cov.shape != (K, d, d):
            raise ValueError("covariances must have shape (K, d, d)")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
            raise ValueError("non-finite parameters")
        try:
            chols = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        for a in (w, mu, cov, chols):
            a.setflags(write=False)
        with np.errstate(divide="ignore"):
            log_coef = (
                np.log(w)
                - 0.5 * d * LOG_2PI
                - np.log(np.diagonal(chols, axis1=1, axis2=2)).sum(axis=1)
            )
        log_coef.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "_chols", np.ascontiguousarray(chols))
        object.__setattr__(self, "_log_coef", log_coef)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def logpdf(self, X) -> np.ndarray:
        """Log-density of every row of ``X`` (shape (N, d))."""
        X = _as_matrix(X, self.dim)
        return kernels.mixture_logpdf(X, self.means, self._chols, self._log_coef)

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise DimMismatch(f"expected a vector of length {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("x must be finite")
        return float(self.logpdf(x[None, :])[0])

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self._chols[comp], z)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "components": [
                {
                    "weight": float(w),
                    "mean": [float(v) for v in m],
                    "covariance": [float(v) for v in c.reshape(-1)],
                }
                for w, m, c in zip(self.weights, self.means, self.covariances)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GmmDensity":
        d = int(doc["dim"])
        comps = doc["components"]
        return cls(
            weights=np.array([c["weight"] for c in comps], dtype=np.float64),
            means=np.array([c["mean"] for c in comps], dtype=np.float64).reshape(-1, d),
            covariances=np.array([c["covariance"] for c in comps], dtype=np.float64).reshape(
                -1, d, d
            ),
        )

    def __eq__(self, other):
        if not isinstance(other, GmmDensity):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.covariances, other.covariances)
        )

    __hash__ = None


def log_density(model: GmmDensity, x) -> float:
    """``ln sum_k w_k N(x; mu_k, Sigma_k)`` for a single vector."""
    return model.log_density(x)


def sample(model: GmmDensity, n: int, seed: int = 0) -> np.ndarray:
    """``n`` i.i.d. draws; deterministic given ``seed``."""
    return model.sample(n, seed)


def _as_matrix(X, d: int | None = None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1 and d is not None and X.shape[0] == d:
        X = X[None, :]
    if X.ndim != 2:
        raise DimMismatch(f"expected a 2-d feature matrix, got shape {X.shape}")
    if d is not None and X.shape[1] != d:
        raise DimMismatch(f"expected {d} columns, got {X.shape[1]}")
    return X


def clamp_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    """Symmetrize and raise eigenvalues below ``floor`` to ``floor``."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] >= floor:
        return cov
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def fit_gaussian(data, reg_floor: float = 1e-6) -> GmmDensity:
    """Single-component fit: sample mean and ML covariance, eigenvalues >= floor."""
    X = _as_matrix(data)
    if X.shape[0] < 1:
        raise EmptyData("fit_gaussian needs at least one row")
    if not np.all(np.isfinite(X)):
        raise ValueError("data must be finite")
    mean = X.mean(axis=0)
    diff = X - mean
    cov = diff.T @ diff / X.shape[0]
    cov = clamp_covariance(cov, reg_floor)
    return GmmDensity(np.ones(1), mean[None, :], cov[None, :, :])


# --------------------------------------------------------------------------
# variational Bayes


@dataclass(frozen=True, eq=False)
class VbResult:
    density: GmmDensity
    elbo: np.ndarray  # lower bound per sample, one entry per iteration
    n_iter: int
    converged: bool
    degenerate: bool = False


def _canonical_order(X: np.ndarray) -> np.ndarray:
    # lexicographic row sort, so the fit does not depend on input row order
    return X[np.lexsort(X.T[::-1])]


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    N = X.shape[0]
    centers = [X[rng.integers(N)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        idx = rng.choice(N, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _initial_resp(X: np.ndarray, k: int, rng: np.random.Generator, lloyd_iters: int = 10):
    centers = _kmeanspp(X, k, rng)
    for _ in range(lloyd_iters):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        new = np.array(
            [X[assign == j].mean(axis=0) if np.any(assign == j) else centers[j] for j in range(len(centers))]
        )
        if np.array_equal(new, centers):
            break
        centers = new
    dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = dist.argmin(axis=1)
    resp = np.zeros((X.shape[0], len(centers)))
    resp[np.arange(X.shape[0]), assign] = 1.0
    return resp


def _log_wishart_norm(logdet_W: np.ndarray, nu: np.ndarray, d: int) -> np.ndarray:
    # ln B(W, nu) for the Wishart normalizer
    i = np.arange(1, d + 1)
    return (
        -0.5 * nu * logdet_W
        - 0.5 * nu * d * math.log(2.0)
        - 0.25 * d * (d - 1) * math.log(math.pi)
        - gammaln(0.5 * (nu[:, None] + 1 - i[None, :])).sum(axis=1)
    )


class _VbState:
    """Posterior hyperparameters of the variational factors."""

    def __init__(self, X, resp, alpha0, beta0, m0, nu0, W0inv, floor):
        self.X = X
        self.alpha0, self.beta0, self.m0, self.nu0, self.W0inv = alpha0, beta0, m0, nu0, W0inv
        self.floor = floor
        self.m_step(resp)

    def m_step(self, resp):
        X = self.X
        d = X.shape[1]
        self.resp = resp
        Nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
        xbar = (resp.T @ X) / Nk[:, None]
        K = resp.shape[1]
        S = np.empty((K, d, d))
        for k in range(K):
            diff = X - xbar[k]
            S[k] = (resp[:, k, None] * diff).T @ diff / Nk[k]
        self.Nk, self.xbar, self.S = Nk, xbar, S
        self.alpha = self.alpha0 + Nk
        self.beta = self.beta0 + Nk
        self.m = (self.beta0 * self.m0 + Nk[:, None] * xbar) / self.beta[:, None]
        self.nu = self.nu0 + Nk
        dm = xbar - self.m0
        Winv = (
            self.W0inv[None, :, :]
            + Nk[:, None, None] * S
            + ((self.beta0 * Nk) / (self.beta0 + Nk))[:, None, None] * dm[:, :, None] * dm[:, None, :]
        )
        Winv = 0.5 * (Winv + np.transpose(Winv, (0, 2, 1)))
        self.Winv = Winv
        self.Winv_chol = np.linalg.cholesky(Winv)
        self.logdet_W = -2.0 * np.log(np.diagonal(self.Winv_chol, axis1=1, axis2=2)).sum(axis=1)
        i = np.arange(1, d + 1)
        self.E_logdet_prec = (
            digamma(0.5 * (self.nu[:, None] + 1 - i[None, :])).sum(axis=1)
            + d * math.log(2.0)
            + self.logdet_W
        )
        self.E_logpi = digamma(self.alpha) - digamma(self.alpha.sum())

    def _quad(self, k, A):
        # trace(A @ W_k) with W_k = inv(Winv_k)
        return float(np.trace(np.linalg.solve(self.Winv[k], A)))

    def _qform(self, k, v):
        return float(v @ np.linalg.solve(self.Winv[k], v))

    def e_step_log_rho(self):
        X = self.X
        d = X.shape[1]
        # nu_k (x - m_k)^T W_k (x - m_k) is a Mahalanobis distance under Winv_k / nu_k
        chols = np.ascontiguousarray(self.Winv_chol / np.sqrt(self.nu)[:, None, None])
        maha = kernels.mahalanobis(X, np.ascontiguousarray(self.m), chols)
        return (
            self.E_logpi[None, :]
            + 0.5 * self.E_logdet_prec[None, :]
            - 0.5 * d * LOG_2PI
            - 0.5 * (d / self.beta)[None, :]
            - 0.5 * maha
        )

    def elbo(self):
        X, resp = self.X, self.resp
        d = X.shape[1]
        K = resp.shape[1]
        Nk, xbar, S = self.Nk, self.xbar, self.S
        beta, nu, m = self.beta, self.nu, self.m
        ElnL, Elnpi = self.E_logdet_prec, self.E_logpi

        e_lik = 0.0
        e_prior_mu = 0.0
        tr_W0 = 0.0
        for k in range(K):
            dx = xbar[k] - m[k]
            e_lik += Nk[k] * (
                ElnL[k]
                - d / beta[k]
                - nu[k] * self._quad(k, S[k])
                - nu[k] * self._qform(k, dx)
                - d * LOG_2PI
            )
            dm = m[k] - self.m0
            e_prior_mu += (
                d * math.log(self.beta0 / (2 * math.pi))
                + ElnL[k]
                - d * self.beta0 / beta[k]
                - self.beta0 * nu[k] * self._qform(k, dm)
            )
            tr_W0 += nu[k] * self._quad(k, self.W0inv)
        e_lik *= 0.5

        logdet_W0 = -np.linalg.slogdet(self.W0inv)[1]
        lnB0 = _log_wishart_norm(np.array([logdet_W0]), np.array([self.nu0]), d)[0]
        e_prior_mulam = 0.5 * e_prior_mu + K * lnB0 + 0.5 * (self.nu0 - d - 1) * ElnL.sum() - 0.5 * tr_W0

        e_z = float((resp * Elnpi[None, :]).sum())
        lnC0 = gammaln(K * self.alpha0) - K * gammaln(self.alpha0)
        e_pi = lnC0 + (self.alpha0 - 1) * Elnpi.sum()

        with np.errstate(divide="ignore", invalid="ignore"):
            e_qz = float(np.where(resp > 0, resp * np.log(resp), 0.0).sum())
        lnC = gammaln(self.alpha.sum()) - gammaln(self.alpha).sum()
        e_qpi = float(((self.alpha - 1) * Elnpi).sum() + lnC)
        lnB = _log_wishart_norm(self.logdet_W, nu, d)
        H = -lnB - 0.5 * (nu - d - 1) * ElnL + 0.5 * nu * d
        e_qmulam = float((0.5 * ElnL + 0.5 * d * np.log(beta / (2 * math.pi)) - 0.5 * d - H).sum())

        return e_lik + e_z + e_pi + e_prior_mulam - e_qz - e_qpi - e_qmulam


def _sweep(state: _VbState, cfg: VbConfig, history: list) -> tuple[_VbState, bool]:
    """Alternate E and M updates until the per-sample bound stalls."""
    N = state.X.shape[0]
    for _ in range(cfg.max_iters):
        state.m_step(_responsibilities(state.e_step_log_rho()))
        history.append(state.elbo() / N)
        if abs(history[-1] - history[-2]) < cfg.elbo_tol:
            return state, True
    return state, False


def _responsibilities(log_rho: np.ndarray) -> np.ndarray:
    mx = log_rho.max(axis=1, keepdims=True)
    log_norm = mx + np.log(np.exp(log_rho - mx).sum(axis=1, keepdims=True))
    return np.exp(log_rho - log_norm)


def _best_merge(state: _VbState, current: float) -> _VbState | None:
    """First pairwise merge, by responsibility overlap, that raises the bound.

    The merged candidate gets one E/M refinement before comparison; it is
    accepted only if its bound beats ``current``.
    """
    R = state.resp
    K = R.shape[1]
    if K < 2:
        return None
    norms = np.sqrt((R * R).sum(axis=0)) + 1e-300
    overlap = (R.T @ R) / np.outer(norms, norms)
    pairs = [(overlap[i, j], i, j) for i in range(K) for j in range(i + 1, K)]
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    for _, i, j in pairs:
        resp = np.delete(R, j, axis=1)
        resp[:, i] += R[:, j]
        cand = _VbState(state.X, resp, state.alpha0, state.beta0, state.m0,
                        state.nu0, state.W0inv, state.floor)
        cand.m_step(_responsibilities(cand.e_step_log_rho()))
        if cand.elbo() > current:
            return cand
    return None


def _degenerate(X: np.ndarray, floor: float) -> GmmDensity:
    d = X.shape[1]
    return GmmDensity(np.ones(1), X[:1].copy(), (floor * np.eye(d))[None, :, :])


def vb_fit(data, cfg: VbConfig | None = None) -> VbResult:
    """Variational Bayes GMM fit with the full lower-bound trace.

    Raises
    ------
    EmptyData
        If ``data`` has fewer than two rows.
    """
    cfg = cfg or VbConfig()
    X = _as_matrix(data)
    N, d = X.shape
    if N < 2:
        raise EmptyData(f"need at least 2 rows to fit a mixture, got {N}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data must be finite")
    X = np.ascontiguousarray(_canonical_order(X))
    if np.all(X == X[0]):
        warnings.warn("all rows identical; returning a single floor-covariance component",
                      DegenerateDataWarning, stacklevel=2)
        return VbResult(_degenerate(X, cfg.reg_floor), np.zeros(0), 0, True, degenerate=True)

    rng = np.random.default_rng(cfg.seed)
    K = min(cfg.max_components, N)
    resp = _initial_resp(X, K, rng)
    resp = resp[:, resp.sum(axis=0) > 0]

    m0 = X.mean(axis=0)
    diff = X - m0
    emp_cov = diff.T @ diff / N
    W0inv = clamp_covariance(emp_cov, cfg.reg_floor) + cfg.reg_floor * np.eye(d)
    nu0 = d + cfg.wishart_dof_offset
    state = _VbState(X, resp, cfg.alpha0, cfg.prior_mean_scale, m0, nu0, W0inv, cfg.reg_floor)

    history = [state.elbo() / N]
    state, converged = _sweep(state, cfg, history)
    for _ in range(state.resp.shape[1] - 1):
        merged = _best_merge(state, history[-1] * N)
        if merged is None:
            break
        state = merged
        history.append(state.elbo() / N)
        state, converged = _sweep(state, cfg, history)

    keep = state.Nk / N >= 1.0 / (10.0 * N)
    if not np.any(keep):
        keep[np.argmax(state.Nk)] = True
    alpha = state.alpha[keep]
    weights = alpha / alpha.sum()
    means = state.m[keep]
    covs = np.array(
        [clamp_covariance(c, cfg.reg_floor) for c in state.Winv[keep] / state.nu[keep][:, None, None]]
    )
    density = GmmDensity(weights, means, covs)
    return VbResult(density, np.array(history), len(history) - 1, converged)


def fit_vb_gmm(data, cfg: VbConfig | None = None) -> GmmDensity:
    """Fit a Gaussian mixture by variational Bayes.

    At most ``cfg.max_components`` components; those with expected
    responsibility mass below ``1/(10 N)`` of the data are dropped and the
    remaining weights renormalized. Deterministic given ``cfg.seed`` and
    independent of row order.
    """
    return vb_fit(data, cfg).density
