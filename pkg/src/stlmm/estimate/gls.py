"""Fixed-effect estimation shared by every method, plus the OLS baseline and
Wald tests."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..covariance import StDesign, ThetaPS
from ..fastsolve import hw_solve
from ..kernels import CorrelationModel


class EstimabilityError(np.linalg.LinAlgError):
    """``X' Sigma^{-1} X`` is singular; ``null_dim`` is its null-space dimension."""

    def __init__(self, null_dim):
        super().__init__(f"fixed effects not estimable: X'Sigma^-1 X has null space of dimension {null_dim}")
        self.null_dim = null_dim


@dataclass
class FitResult:
    model: str
    method: str
    theta_hat: object
    beta_hat: np.ndarray
    cov_beta: np.ndarray
    objective: float
    iterations: int = 0
    n_evals: int = 0
    converged: bool = True
    wall_time_s: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_beta))


def _gram_factor(a):
    """Cholesky of a symmetric p.d. Gram matrix or :class:`EstimabilityError`."""
    a = 0.5 * (a + a.T)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        ev = np.linalg.eigvalsh(a)
        null = int(np.sum(ev <= max(ev.max(), 0.0) * a.shape[0] * np.finfo(float).eps))
        raise EstimabilityError(max(null, 1)) from None


@dataclass
class GlsParts:
    beta: np.ndarray
    xtsx: np.ndarray  # X' Sigma^-1 X
    chol: np.ndarray
    quad: float  # r' Sigma^-1 r at beta
    logdet: float  # log|Sigma_oo|
    n: int
    p: int


def gls_parts(theta, design: StDesign, X, y, corr=None) -> GlsParts:
    """One structured solve against ``[X, y]`` and everything derived from it."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    sol = hw_solve(theta, design, np.column_stack([X, y]), corr)
    six, siy = sol.sigma_inv_rhs[:, :p], sol.sigma_inv_rhs[:, p]
    xtsx = X.T @ six
    chol = _gram_factor(xtsx)
    xtsy = X.T @ siy
    beta = np.linalg.solve(chol.T, np.linalg.solve(chol, xtsy))
    quad = float(y @ siy - beta @ xtsy)
    return GlsParts(beta, 0.5 * (xtsx + xtsx.T), chol, quad, sol.logdet, n, p)


def gls(theta, design: StDesign, X, y):
    """``beta_hat = (X' S^-1 X)^-1 X' S^-1 y`` and its covariance ``(X' S^-1 X)^-1``."""
    parts = gls_parts(theta, design, X, y)
    inv_l = np.linalg.inv(parts.chol)
    return parts.beta, inv_l.T @ inv_l


def nugget_theta(sig2, spatial=None, temporal=None) -> ThetaPS:
    """Pure completely-independent-error parameters (the IRE model)."""
    spatial = spatial or CorrelationModel("exponential", 1.0)
    temporal = temporal or CorrelationModel("exponential", 1.0)
    return ThetaPS(0.0, 0.0, 0.0, 0.0, 0.0, max(float(sig2), np.finfo(float).tiny), spatial, temporal)


def fit_ols(design: StDesign, X, y) -> FitResult:
    """Ordinary least squares under independent errors."""
    t0 = time.perf_counter()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations than coefficients (n={n}, p={p})")
    chol = _gram_factor(X.T @ X)
    beta = np.linalg.solve(chol.T, np.linalg.solve(chol, X.T @ y))
    r = y - X @ beta
    s2 = float(r @ r) / (n - p)
    inv_l = np.linalg.inv(chol)
    cov = s2 * (inv_l.T @ inv_l)
    return FitResult(
        model="ire",
        method="ols",
        theta_hat=nugget_theta(s2),
        beta_hat=beta,
        cov_beta=cov,
        objective=float(r @ r),
        wall_time_s={"semivariogram_s": 0.0, "optimize_s": time.perf_counter() - t0},
    )


def wald_test(fit: FitResult, coef_index: int):
    """``|beta_k| / SE(beta_k)`` and its two-sided Gaussian p-value."""
    se = float(np.sqrt(fit.cov_beta[coef_index, coef_index]))
    if not se > 0:
        raise ZeroDivisionError(f"coefficient {coef_index} has zero standard error")
    stat = abs(float(fit.beta_hat[coef_index])) / se
    return stat, float(2.0 * stats.norm.sf(stat))
