"""Restricted maximum likelihood with the overall variance profiled out."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..covariance import StDesign
from ..kernels import Kind
from .gls import FitResult, gls, gls_parts
from .optimize import RangeMap, ShapeMap, SimplexOptions, default_ranges, minimize_simplex


@dataclass
class RemlOptions:
    spatial_kind: Kind = Kind.EXPONENTIAL
    temporal_kind: Kind = Kind.EXPONENTIAL
    simplex: SimplexOptions = None
    start: object = None  # optional starting theta

    def __post_init__(self):
        if self.simplex is None:
            self.simplex = SimplexOptions()


def _logdet_chol(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def neg2_reml(theta, design: StDesign, X, y) -> float:
    """``log|S| + r' S^-1 r + log|X' S^-1 X|`` with constants dropped."""
    parts = gls_parts(theta, design, X, y)
    return parts.logdet + parts.quad + _logdet_chol(parts.chol)


def profile_variance(theta_shape, design: StDesign, X, y):
    """Overall variance estimate and the profiled objective for a unit-scale shape.

    The profiled value carries the ``n - p`` term that makes it equal to
    :func:`neg2_reml` at ``theta_shape`` scaled by the returned variance.
    """
    parts = gls_parts(theta_shape, design, X, y)
    dof = parts.n - parts.p
    if dof <= 0:
        raise ValueError(f"need more observations than coefficients (n={parts.n}, p={parts.p})")
    s2 = max(parts.quad, 0.0) / dof
    if s2 <= 0:
        return 0.0, -np.inf
    val = dof * np.log(s2) + parts.logdet + _logdet_chol(parts.chol) + dof
    return s2, float(val)


def fit_reml(model, design: StDesign, X, y, opts: RemlOptions | None = None) -> FitResult:
    """Minimize the profiled objective over the covariance shape.

    ``model`` is ``"product_sum"`` or ``"separable"``.
    """
    opts = opts or RemlOptions()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations than coefficients (n={n}, p={p})")
    t0 = time.perf_counter()
    kappa0, phi0 = default_ranges(design)
    shape = ShapeMap(model, RangeMap(kappa0, phi0, Kind(opts.spatial_kind), Kind(opts.temporal_kind)))
    z0 = shape.start() if opts.start is None else shape.encode(opts.start)

    def objective(z):
        return profile_variance(shape.theta(z), design, X, y)[1]

    res = minimize_simplex(objective, z0, opts.simplex)
    s2, val = profile_variance(shape.theta(res.x), design, X, y)
    theta_hat = shape.theta(res.x, scale=max(s2, np.finfo(float).tiny))
    beta, cov = gls(theta_hat, design, X, y)
    return FitResult(
        model=model,
        method="reml",
        theta_hat=theta_hat,
        beta_hat=beta,
        cov_beta=cov,
        objective=val,
        iterations=res.iterations,
        n_evals=res.n_evals,
        converged=res.converged,
        wall_time_s={"semivariogram_s": 0.0, "optimize_s": time.perf_counter() - t0},
        history=res.history,
    )
