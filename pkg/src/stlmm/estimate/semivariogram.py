"""Empirical spatio-temporal semivariogram and the weighted least-squares fit."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .. import accel
from ..covariance import StDesign, theoretical_sv
from ..kernels import Kind
from .gls import FitResult, fit_ols, gls
from .optimize import FullMap, RangeMap, SimplexOptions, default_ranges, minimize_simplex

WEIGHT_CAP = 1e20
# evaluations are cheap but near-zero variances make progress slow
CWLS_MAX_EVALS = 10000
_GAMMA_TINY = 1e-10


class EmptyClassesError(ValueError):
    pass


@dataclass
class BinSpec:
    """Distance classes.

    Spatial: one class for co-located pairs, then ``n_spatial`` equal-width
    bins over ``(0, max_distance]`` (default half the largest separation).
    Temporal: integer multiples of the time step, ``0..max_lag`` (default
    ``T // 2``), each pair assigned to the nearest multiple.
    """

    n_spatial: int = 15
    max_distance: float | None = None
    max_lag: int | None = None

    def spatial_edges(self, design: StDesign):
        d = cdist(design.sites, design.sites)
        top = self.max_distance if self.max_distance is not None else 0.5 * d.max()
        if not top > 0:
            top = 1.0
        return np.linspace(0.0, top, self.n_spatial + 1)

    def lags(self, design: StDesign):
        k = self.max_lag if self.max_lag is not None else design.T // 2
        return np.arange(int(k) + 1)


def _time_step(times):
    if times.size < 2:
        return 1.0
    return float(np.min(np.diff(np.sort(times))))


@dataclass
class EmpSv:
    spatial_bins: list
    temporal_bins: list
    gamma_hat: np.ndarray  # (n_spatial_classes, n_lags), NaN where empty
    counts: np.ndarray
    hs_center: np.ndarray
    ht_center: np.ndarray

    @property
    def valid(self):
        return self.counts > 0

    def rows(self):
        """``(h_s, h_t, gamma_hat, count)`` for every non-empty class."""
        m = self.valid
        return np.column_stack([self.hs_center[m], self.ht_center[m], self.gamma_hat[m], self.counts[m]])


def _classes(design: StDesign, bins: BinSpec):
    sd = cdist(design.sites, design.sites)
    edges = bins.spatial_edges(design)
    scls = np.searchsorted(edges, sd, side="left")  # 0 only for distance exactly 0
    scls[scls > bins.n_spatial] = -1
    td = np.abs(design.times[:, None] - design.times[None, :])
    step = _time_step(design.times)
    lags = bins.lags(design)
    k = np.rint(td / step).astype(np.intp)
    tcls = np.where(k <= lags[-1], k, -1)
    spatial_bins = [(0.0, 0.0)] + [(float(edges[i]), float(edges[i + 1])) for i in range(bins.n_spatial)]
    return sd, td, scls, tcls, spatial_bins, [float(l * step) for l in lags]


def empirical_sv(design: StDesign, residuals, bins: BinSpec | None = None, impl=None) -> EmpSv:
    """Matheron estimator ``sum (r_a - r_b)^2 / (2 |N|)`` per distance class."""
    bins = bins or BinSpec()
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise ValueError("no residuals")
    if r.size != design.n_o:
        raise ValueError(f"expected {design.n_o} residuals, got {r.size}")
    sd, td, scls, tcls, sbins, tbins = _classes(design, bins)
    obs = design.obs_index
    ns, nt = bins.n_spatial + 1, len(tbins)
    sums, counts, hs, ht = accel.sv_accumulate(
        design.site_of(obs), design.time_of(obs), r, scls, tcls, sd, td, ns, nt, impl=impl
    )
    if not counts.any():
        raise EmptyClassesError("every distance class is empty; widen the spatial or temporal bins")
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(counts > 0, sums / (2.0 * counts), np.nan)
        hs_c = np.where(counts > 0, hs / counts, np.nan)
        ht_c = np.where(counts > 0, ht / counts, np.nan)
    return EmpSv(sbins, tbins, gamma, counts, hs_c, ht_c)


def cwls_objective(theta, emp: EmpSv) -> float:
    """``sum_i N_i (gamma_hat_i - gamma_i)^2 / gamma_i^2`` over non-empty classes."""
    m = emp.valid
    g = np.asarray(theoretical_sv(theta, emp.hs_center[m], emp.ht_center[m]), dtype=float)
    n = emp.counts[m].astype(float)
    if not np.all(np.isfinite(g)):
        return np.inf
    small = g < _GAMMA_TINY
    gh = emp.gamma_hat[m]
    # scaled form so huge trial variances cannot overflow into inf * 0
    terms = np.where(small, n * WEIGHT_CAP * (gh - g) ** 2, n * (gh / np.where(small, 1.0, g) - 1.0) ** 2)
    return float(np.sum(terms))


@dataclass
class CwlsOptions:
    spatial_kind: Kind = Kind.EXPONENTIAL
    temporal_kind: Kind = Kind.EXPONENTIAL
    bins: BinSpec = None
    simplex: SimplexOptions = None
    fgls_iterations: int = 1

    def __post_init__(self):
        self.bins = self.bins or BinSpec()
        self.simplex = self.simplex or SimplexOptions(max_evals=CWLS_MAX_EVALS)
        if self.fgls_iterations < 1:
            raise ValueError("fgls_iterations must be at least 1")


def fit_cwls(model, design: StDesign, X, y, bins: BinSpec | None = None, opts: CwlsOptions | None = None) -> FitResult:
    """OLS residuals, empirical semivariogram, weighted fit, then FGLS.

    With ``fgls_iterations > 1`` the semivariogram is rebuilt from the FGLS
    residuals and refitted, starting from the previous estimate.
    """
    opts = opts or CwlsOptions()
    bins = bins or opts.bins
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    ols = fit_ols(design, X, y)
    var0 = float(ols.theta_hat.sig2_eps)
    if not var0 > 0:
        var0 = 1.0
    kappa0, phi0 = default_ranges(design)
    fmap = FullMap(model, RangeMap(kappa0, phi0, Kind(opts.spatial_kind), Kind(opts.temporal_kind)), var0)
    beta = ols.beta_hat
    z = fmap.start()
    t_sv = t_opt = 0.0
    evals = iters = 0
    converged = True
    history = []
    for _ in range(opts.fgls_iterations):
        t0 = time.perf_counter()
        emp = empirical_sv(design, y - X @ beta, bins)
        t1 = time.perf_counter()
        # normalized by the pair count so the absolute tolerance is scale-free
        norm = float(emp.counts.sum())
        res = minimize_simplex(lambda zz: cwls_objective(fmap.theta(zz), emp) / norm, z, opts.simplex)
        z = res.x
        theta = fmap.theta(z)
        objective = cwls_objective(theta, emp)
        beta, cov = gls(theta, design, X, y)
        t_sv += t1 - t0
        t_opt += time.perf_counter() - t1
        evals += res.n_evals
        iters += res.iterations
        converged = converged and res.converged
        history.extend(res.history)
    return FitResult(
        model=model,
        method="cwls",
        theta_hat=theta,
        beta_hat=beta,
        cov_beta=cov,
        objective=objective,
        iterations=iters,
        n_evals=evals,
        converged=converged,
        wall_time_s={"semivariogram_s": t_sv, "optimize_s": t_opt},
        history=history,
    )
