"""Spatio-temporal LMM covariances: design, parameters, dense assembly and
the theoretical semivariogram.

Cells of the ``S x T`` grid are ordered space-fastest within time, so cell
``(i, j)`` (site ``i``, time ``j``, both 0-based) has canonical index
``j * S + i``. Under that ordering the interaction part of the covariance is
``R_t kron R_s``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import accel
from .kernels import CorrelationModel, correlate, correlation_matrix

VARIANCE_NAMES = ("sig2_delta", "sig2_gamma", "sig2_tau", "sig2_eta", "sig2_omega", "sig2_eps")

# "0+" and "infinity" for the limit identities, as multiples of the range
ZERO_PLUS = 1e-9
INFINITY = 1e8


@dataclass(frozen=True, eq=False)
class StDesign:
    """Spatio-temporal index set.

    Parameters
    ----------
    sites : array_like, shape (S, 2)
        Planar site coordinates in km.
    times : array_like, shape (T,)
        Time stamps.
    observed : array_like of bool, shape (S*T,), optional
        Observed-cell mask in canonical order. Defaults to the full grid.
    """

    sites: np.ndarray
    times: np.ndarray
    observed: np.ndarray = None

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float)
        if sites.ndim == 1:
            sites = sites[:, None]
        times = np.asarray(self.times, dtype=float).ravel()
        if sites.shape[0] == 0 or times.shape[0] == 0:
            raise ValueError("design needs at least one site and one time")
        n = sites.shape[0] * times.shape[0]
        obs = np.ones(n, dtype=bool) if self.observed is None else np.asarray(self.observed, dtype=bool).ravel()
        if obs.shape[0] != n:
            raise ValueError(f"observed mask has {obs.shape[0]} cells, grid has {n}")
        if not obs.any():
            raise ValueError("design needs at least one observed cell")
        if np.unique(times).size != times.size:
            raise ValueError("times must be distinct")
        for name, arr in (("sites", sites), ("times", times), ("observed", obs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.unique(sites, axis=0).shape[0] != sites.shape[0]:
            warnings.warn("duplicate site coordinates", RuntimeWarning, stacklevel=3)

    @property
    def S(self) -> int:
        return self.sites.shape[0]

    @property
    def T(self) -> int:
        return self.times.shape[0]

    @property
    def n_o(self) -> int:
        return int(self.observed.sum())

    @property
    def n_u(self) -> int:
        return self.S * self.T - self.n_o

    @property
    def obs_index(self) -> np.ndarray:
        return np.flatnonzero(self.observed)

    @property
    def unobs_index(self) -> np.ndarray:
        return np.flatnonzero(~self.observed)

    def cell(self, site, time):
        return np.asarray(time) * self.S + np.asarray(site)

    def site_of(self, cells):
        return np.asarray(cells) % self.S

    def time_of(self, cells):
        return np.asarray(cells) // self.S

    def with_observed(self, observed) -> "StDesign":
        return StDesign(self.sites, self.times, observed)

    def extend(self, new_sites=None, new_times=None) -> "StDesign":
        """Append sites and/or times; new cells are unobserved.

        Existing cells keep their (site, time) labels but canonical indices
        change when sites are added; use :meth:`cell` after extending.
        """
        sites = self.sites if new_sites is None else np.vstack([self.sites, np.atleast_2d(new_sites)])
        times = self.times if new_times is None else np.concatenate([self.times, np.atleast_1d(new_times)])
        old = self.observed.reshape(self.T, self.S)
        obs = np.zeros((times.size, sites.shape[0]), dtype=bool)
        obs[: self.T, : self.S] = old
        return StDesign(sites, times, obs.ravel())


@dataclass(frozen=True)
class ThetaPS:
    """Product-sum LMM parameters: six variances and two correlation models."""

    sig2_delta: float
    sig2_gamma: float
    sig2_tau: float
    sig2_eta: float
    sig2_omega: float
    sig2_eps: float
    spatial: CorrelationModel
    temporal: CorrelationModel

    def __post_init__(self):
        v = self.variances
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError(f"variances must be finite and non-negative, got {v}")
        if v.sum() <= 0:
            raise ValueError("at least one variance must be positive")

    @property
    def variances(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in VARIANCE_NAMES], dtype=float)

    @property
    def total(self) -> float:
        return float(self.variances.sum())

    @classmethod
    def from_variances(cls, v, spatial, temporal) -> "ThetaPS":
        return cls(*(float(x) for x in v), spatial=spatial, temporal=temporal)

    def scaled(self, c: float) -> "ThetaPS":
        return ThetaPS.from_variances(self.variances * c, self.spatial, self.temporal)


@dataclass(frozen=True)
class ThetaSep:
    """Separable LMM parameters: overall variance and the two nugget proportions."""

    sig2_omega: float
    v_s: float
    v_t: float
    spatial: CorrelationModel
    temporal: CorrelationModel

    def __post_init__(self):
        if not (self.sig2_omega > 0 and np.isfinite(self.sig2_omega)):
            raise ValueError("sig2_omega must be positive")
        for name in ("v_s", "v_t"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def total(self) -> float:
        return float(self.sig2_omega)

    def scaled(self, c: float) -> "ThetaSep":
        return replace(self, sig2_omega=self.sig2_omega * c)


@dataclass(frozen=True)
class ClassicPS:
    """Classic product-sum parameterization (spatial and temporal sills with
    nugget proportions, plus an interaction variance).

    Use :meth:`from_weights` to build it from ``k1 C_s C_t + k2 C_s + k3 C_t``.
    """

    sig2_s: float
    v_s: float
    sig2_t: float
    v_t: float
    sig2_st: float
    spatial: CorrelationModel
    temporal: CorrelationModel
    k: tuple = field(default=(1.0, 1.0, 1.0))

    def __post_init__(self):
        k1, k2, k3 = self.k
        if not k1 > 0 or k2 < 0 or k3 < 0:
            raise ValueError("weights need k1 > 0 and k2, k3 >= 0")
        for name in ("v_s", "v_t"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if min(self.sig2_s, self.sig2_t, self.sig2_st) < 0:
            raise ValueError("variances must be non-negative")

    @classmethod
    def from_weights(cls, k1, k2, k3, sill_s, v_s, sill_t, v_t, spatial, temporal) -> "ClassicPS":
        """Absorb the weights: ``sig2_s = k2 sill_s``, ``sig2_t = k3 sill_t``,
        ``sig2_st = k1 sill_s sill_t``."""
        return cls(k2 * sill_s, v_s, k3 * sill_t, v_t, k1 * sill_s * sill_t, spatial, temporal, k=(k1, k2, k3))


def classic_to_lmm(c: ClassicPS) -> ThetaPS:
    """Map the classic product-sum parameters onto the product-sum LMM.

    The nugget proportions inside the interaction product are set to zero and
    no completely independent error is added.
    """
    return ThetaPS(
        sig2_delta=c.sig2_s * (1 - c.v_s),
        sig2_gamma=c.sig2_s * c.v_s,
        sig2_tau=c.sig2_t * (1 - c.v_t),
        sig2_eta=c.sig2_t * c.v_t,
        sig2_omega=c.sig2_st,
        sig2_eps=0.0,
        spatial=c.spatial,
        temporal=c.temporal,
    )


def _coefs(theta) -> np.ndarray:
    if isinstance(theta, ThetaPS):
        d, g, t, e, w, eps = theta.variances
        return np.array([d, g, t, e, w, 1.0, 0.0, 1.0, 0.0, eps])
    if isinstance(theta, ThetaSep):
        return np.array([0, 0, 0, 0, theta.sig2_omega, 1 - theta.v_s, theta.v_s, 1 - theta.v_t, theta.v_t, 0.0])
    raise TypeError(f"unsupported parameter type {type(theta).__name__}")


def _signal_coefs(theta) -> np.ndarray:
    # dependent parts only: every term carrying an identity factor is dropped
    c = _coefs(theta)
    return np.array([c[0], 0.0, c[2], 0.0, c[4] * c[5] * c[7], 1.0, 0.0, 1.0, 0.0, 0.0])


def signal_variance(theta) -> float:
    """Variance of the dependent (nugget-free) part of one cell."""
    c = _signal_coefs(theta)
    return float(c[0] + c[2] + c[4])


def component_correlations(theta, design: StDesign):
    """``(R_s, R_t)`` for the design's sites and times."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rs = correlation_matrix(theta.spatial, design.sites)
    rt = correlation_matrix(theta.temporal, design.times)
    return rs, rt


def cross_cov(theta, design: StDesign, cells_a, cells_b, corr=None, signal=False) -> np.ndarray:
    """Covariance block between two lists of canonical cell indices.

    With ``signal=True`` the rows are the dependent part of ``cells_a``
    (nugget terms dropped) against the full observations ``cells_b``.
    """
    rs, rt = corr if corr is not None else component_correlations(theta, design)
    ca = np.asarray(cells_a, dtype=np.intp)
    cb = np.asarray(cells_b, dtype=np.intp)
    coefs = _signal_coefs(theta) if signal else _coefs(theta)
    return accel.fill_cov(rs, rt, design.site_of(ca), design.time_of(ca), design.site_of(cb), design.time_of(cb), coefs)


def dense_cov(theta, design: StDesign, corr=None) -> np.ndarray:
    """Observed-cell covariance ``Sigma_oo`` built entry by entry."""
    idx = design.obs_index
    return cross_cov(theta, design, idx, idx, corr)


def dense_cov_ps(theta: ThetaPS, design: StDesign) -> np.ndarray:
    if not isinstance(theta, ThetaPS):
        raise TypeError("dense_cov_ps needs ThetaPS")
    return dense_cov(theta, design)


def dense_cov_sep(theta: ThetaSep, design: StDesign) -> np.ndarray:
    if not isinstance(theta, ThetaSep):
        raise TypeError("dense_cov_sep needs ThetaSep")
    return dense_cov(theta, design)


def lag_covariance(theta, h_s, h_t):
    """Covariance at spatial lag ``h_s`` and temporal lag ``h_t``.

    A lag of exactly zero means "same site" / "same time", so the matching
    nuggets contribute; any positive lag drops them.
    """
    hs = np.asarray(h_s, dtype=float)
    ht = np.asarray(h_t, dtype=float)
    rs = np.asarray(correlate(theta.spatial, hs))
    rt = np.asarray(correlate(theta.temporal, ht))
    zs = (hs == 0).astype(float)
    zt = (ht == 0).astype(float)
    if isinstance(theta, ThetaPS):
        d, g, t, e, w, eps = theta.variances
        out = d * rs + g * zs + t * rt + e * zt + w * rs * rt + eps * zs * zt
    else:
        out = theta.sig2_omega * ((1 - theta.v_t) * rt + theta.v_t * zt) * ((1 - theta.v_s) * rs + theta.v_s * zs)
    return out if out.ndim else float(out)


def theoretical_sv(theta, h_s, h_t):
    """Semivariogram ``gamma(h_s, h_t) = Cov(0, 0) - Cov(h_s, h_t)``."""
    sill = theta.total if isinstance(theta, ThetaSep) else float(theta.variances.sum())
    out = sill - np.asarray(lag_covariance(theta, h_s, h_t))
    return out if out.ndim else float(out)


def recover_components(theta: ThetaPS) -> ThetaPS:
    """Re-derive the six variances from semivariogram limits alone."""
    zs, zt = ZERO_PLUS * theta.spatial.range, ZERO_PLUS * theta.temporal.range
    inf_s, inf_t = INFINITY * theta.spatial.range, INFINITY * theta.temporal.range

    def g(hs, ht):
        return theoretical_sv(theta, hs, ht)

    g_inf = g(inf_s, inf_t)
    delta = g_inf - g(zs, inf_t)
    gamma = g(zs, inf_t) - g(0.0, inf_t)
    tau = g_inf - g(inf_s, zt)
    eta = g(inf_s, zt) - g(inf_s, 0.0)
    omega = g(inf_s, zt) + g(zs, inf_t) - g_inf - g(zs, zt)
    eps = g(zs, zt) + g(0.0, inf_t) + g(inf_s, 0.0) - g(inf_s, zt) - g(zs, inf_t)
    v = np.clip([delta, gamma, tau, eta, omega, eps], 0.0, None)
    return ThetaPS.from_variances(v, theta.spatial, theta.temporal)
