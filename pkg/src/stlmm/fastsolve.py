"""Structured solves and log-determinants for separable and product-sum
covariances.

Everything here applies ``Sigma^{-1}`` to right-hand sides and returns
``log|Sigma|``; the inverse itself is never formed. The full-grid product-sum
path stacks three stages:

1. ``Sigma_st = s2_omega R_t kron R_s + s2_eps I`` through the eigenvectors of
   ``R_t`` and ``R_s`` (``W = U_t kron U_s`` is applied with the vec trick),
2. a Woodbury update adding ``Z_t Sigma_t Z_t'``,
3. a Woodbury update adding ``Z_s Sigma_s Z_s'``.

Incomplete grids pad the observed rows with zeros, solve on the full grid,
and correct with the unobserved block of the full-grid inverse.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, eigh
from scipy.linalg.lapack import dpotrf

from .covariance import StDesign, ThetaPS, ThetaSep, component_correlations

EIG_FLOOR = 1e-12
LAYER_SKIP = 1e-10


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky failed; ``pivot`` is the 1-based leading minor that broke."""

    def __init__(self, msg, pivot=None, factor=None):
        super().__init__(msg)
        self.pivot = pivot
        self.factor = factor


class DefinitenessError(np.linalg.LinAlgError):
    pass


class ConditionWarning(RuntimeWarning):
    pass


@dataclass
class FastSolve:
    """``Sigma^{-1} rhs`` and ``log|Sigma|``."""

    sigma_inv_rhs: np.ndarray
    logdet: float
    n: int


def cholesky(a, name="matrix"):
    """Lower Cholesky factor; raises :class:`FactorizationError` with the pivot."""
    c, info = dpotrf(np.asarray(a, dtype=float), lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise FactorizationError(
            f"{name} is not positive definite (leading minor {info})", pivot=int(info), factor=name
        )
    if info < 0:
        raise ValueError(f"invalid argument to potrf for {name}")
    return c


def _chol_logdet(c):
    return 2.0 * float(np.log(np.diag(c)).sum())


def _as_2d(rhs):
    b = np.asarray(rhs, dtype=float)
    return (b[:, None], True) if b.ndim == 1 else (b, False)


def _finish(x, logdet, n, vec):
    return FastSolve(x[:, 0] if vec else x, float(logdet), n)


def kron_apply(a_t, a_s, b, T, S):
    """``(a_t kron a_s) @ b`` for ``b`` of shape ``(T*S, m)``."""
    m = b.shape[1]
    x = (a_t @ b.reshape(T, S * m)).reshape(T, S, m)
    return np.matmul(a_s, x)  # a_s broadcast over the T blocks; shape (T, S, m)


class DenseOperator:
    """Cholesky-backed operator for an explicit matrix."""

    def __init__(self, sigma, name="Sigma"):
        sigma = np.asarray(sigma, dtype=float)
        self.n = sigma.shape[0]
        self._c = cholesky(sigma, name)
        self.logdet = _chol_logdet(self._c)

    def solve(self, b):
        return cho_solve((self._c, True), b, check_finite=False)


class StegleOperator:
    """``(s2_omega R_t kron R_s + s2_eps I)^{-1}`` from the two eigendecompositions."""

    def __init__(self, eig_s, eig_t, sig2_omega, sig2_eps):
        (self.p_s, self.u_s), (self.p_t, self.u_t) = eig_s, eig_t
        self.S, self.T = self.u_s.shape[0], self.u_t.shape[0]
        self.n = self.S * self.T
        v = sig2_omega * np.multiply.outer(self.p_t, self.p_s) + sig2_eps  # (T, S)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise DefinitenessError(
                f"Stegle diagonal has non-positive entries (min {v.min():.3g}); "
                "increase the completely independent variance"
            )
        self.v = v
        self.logdet = float(np.log(v).sum())
        self._uts, self._ut = self.u_s.T.copy(), self.u_t.T.copy()

    def solve(self, b):
        m = b.shape[1]
        x = kron_apply(self._ut, self._uts, b, self.T, self.S)
        x /= self.v[:, :, None]
        return kron_apply(self.u_t, self.u_s, x.reshape(self.n, m), self.T, self.S).reshape(self.n, m)


class SeparableOperator:
    """``(s2_omega R*_t kron R*_s)^{-1}`` with ``R* = (1 - v) R + v I``."""

    def __init__(self, theta: ThetaSep, rs, rt):
        self.S, self.T = rs.shape[0], rt.shape[0]
        self.n = self.S * self.T
        rs_star = (1 - theta.v_s) * rs + theta.v_s * np.eye(self.S)
        rt_star = (1 - theta.v_t) * rt + theta.v_t * np.eye(self.T)
        self._cs = cholesky(rs_star, "spatial factor R*_s")
        self._ct = cholesky(rt_star, "temporal factor R*_t")
        self.sig2 = theta.sig2_omega
        self.logdet = (
            self.n * np.log(self.sig2) + self.S * _chol_logdet(self._ct) + self.T * _chol_logdet(self._cs)
        )

    def solve(self, b):
        S, T, m = self.S, self.T, b.shape[1]
        x = cho_solve((self._ct, True), b.reshape(T, S * m), check_finite=False).reshape(T, S, m)
        x = x.transpose(1, 0, 2).reshape(S, T * m)
        x = cho_solve((self._cs, True), x, check_finite=False).reshape(S, T, m).transpose(1, 0, 2)
        return x.reshape(self.n, m) / self.sig2


class Incidence:
    """0/1 map from sites (``kind="site"``) or times (``kind="time"``) to grid cells.

    Applied by gather/scatter, never as a matrix.
    """

    def __init__(self, kind, S, T):
        if kind not in ("site", "time"):
            raise ValueError("kind must be 'site' or 'time'")
        self.kind, self.S, self.T = kind, S, T
        self.c = S if kind == "site" else T

    def gather(self, v):
        """``Z' v``."""
        x = v.reshape(self.T, self.S, -1)
        return x.sum(axis=0) if self.kind == "site" else x.sum(axis=1)

    def scatter(self, u):
        """``Z u``."""
        if self.kind == "site":
            return np.tile(u, (self.T, 1))
        return np.repeat(u, self.S, axis=0)

    def dense(self):
        if self.kind == "site":
            return np.tile(np.eye(self.S), (self.T, 1))
        return np.repeat(np.eye(self.T), self.S, axis=0)


class SMWOperator:
    """``(Z Sigma_c Z' + A)^{-1}`` by the Woodbury identity around ``A^{-1}``."""

    def __init__(self, inner, sigma_c, incidence: Incidence):
        self.inner, self.z, self.n = inner, incidence, inner.n
        c_sig = cholesky(sigma_c, f"{incidence.kind} block")
        sig_inv = cho_solve((c_sig, True), np.eye(incidence.c), check_finite=False)
        self.g = inner.solve(incidence.dense())  # A^{-1} Z
        m = sig_inv + incidence.gather(self.g)
        self._cm = cholesky(0.5 * (m + m.T), f"{incidence.kind} capacitance")
        self.logdet = inner.logdet + _chol_logdet(c_sig) + _chol_logdet(self._cm)

    def solve(self, b):
        u = self.inner.solve(b)
        corr = cho_solve((self._cm, True), self.z.gather(u), check_finite=False)
        return u - self.g @ corr


def _eig(r, name):
    p, u = eigh(r, check_finite=False)
    if p.min() < EIG_FLOOR:
        warnings.warn(f"{name} correlation matrix is near-singular; eigenvalues clamped", ConditionWarning, stacklevel=3)
        p = np.maximum(p, EIG_FLOOR)
    return p, u


def ps_operator(theta: ThetaPS, design: StDesign, corr=None):
    """Full-grid operator for the product-sum covariance."""
    rs, rt = corr if corr is not None else component_correlations(theta, design)
    S, T = design.S, design.T
    d, g, t, e, w, eps = theta.variances
    cutoff = LAYER_SKIP * theta.total
    op = StegleOperator(_eig(rs, "spatial"), _eig(rt, "temporal"), w, eps)
    if max(t, e) >= cutoff:
        op = SMWOperator(op, t * rt + e * np.eye(T), Incidence("time", S, T))
    if max(d, g) >= cutoff:
        op = SMWOperator(op, d * rs + g * np.eye(S), Incidence("site", S, T))
    return op


def full_operator(theta, design: StDesign, corr=None):
    if isinstance(theta, ThetaPS):
        return ps_operator(theta, design, corr)
    if isinstance(theta, ThetaSep):
        rs, rt = corr if corr is not None else component_correlations(theta, design)
        return SeparableOperator(theta, rs, rt)
    raise TypeError(f"unsupported parameter type {type(theta).__name__}")


def _require_full(design):
    if design.n_u:
        raise ValueError("full-grid solve called on an incomplete design; use hw_solve")


def _check_rows(b, n):
    if b.shape[0] != n:
        raise ValueError(f"rhs has {b.shape[0]} rows, expected {n}")


def dense_solve(sigma, rhs) -> FastSolve:
    """Cholesky reference solve."""
    b, vec = _as_2d(rhs)
    op = DenseOperator(sigma)
    _check_rows(b, op.n)
    return _finish(op.solve(b), op.logdet, op.n, vec)


def sep_solve(theta: ThetaSep, design: StDesign, rhs) -> FastSolve:
    _require_full(design)
    b, vec = _as_2d(rhs)
    op = full_operator(theta, design)
    _check_rows(b, op.n)
    return _finish(op.solve(b), op.logdet, op.n, vec)


def stegle_solve(theta: ThetaPS, design: StDesign, rhs) -> FastSolve:
    """Solve with ``s2_omega R_t kron R_s + s2_eps I`` only (other variances ignored)."""
    _require_full(design)
    b, vec = _as_2d(rhs)
    rs, rt = component_correlations(theta, design)
    op = StegleOperator(_eig(rs, "spatial"), _eig(rt, "temporal"), theta.sig2_omega, theta.sig2_eps)
    _check_rows(b, op.n)
    return _finish(op.solve(b), op.logdet, op.n, vec)


def smw_layer(inner, sigma_block, incidence: Incidence, rhs) -> FastSolve:
    """``(Z Sigma_c Z' + A)^{-1} rhs`` and its log-determinant.

    ``inner`` is any object with ``solve(b)``, ``logdet`` and ``n`` giving
    ``A``. ``sigma_block`` must be positive definite.
    """
    b, vec = _as_2d(rhs)
    op = SMWOperator(inner, np.asarray(sigma_block, dtype=float), incidence)
    _check_rows(b, op.n)
    return _finish(op.solve(b), op.logdet, op.n, vec)


def ps_solve(theta: ThetaPS, design: StDesign, rhs) -> FastSolve:
    _require_full(design)
    b, vec = _as_2d(rhs)
    op = ps_operator(theta, design)
    _check_rows(b, op.n)
    return _finish(op.solve(b), op.logdet, op.n, vec)


def hw_solve(theta, design: StDesign, rhs_o, corr=None) -> FastSolve:
    """Solve with the observed-cell covariance ``Sigma_oo`` of any design.

    The observed rows are zero-padded to the full grid, the full-grid
    operator is applied together with unit columns for every unobserved cell,
    and the unobserved block of the full inverse is swept out.
    """
    b, vec = _as_2d(rhs_o)
    _check_rows(b, design.n_o)
    op = full_operator(theta, design, corr)
    if design.n_u == 0:
        return _finish(op.solve(b), op.logdet, op.n, vec)
    obs, uno = design.obs_index, design.unobs_index
    nu, m = uno.size, b.shape[1]
    big = np.zeros((op.n, nu + m))
    big[uno, np.arange(nu)] = 1.0
    big[obs, nu:] = b
    q = op.solve(big)
    quu = q[uno, :nu]
    c_uu = cholesky(0.5 * (quu + quu.T), "unobserved block of the inverse")
    x = q[obs, nu:] - q[obs, :nu] @ cho_solve((c_uu, True), q[uno, nu:], check_finite=False)
    return _finish(x, op.logdet + _chol_logdet(c_uu), design.n_o, vec)


def debug_inverse(theta, design: StDesign) -> np.ndarray:
    """Materialized ``Sigma_oo^{-1}`` (tests and debugging only)."""
    return hw_solve(theta, design, np.eye(design.n_o)).sigma_inv_rhs
