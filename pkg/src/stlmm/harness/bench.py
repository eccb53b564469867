"""Timing of the structured solves against a dense Cholesky solve."""
from __future__ import annotations

import csv
import math
import os
import time
import warnings

import numpy as np

from ..covariance import StDesign, component_correlations, dense_cov
from ..fastsolve import dense_solve, hw_solve
from .sim import get_config, separable_counterpart

AGREE_RTOL = 1e-8
_ASPECT = 36 / 30  # sites per time point in the simulation grid


def grid_shape(n, missing_frac):
    """Sites and times for about ``n`` observed cells, keeping the 36:30 aspect."""
    cells = n / (1.0 - missing_frac)
    S = max(2, round(math.sqrt(cells * _ASPECT)))
    T = max(2, math.ceil(cells / S))
    return S, T


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), np.finfo(float).tiny))


def bench_design(S, T, missing_frac, rng, extent=5.0):
    sites = rng.uniform(0.0, extent, size=(S, 2))
    times = np.arange(1, T + 1, dtype=float)
    observed = np.ones(S * T, dtype=bool)
    n_miss = int(round(missing_frac * S * T))
    observed[rng.choice(S * T, size=n_miss, replace=False)] = False
    return StDesign(sites, times, observed)


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def bench_inversion(cfg, sizes, missing_frac=0.05, n_matrices=10, seed=0, out_dir=None, log=print):
    """Mean solve times per size for product-sum, separable and dense paths.

    Each repetition draws a fresh design; the three solves are checked to
    agree before their timings count. Covariance assembly is untimed.
    """
    cfg = get_config(cfg) if isinstance(cfg, str) else cfg
    theta_ps = cfg.theta
    theta_sep = separable_counterpart(theta_ps)
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        S, T = grid_shape(n, missing_frac)
        times = {"ps": [], "sep": [], "dense": []}
        n_o = 0
        try:
            for _ in range(n_matrices):
                design = bench_design(S, T, missing_frac, rng)
                n_o = design.n_o
                rhs = rng.standard_normal((n_o, 5))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    corr = component_correlations(theta_ps, design)
                    sig_ps = dense_cov(theta_ps, design, corr)
                    sig_sep = dense_cov(theta_sep, design, corr)
                    fast_ps, t_ps = _timed(lambda: hw_solve(theta_ps, design, rhs, corr))
                    fast_sep, t_sep = _timed(lambda: hw_solve(theta_sep, design, rhs, corr))
                ref_ps, t_dense = _timed(lambda: dense_solve(sig_ps, rhs))
                ref_sep = dense_solve(sig_sep, rhs)
                for fast, ref, label in ((fast_ps, ref_ps, "product-sum"), (fast_sep, ref_sep, "separable")):
                    err = _rel(fast.sigma_inv_rhs, ref.sigma_inv_rhs)
                    lerr = abs(fast.logdet - ref.logdet) / max(abs(ref.logdet), 1.0)
                    if err > AGREE_RTOL or lerr > AGREE_RTOL:
                        raise AssertionError(f"{label} solve disagrees with dense at n={n_o}: {err:.2e}, {lerr:.2e}")
                times["ps"].append(t_ps)
                times["sep"].append(t_sep)
                times["dense"].append(t_dense)
        except MemoryError:
            log(f"skipping n={n}: out of memory")
            continue
        m = {k: float(np.mean(v)) for k, v in times.items()}
        rows.append({
            "n_target": n, "S": S, "T": T, "n_obs": n_o,
            "ps_s": m["ps"], "sep_s": m["sep"], "dense_s": m["dense"],
            "ps_ratio": m["dense"] / m["ps"], "sep_ratio": m["dense"] / m["sep"],
        })
    if out_dir is not None:
        write_bench_csv(rows, os.path.join(out_dir, f"bench_{cfg.name}.csv"))
    return rows


BENCH_COLUMNS = ["n_target", "S", "T", "n_obs", "ps_s", "sep_s", "dense_s", "ps_ratio", "sep_ratio"]


def write_bench_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})


def format_bench(rows) -> str:
    head = f"{'n':>6} {'S':>4} {'T':>4} {'dense s':>10} {'PS s':>10} {'SEP s':>10} {'PS x':>7} {'SEP x':>7}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r['n_obs']:>6} {r['S']:>4} {r['T']:>4} {r['dense_s']:>10.4f} {r['ps_s']:>10.4f}"
            f" {r['sep_s']:>10.4f} {r['ps_ratio']:>7.2f} {r['sep_ratio']:>7.2f}"
        )
    return "\n".join(lines)
