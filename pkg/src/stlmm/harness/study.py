"""Monte-Carlo study: fit every method on each simulated repetition and
aggregate fixed-effect and prediction metrics."""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..estimate import fit_cwls, fit_ols, fit_reml, wald_test
from ..predict import blup
from .sim import SimProtocol, VarianceConfig, get_config, simulate_dataset

METHODS = {
    "PS_REML": ("product_sum", "reml"),
    "PS_CWLS": ("product_sum", "cwls"),
    "SEP_REML": ("separable", "reml"),
    "SEP_CWLS": ("separable", "cwls"),
    "IRE_OLS": ("ire", "ols"),
}
COEFS = (1, 2, 3)  # slopes reported in the tables; the intercept is not
MAX_FAILURE_RATE = 0.05
TYPE_I_BAND = (0.04, 0.06)
COVERAGE_BAND = (0.948, 0.952)


class StudyAborted(RuntimeError):
    pass


def fit_method(name, design, X, y):
    model, method = METHODS[name]
    if method == "ols":
        return fit_ols(design, X, y)
    if method == "reml":
        return fit_reml(model, design, X, y)
    return fit_cwls(model, design, X, y)


def run_rep(cfg: VarianceConfig, proto: SimProtocol, rep: int, methods) -> list:
    """One repetition; returns one record per method (``error`` set on failure)."""
    data = simulate_dataset(cfg, proto, rep)
    true_beta = np.asarray(proto.beta, dtype=float)
    out = []
    for name in methods:
        rec = {"rep": rep, "method": name, "error": None}
        try:
            t0 = time.perf_counter()
            fit = fit_method(name, data.design, data.X, data.y)
            pred = blup(fit, data.design, data.X, data.y, data.X_full[data.test], data.test)
            y_test = data.y_full[data.test]
            rec.update(
                converged=fit.converged,
                beta_err=fit.beta_hat - true_beta,
                reject=np.array([wald_test(fit, k)[0] > 1.96 for k in COEFS]),
                covered=float(np.mean((pred.lower <= y_test) & (y_test <= pred.upper))),
                pred_err=pred.y_hat - y_test,
                sv_s=fit.wall_time_s.get("semivariogram_s", 0.0),
                est_s=fit.wall_time_s.get("optimize_s", 0.0),
                total_s=time.perf_counter() - t0,
            )
        except Exception as exc:  # recorded, excluded from the aggregates
            rec["error"] = f"{type(exc).__name__}: {exc}"
        out.append(rec)
    return out


@dataclass
class MetricsTable:
    config: str
    reps: int
    seed: int
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def row(self, method) -> dict:
        for r in self.rows:
            if r["method"] == method:
                return r
        raise KeyError(method)

    @property
    def columns(self):
        cols = ["config", "method", "n_ok", "n_failed", "n_nonconverged"]
        for k in COEFS:
            cols += [f"type1_b{k}", f"bias_b{k}", f"rmse_b{k}"]
        return cols + ["coverage", "pred_bias", "rmspe", "sv_s", "est_s", "total_s"]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=self.columns, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow({c: (f"{r[c]:.6g}" if isinstance(r[c], float) else r[c]) for c in self.columns})

    def to_text(self) -> str:
        cols = self.columns[1:]
        cells = [[c for c in cols]] + [
            [f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in cols] for r in self.rows
        ]
        widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
        lines = [f"{self.config}: {self.reps} repetitions, seed {self.seed}"]
        lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
        lo, hi = TYPE_I_BAND
        clo, chi = COVERAGE_BAND
        lines.append(f"valid type I band [{lo}, {hi}], coverage band [{clo}, {chi}]")
        return "\n".join(lines)


def aggregate(config, proto: SimProtocol, records, methods) -> MetricsTable:
    table = MetricsTable(config, proto.reps, proto.seed)
    for name in methods:
        recs = [r for r in records if r["method"] == name]
        ok = [r for r in recs if r["error"] is None]
        table.failures += [(r["rep"], name, r["error"]) for r in recs if r["error"] is not None]
        row = {"config": config, "method": name, "n_ok": len(ok), "n_failed": len(recs) - len(ok)}
        row["n_nonconverged"] = sum(not r["converged"] for r in ok)
        if ok:
            be = np.array([r["beta_err"] for r in ok])
            rej = np.array([r["reject"] for r in ok])
            pe = np.concatenate([r["pred_err"] for r in ok])
            for i, k in enumerate(COEFS):
                row[f"type1_b{k}"] = float(rej[:, i].mean())
                row[f"bias_b{k}"] = float(be[:, k].mean())
                row[f"rmse_b{k}"] = float(np.sqrt(np.mean(be[:, k] ** 2)))
            row["coverage"] = float(np.mean([r["covered"] for r in ok]))
            row["pred_bias"] = float(pe.mean())
            row["rmspe"] = float(np.sqrt(np.mean(pe**2)))
            for key in ("sv_s", "est_s", "total_s"):
                row[key] = float(np.mean([r[key] for r in ok]))
        else:
            for c in table.columns[5:]:
                row[c] = float("nan")
        table.rows.append(row)
    return table


def default_workers():
    env = os.environ.get("STLMM_WORKERS")
    return int(env) if env else 1


def _rep_job(args):
    cfg_name, proto, rep, methods = args
    return run_rep(get_config(cfg_name), proto, rep, methods)


def run_study(cfgs, proto: SimProtocol, methods=tuple(METHODS), workers=None, out_dir=None, progress=None):
    """Run every configuration; returns ``{config name: MetricsTable}``.

    Repetitions run on a process pool of ``workers`` (default from
    ``STLMM_WORKERS``, else 1). If ``out_dir`` is given each table is written
    as ``study_<cfg>_<seed>.csv`` with an aligned-text ``.txt`` twin.
    """
    if proto.reps < 1:
        raise ValueError("reps must be at least 1")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {list(METHODS)}")
    workers = workers or default_workers()
    results = {}
    for cfg in cfgs:
        cfg = get_config(cfg) if isinstance(cfg, str) else cfg
        jobs = [(cfg.name, proto, rep, tuple(methods)) for rep in range(proto.reps)]
        records = []
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for recs in pool.map(_rep_job, jobs, chunksize=1):
                    records += recs
                    if progress:
                        progress(cfg.name, recs[0]["rep"])
        else:
            for job in jobs:
                records += _rep_job(job)
                if progress:
                    progress(cfg.name, job[2])
        table = aggregate(cfg.name, proto, records, methods)
        n_fail = len({rep for rep, _, _ in table.failures})
        if n_fail > MAX_FAILURE_RATE * proto.reps:
            raise StudyAborted(f"{cfg.name}: {n_fail} of {proto.reps} repetitions failed; first: {table.failures[0]}")
        if out_dir is not None:
            base = os.path.join(out_dir, f"study_{cfg.name}_{proto.seed}")
            table.write_csv(base + ".csv")
            with open(base + ".txt", "w", encoding="utf-8") as fh:
                fh.write(table.to_text() + "\n")
        results[cfg.name] = table
    return results
