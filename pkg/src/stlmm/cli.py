"""Command-line interface: ``stlmm fit|predict|semivariogram|simulate|bench``.

Settings may also come from a ``key = value`` file given by ``--config``;
keys are flag names with dashes or underscores, and flags take precedence.

Exit codes: 0 success, 2 usage error, 3 data error, 4 non-convergence.
"""
import argparse
import csv
import os
import sys

import numpy as np

from .covariance import ThetaPS, ThetaSep, theoretical_sv
from .estimate import (
    BinSpec, CwlsOptions, EstimabilityError, RemlOptions, SimplexOptions, empirical_sv, fit_cwls, fit_ols, fit_reml,
)
from .io import DataError, Manifest, load_observations
from .kernels import Kind
from .predict import blup

EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 2, 3, 4

COMBINATIONS = {
    ("product_sum", "reml"), ("product_sum", "cwls"),
    ("separable", "reml"), ("separable", "cwls"),
    ("ire", "ols"),
}

# flag name -> (type, default)
SETTINGS = {
    "model": (str, "product_sum"),
    "method": (str, "reml"),
    "spatial_kernel": (str, "exponential"),
    "temporal_kernel": (str, "exponential"),
    "n_bins": (int, 15),
    "max_distance": (float, None),
    "max_lag": (int, None),
    "max_evals": (int, None),
    "fgls_iterations": (int, 1),
    "seed": (int, 2024),
    "workers": (int, None),
    "site_col": (str, "site_id"),
    "x_col": (str, "x_km"),
    "y_col": (str, "y_km"),
    "time_col": (str, "time"),
    "response_col": (str, "response"),
    "covariates": (str, None),
}


class UsageError(Exception):
    pass


class NotConverged(Exception):
    pass


def read_config(path):
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise UsageError(f"{path}:{n}: unknown setting {key!r}")
        out[key] = value
    return out


def resolve(args):
    """Merge defaults, config file and flags (in increasing priority)."""
    conf = read_config(args.config) if args.config else {}
    for key, (typ, default) in SETTINGS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            continue
        if key in conf:
            try:
                setattr(args, key, typ(conf[key]))
            except ValueError:
                raise UsageError(f"config value for {key} is not a valid {typ.__name__}") from None
        else:
            setattr(args, key, default)
    return args


def _kind(name):
    try:
        return Kind(name)
    except ValueError:
        raise UsageError(f"unknown kernel {name!r}; choose from {[k.value for k in Kind]}") from None


def manifest_from(args):
    covs = [c.strip() for c in args.covariates.split(",")] if args.covariates else None
    return Manifest(args.site_col, args.x_col, args.y_col, args.time_col, args.response_col, covs)


def check_combination(model, method):
    if (model, method) not in COMBINATIONS:
        allowed = ", ".join(f"{a}/{b}" for a, b in sorted(COMBINATIONS))
        raise UsageError(f"unsupported model/method {model}/{method}; allowed: {allowed}")


def run_fit(args, design, X, y):
    check_combination(args.model, args.method)
    sk, tk = _kind(args.spatial_kernel), _kind(args.temporal_kernel)
    if args.method == "ols":
        fit = fit_ols(design, X, y)
    elif args.method == "reml":
        simplex = SimplexOptions() if args.max_evals is None else SimplexOptions(max_evals=args.max_evals)
        fit = fit_reml(args.model, design, X, y, RemlOptions(sk, tk, simplex))
    else:
        opts = CwlsOptions(sk, tk, bins_from(args), fgls_iterations=args.fgls_iterations)
        if args.max_evals is not None:
            opts.simplex = SimplexOptions(max_evals=args.max_evals)
        fit = fit_cwls(args.model, design, X, y, opts=opts)
    if not fit.converged and not args.allow_nonconverged:
        raise NotConverged(f"optimizer stopped after {fit.n_evals} evaluations without converging "
                           "(use --allow-nonconverged to keep the result)")
    return fit


def bins_from(args):
    return BinSpec(args.n_bins, args.max_distance, args.max_lag)


PARAM_COLUMNS = {
    ThetaPS: ["sig2_delta", "sig2_gamma", "sig2_tau", "sig2_eta", "sig2_omega", "sig2_eps", "phi", "kappa"],
    ThetaSep: ["sig2_omega", "v_s", "v_t", "phi", "kappa"],
}


def parameter_row(fit):
    """Covariance parameters; ``kappa`` is the spatial and ``phi`` the temporal range."""
    th = fit.theta_hat
    if fit.method == "ols":
        return {"sig2_eps": th.sig2_eps}
    vals = {"phi": th.temporal.range, "kappa": th.spatial.range}
    for name in PARAM_COLUMNS[type(th)]:
        if name not in vals:
            vals[name] = getattr(th, name)
    return {k: vals[k] for k in PARAM_COLUMNS[type(th)]}


def fit_report(fit, names) -> str:
    lines = [f"model: {fit.model}", f"method: {fit.method}", f"converged: {fit.converged}",
             f"iterations: {fit.iterations}", f"evaluations: {fit.n_evals}", f"objective: {fit.objective:.10g}"]
    for k, v in fit.wall_time_s.items():
        lines.append(f"{k}: {v:.4f}")
    lines.append("covariance parameters:")
    lines += [f"  {k} = {v:.6g}" for k, v in parameter_row(fit).items()]
    lines.append(f"{'coefficient':>14} {'estimate':>12} {'std_error':>12}")
    for name, b, se in zip(names, fit.beta_hat, fit.se):
        lines.append(f"{name:>14} {b:>12.6g} {se:>12.6g}")
    return "\n".join(lines)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])


def _load(args, targets=None):
    return load_observations(args.data, manifest_from(args), extra_targets=targets)


def cmd_fit(args):
    table, design, X, y = _load(args)
    fit = run_fit(args, design, X, y)
    report = fit_report(fit, table.covariate_names)
    with open(args.out + "_fit.txt", "w", encoding="utf-8") as fh:
        fh.write(report + "\n")
    row = parameter_row(fit)
    write_csv(args.out + "_params.csv", list(row), [list(row.values())])
    write_csv(args.out + "_beta.csv", ["coefficient", "estimate", "std_error"],
              [[n, float(b), float(s)] for n, b, s in zip(table.covariate_names, fit.beta_hat, fit.se)])
    print(report)
    return 0


def cmd_predict(args):
    table, design, X, y = _load(args, args.targets)
    header = ["site_id", "time", "y_hat", "pred_var", "lower", "upper"]
    if table.targets.size == 0:
        write_csv(args.out, header, [])
        return 0
    fit = run_fit(args, design, X, y)
    pred = blup(fit, design, X, y, table.X_targets, table.targets)
    rows = []
    for k, cell in enumerate(pred.targets):
        sid = table.site_ids[cell % design.S]
        t = float(design.times[cell // design.S])
        rows.append([sid, t, float(pred.y_hat[k]), float(pred.pred_var[k]), float(pred.lower[k]), float(pred.upper[k])])
    write_csv(args.out, header, rows)
    return 0


def _grid(text, name):
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"--{name} must be a comma-separated list of numbers") from None


def cmd_semivariogram(args):
    table, design, X, y = _load(args)
    fit = run_fit(args, design, X, y)
    emp = empirical_sv(design, y - X @ fit.beta_hat, bins_from(args))
    write_csv(args.out + "_empirical.csv", ["h_s", "h_t", "gamma_hat", "count"],
              [[float(a), float(b), float(g), int(c)] for a, b, g, c in emp.rows()])
    hs = _grid(args.hs_grid, "hs-grid") if args.hs_grid else np.unique(np.r_[0.0, np.nan_to_num(emp.hs_center[:, 0])])
    ht = _grid(args.ht_grid, "ht-grid") if args.ht_grid else np.asarray(emp.temporal_bins)
    HS, HT = np.meshgrid(hs, ht, indexing="ij")
    g = theoretical_sv(fit.theta_hat, HS.ravel(), HT.ravel())
    write_csv(args.out + "_fitted.csv", ["h_s", "h_t", "gamma"],
              [[float(a), float(b), float(c)] for a, b, c in zip(HS.ravel(), HT.ravel(), np.atleast_1d(g))])
    return 0


def cmd_simulate(args):
    from .harness import SimProtocol, get_config, run_study, simulate_dataset
    from .io import write_observations

    proto = SimProtocol(reps=args.reps, seed=args.seed)
    try:
        cfgs = [get_config(c) for c in args.configs.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(args.out_dir, exist_ok=True)
    if args.emit_data:
        data = simulate_dataset(cfgs[0], proto, args.rep)
        path = os.path.join(args.out_dir, f"sim_{cfgs[0].name}_{args.seed}_{args.rep}.csv")
        write_observations(path, data.design, data.X, data.y)
        print(path)
        return 0
    methods = args.methods.split(",") if args.methods else None
    kwargs = {"methods": methods} if methods else {}
    try:
        tables = run_study(cfgs, proto, workers=args.workers, out_dir=args.out_dir, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for t in tables.values():
        print(t.to_text())
    return 0


def cmd_bench(args):
    from .harness import bench_inversion, format_bench

    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError:
        raise UsageError("--sizes must be comma-separated integers") from None
    os.makedirs(args.out_dir, exist_ok=True)
    rows = bench_inversion(args.bench_config, sizes, args.missing, args.matrices, args.seed, args.out_dir)
    print(format_bench(rows))
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--data", required=True, help="observation CSV")
    model.add_argument("--model", choices=["product_sum", "separable", "ire"])
    model.add_argument("--method", choices=["reml", "cwls", "ols"])
    model.add_argument("--spatial-kernel", dest="spatial_kernel")
    model.add_argument("--temporal-kernel", dest="temporal_kernel")
    model.add_argument("--n-bins", dest="n_bins", type=int)
    model.add_argument("--max-distance", dest="max_distance", type=float)
    model.add_argument("--max-lag", dest="max_lag", type=int)
    model.add_argument("--max-evals", dest="max_evals", type=int)
    model.add_argument("--fgls-iterations", dest="fgls_iterations", type=int)
    model.add_argument("--allow-nonconverged", action="store_true")
    for flag in ("site", "x", "y", "time", "response"):
        model.add_argument(f"--{flag}-col", dest=f"{flag}_col")
    model.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")

    p = argparse.ArgumentParser(prog="stlmm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    f = sub.add_parser("fit", parents=[common, model], help="estimate covariance and fixed effects")
    f.add_argument("--out", required=True, help="output prefix")
    f.set_defaults(func=cmd_fit)
    pr = sub.add_parser("predict", parents=[common, model], help="predict blank-response rows and --targets")
    pr.add_argument("--targets", help="CSV of cells to predict")
    pr.add_argument("--out", required=True, help="prediction CSV")
    pr.set_defaults(func=cmd_predict)
    sv = sub.add_parser("semivariogram", parents=[common, model], help="empirical and fitted semivariogram tables")
    sv.add_argument("--hs-grid", dest="hs_grid", help="spatial lags for the fitted surface")
    sv.add_argument("--ht-grid", dest="ht_grid", help="temporal lags for the fitted surface")
    sv.add_argument("--out", required=True, help="output prefix")
    sv.set_defaults(func=cmd_semivariogram)
    si = sub.add_parser("simulate", parents=[common], help="run the simulation study")
    si.add_argument("--configs", default="VC2", help="comma-separated VC1..VC4")
    si.add_argument("--reps", type=int, default=200)
    si.add_argument("--methods", help="comma-separated subset of PS_REML,PS_CWLS,SEP_REML,SEP_CWLS,IRE_OLS")
    si.add_argument("--emit-data", action="store_true", help="write one simulated dataset instead")
    si.add_argument("--rep", type=int, default=0, help="repetition written by --emit-data")
    si.add_argument("--out-dir", dest="out_dir", default=".")
    si.set_defaults(func=cmd_simulate)
    b = sub.add_parser("bench", parents=[common], help="time structured versus dense solves")
    b.add_argument("--vc", dest="bench_config", default="VC3")
    b.add_argument("--sizes", default="50,1000,3000")
    b.add_argument("--missing", type=float, default=0.05)
    b.add_argument("--matrices", type=int, default=10)
    b.add_argument("--out-dir", dest="out_dir", default=".")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolve(args)
        return args.func(args)
    except UsageError as exc:
        print(f"stlmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, EstimabilityError) as exc:
        print(f"stlmm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NotConverged as exc:
        print(f"stlmm: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
