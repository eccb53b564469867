import numpy as np
import pytest

from stlmm.covariance import StDesign, ThetaPS, ThetaSep
from stlmm.kernels import CorrelationModel

TABLE2 = {
    "VC1": (18, 1, 18, 1, 20, 2),
    "VC2": (16, 4, 16, 4, 16, 4),
    "VC3": (10, 10, 10, 10, 10, 10),
    "VC4": (30, 0.1, 20, 0.1, 2, 7.8),
}


def ps_theta(v, kappa=2.25, phi=9.0, kind="exponential"):
    return ThetaPS(*v, CorrelationModel(kind, kappa), CorrelationModel(kind, phi))


def sep_theta(total=10.0, v_s=0.3, v_t=0.2, kappa=2.25, phi=9.0, kind="exponential"):
    return ThetaSep(total, v_s, v_t, CorrelationModel(kind, kappa), CorrelationModel(kind, phi))


def make_design(S, T, missing=0.0, seed=0, extent=5.0):
    rng = np.random.default_rng(seed)
    sites = rng.uniform(0, extent, (S, 2))
    observed = np.ones(S * T, dtype=bool)
    k = int(round(missing * S * T))
    if k:
        observed[rng.choice(S * T, k, replace=False)] = False
    return StDesign(sites, np.arange(1.0, T + 1), observed)


# --- independent dense oracles: explicit incidence matrices and Kronecker products ---

def oracle_corr(kind, rng, h):
    h = np.asarray(h, dtype=float)
    if kind == "exponential":
        return np.exp(-3.0 * h / rng)
    if kind == "gaussian":
        return np.exp(-3.0 * (h / rng) ** 2)
    u = h / rng
    return np.where(u < 1, 1 - 1.5 * u + 0.5 * u**3, 0.0)


def oracle_parts(theta, design):
    S, T = design.S, design.T
    ds = np.sqrt(((design.sites[:, None, :] - design.sites[None, :, :]) ** 2).sum(-1))
    dt = np.abs(design.times[:, None] - design.times[None, :])
    rs = oracle_corr(theta.spatial.kind.value, theta.spatial.range, ds)
    rt = oracle_corr(theta.temporal.kind.value, theta.temporal.range, dt)
    zs = np.kron(np.ones((T, 1)), np.eye(S))  # cell (j, i) -> site i
    zt = np.kron(np.eye(T), np.ones((S, 1)))  # cell (j, i) -> time j
    return rs, rt, zs, zt


def oracle_full_sigma(theta, design):
    rs, rt, zs, zt = oracle_parts(theta, design)
    S, T = design.S, design.T
    if isinstance(theta, ThetaPS):
        d, g, t, e, w, eps = theta.variances
        return (
            d * zs @ rs @ zs.T + g * zs @ zs.T + t * zt @ rt @ zt.T + e * zt @ zt.T
            + w * np.kron(rt, rs) + eps * np.eye(S * T)
        )
    rs_star = (1 - theta.v_s) * rs + theta.v_s * np.eye(S)
    rt_star = (1 - theta.v_t) * rt + theta.v_t * np.eye(T)
    return theta.sig2_omega * np.kron(rt_star, rs_star)


def oracle_sigma(theta, design):
    idx = design.obs_index
    return oracle_full_sigma(theta, design)[np.ix_(idx, idx)]


def oracle_neg2_reml(theta, design, X, y):
    sig = oracle_sigma(theta, design)
    si_x = np.linalg.solve(sig, X)
    si_y = np.linalg.solve(sig, y)
    xtsx = X.T @ si_x
    beta = np.linalg.solve(xtsx, X.T @ si_y)
    r = y - X @ beta
    return np.linalg.slogdet(sig)[1] + r @ np.linalg.solve(sig, r) + np.linalg.slogdet(xtsx)[1]


def rel_err(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / np.max(np.abs(b)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_station_table(path, S=33, T=31, absent=51, seed=0, blank=0):
    """Daily station records on a planar km grid with ``absent`` missing cells.

    Covariates: day of month, site elevation and a cell-level rainfall value.
    ``blank`` further cells are written with an empty response.
    """
    import csv
    import datetime as dt

    from stlmm.harness import simulate_errors

    rng = np.random.default_rng(seed)
    sites = rng.uniform(0, 400, (S, 2))
    theta = ThetaPS(4.0, 1.0, 3.0, 1.0, 2.0, 1.0,
                    CorrelationModel("exponential", 250.0), CorrelationModel("exponential", 8.0))
    err = simulate_errors(theta, sites, np.arange(T, dtype=float), rng)
    elev = rng.uniform(0, 2, S)
    rain = rng.gamma(1.0, 1.0, S * T)
    cells = rng.permutation(S * T)
    drop, empty = set(cells[:absent]), set(cells[absent:absent + blank])
    start = dt.date(2020, 7, 1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "x_km", "y_km", "time", "response", "day", "elevation", "rain"])
        for j in range(T):
            for i in range(S):
                c = j * S + i
                if c in drop:
                    continue
                day = start + dt.timedelta(days=j)
                resp = "" if c in empty else f"{20 + 0.1 * day.day - 3 * elev[i] + 0.5 * rain[c] + err[c]:.4f}"
                w.writerow([f"st{i:02d}", f"{sites[i, 0]:.3f}", f"{sites[i, 1]:.3f}", day.isoformat(), resp,
                            day.day, f"{elev[i]:.4f}", f"{rain[c]:.4f}"])
    return path


# --- shared 200-repetition studies (criteria 4-6 and the study examples) ---

STUDY_REPS = 200


@pytest.fixture(scope="session")
def study_tables(tmp_path_factory):
    import os

    from stlmm.harness import SimProtocol, run_study

    workers = int(os.environ.get("STLMM_WORKERS") or os.cpu_count() or 1)
    out = tmp_path_factory.mktemp("study")
    return run_study(["VC2", "VC4"], SimProtocol(reps=STUDY_REPS), workers=workers, out_dir=out)


# --- one summary line per acceptance criterion ---

_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        props = dict(report.user_properties)
        key = props.get("criterion", report.nodeid.split("::")[-1])
        if hasattr(report, "wasxfail") and report.skipped:
            status = "FAIL (expected)"
        else:
            status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _criteria[key] = f"{status}  {props.get('detail', '')}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_criteria, key=str):
        terminalreporter.write_line(f"criterion {key}: {_criteria[key]}")
