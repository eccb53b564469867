"""Reading and writing observation tables.

A table is a UTF-8 CSV with a header row. Each row is one site/time cell
with planar coordinates in km, a response (blank marks a cell to predict)
and covariates. Sites are indexed in sorted id order. Times are integers,
decimals, or ISO dates; dates become day offsets from the earliest date.
Cells absent from the file are treated as unobserved.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .covariance import StDesign

MAX_DISTANCE_KM = 1e5


class DataError(ValueError):
    pass


@dataclass
class Manifest:
    site: str = "site_id"
    x: str = "x_km"
    y: str = "y_km"
    time: str = "time"
    response: str = "response"
    covariates: list | None = None  # None: every other column

    def required(self):
        return [self.site, self.x, self.y, self.time, self.response]


@dataclass
class ObservationTable:
    manifest: Manifest
    site_ids: list
    covariate_names: list
    time_origin: dt.date | None  # set when times were dates
    targets: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    X_targets: np.ndarray = None  # intercept-prepended rows for ``targets``


def _parse_float(text, what, rowno):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise DataError(f"row {rowno}: {what} {text!r} is not a number") from None
    return v


def _parse_time(text, rowno):
    s = text.strip()
    try:
        return float(s), False
    except ValueError:
        pass
    try:
        return dt.date.fromisoformat(s[:10]), True
    except ValueError:
        raise DataError(f"row {rowno}: time {text!r} is neither a number nor an ISO date") from None


def read_rows(path, manifest: Manifest):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in manifest.required() if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        covs = manifest.covariates
        if covs is None:
            covs = [c for c in header if c not in manifest.required()]
        absent = [c for c in covs if c not in header]
        if absent:
            raise DataError(f"{path}: missing covariate column(s) {', '.join(absent)}")
        return list(reader), list(covs)


def load_observations(path, manifest: Manifest | None = None, extra_targets=None):
    """Parse a table into ``(table, design, X, y)``.

    ``X`` and ``y`` hold observed cells in canonical order with an intercept
    column prepended. Rows with a blank response, and rows of the optional
    ``extra_targets`` file, become prediction targets; their sites and times
    join the design as unobserved cells.
    """
    manifest = manifest or Manifest()
    rows, covs = read_rows(path, manifest)
    tagged = [(r, i + 2, False) for i, r in enumerate(rows)]  # row 1 is the header
    if extra_targets is not None:
        more, _ = read_rows(extra_targets, Manifest(**{**manifest.__dict__, "covariates": covs}))
        tagged += [(r, i + 2, True) for i, r in enumerate(more)]
    return _build(tagged, manifest, covs)


def _build(tagged, manifest, covs):
    coords, site_order = {}, []
    parsed, kinds = [], set()
    for r, rowno, forced_target in tagged:
        sid = r[manifest.site].strip()
        xy = (_parse_float(r[manifest.x], manifest.x, rowno), _parse_float(r[manifest.y], manifest.y, rowno))
        if not all(math.isfinite(v) for v in xy):
            raise DataError(f"row {rowno}: non-finite coordinates for site {sid!r}")
        if sid in coords:
            if not np.allclose(coords[sid][0], xy, rtol=0, atol=1e-9):
                raise DataError(
                    f"row {rowno}: site {sid!r} has coordinates {xy}, but row {coords[sid][1]} gave {coords[sid][0]}"
                )
        else:
            coords[sid] = (xy, rowno)
            site_order.append(sid)
        t, is_date = _parse_time(r[manifest.time], rowno)
        kinds.add(is_date)
        x = []
        for c in covs:
            text = (r.get(c) or "").strip()
            if text == "":
                raise DataError(f"row {rowno}: covariate {c!r} is missing")
            x.append(_parse_float(text, c, rowno))
        resp_text = "" if forced_target else (r.get(manifest.response) or "").strip()
        if resp_text == "":
            resp = None
        else:
            resp = _parse_float(resp_text, manifest.response, rowno)
            if not math.isfinite(resp):
                raise DataError(f"row {rowno}: non-finite response")
        parsed.append((sid, t, x, resp, rowno))
    if not parsed:
        raise DataError("no data rows")
    if len(kinds) > 1:
        raise DataError("time column mixes numbers and dates")
    origin = None
    if kinds == {True}:
        origin = min(p[1] for p in parsed)
        parsed = [(s, float((t - origin).days), x, v, n) for s, t, x, v, n in parsed]

    site_order = sorted(site_order)
    site_index = {s: i for i, s in enumerate(site_order)}
    times = np.array(sorted({p[1] for p in parsed}))
    time_index = {t: j for j, t in enumerate(times)}
    S, T = len(site_order), len(times)
    sites = np.array([coords[s][0] for s in site_order], dtype=float)
    if S > 1 and pdist(sites).max() >= MAX_DISTANCE_KM:
        raise DataError(f"site separations reach {pdist(sites).max():.3g} km; coordinates must be planar km")

    seen = {}
    obs_rows, tgt_rows = {}, {}
    for sid, t, x, resp, rowno in parsed:
        cell = time_index[t] * S + site_index[sid]
        if cell in seen:
            raise DataError(f"rows {seen[cell]} and {rowno}: duplicate site {sid!r} at time {t:g}")
        seen[cell] = rowno
        (tgt_rows if resp is None else obs_rows)[cell] = ([1.0] + x, resp)
    if not obs_rows:
        raise DataError("no rows with a response")
    observed = np.zeros(S * T, dtype=bool)
    observed[list(obs_rows)] = True
    design = StDesign(sites, times, observed)
    X = np.array([obs_rows[c][0] for c in design.obs_index])
    y = np.array([obs_rows[c][1] for c in design.obs_index])
    targets = np.array(sorted(tgt_rows), dtype=np.intp)
    X_t = np.array([tgt_rows[c][0] for c in targets]).reshape(len(targets), 1 + len(covs))
    table = ObservationTable(manifest, site_order, ["intercept"] + covs, origin, targets, X_t)
    return table, design, X, y


def write_observations(path, design: StDesign, X, y, site_ids=None, covariate_names=None, manifest=None):
    """Write observed cells in canonical order; ``X`` must include the intercept column."""
    manifest = manifest or Manifest()
    X = np.asarray(X, dtype=float)
    site_ids = site_ids or [f"s{i:03d}" for i in range(design.S)]
    names = covariate_names or [f"x{k}" for k in range(1, X.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([manifest.site, manifest.x, manifest.y, manifest.time, manifest.response] + list(names))
        for row, cell in enumerate(design.obs_index):
            i, j = cell % design.S, cell // design.S
            w.writerow(
                [site_ids[i], repr(float(design.sites[i, 0])), repr(float(design.sites[i, 1])),
                 repr(float(design.times[j])), repr(float(y[row]))]
                + [repr(float(v)) for v in X[row, 1:]]
            )
