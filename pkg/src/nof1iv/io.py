"""File formats: trial CSV, truth sidecars, manifests and prior configs.

The trial CSV has the header ``participant_id,period,day,R,X,Y[,w1..wd]``
with one row per day; empty X/Y cells mean missing.  Reading and writing
round-trip exactly, including missingness.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .gibbs import CoefficientPrior, PriorSpec
from .meta import HyperPriors
from .model import TrialLayout, TrialSeries

__all__ = [
    "ingest_csv",
    "write_csv",
    "write_json",
    "load_priors",
    "load_hyperpriors",
]


class CsvFormatError(ValueError):
    """A data file does not match the trial CSV contract."""


def _parse_cell(raw: str, line_no: int, column: str) -> float:
    raw = raw.strip()
    if raw == "":
        return float("nan")
    if raw in ("0", "1"):
        return float(raw)
    raise CsvFormatError(f"line {line_no}: {column} must be 0, 1 or empty, got {raw!r}")


def ingest_csv(path: str | Path) -> TrialSeries:
    """Read one participant's trial grid; validates the full (period, day)
    lattice, binary coding, and constancy of R within periods."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        expected = ["participant_id", "period", "day", "R", "X", "Y"]
        if [h.strip() for h in header[:6]] != expected:
            raise CsvFormatError(f"{path}: header must start with {','.join(expected)}")
        w_names = [h.strip() for h in header[6:]]
        d_w = len(w_names)

        rows: dict[tuple[int, int], tuple] = {}
        participant = None
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6 + d_w:
                raise CsvFormatError(f"line {line_no}: expected {6 + d_w} fields, got {len(row)}")
            pid = row[0].strip()
            participant = pid if participant is None else participant
            if pid != participant:
                raise CsvFormatError(f"line {line_no}: multiple participant ids in one file")
            try:
                period, day = int(row[1]), int(row[2])
            except ValueError:
                raise CsvFormatError(f"line {line_no}: period and day must be integers") from None
            if period < 1 or day < 1:
                raise CsvFormatError(f"line {line_no}: period and day are 1-based")
            key = (period, day)
            if key in rows:
                raise CsvFormatError(f"line {line_no}: duplicate entry for period {period} day {day}")
            r_raw = row[3].strip()
            if r_raw not in ("0", "1"):
                raise CsvFormatError(f"line {line_no}: R must be 0 or 1, got {r_raw!r}")
            x = _parse_cell(row[4], line_no, "X")
            y = _parse_cell(row[5], line_no, "Y")
            try:
                w = [float(c) for c in row[6:]]
            except ValueError:
                raise CsvFormatError(f"line {line_no}: covariates must be numeric") from None
            rows[key] = (int(r_raw), x, y, w)

    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    periods = max(k[0] for k in rows)
    days = max(k[1] for k in rows)
    layout = TrialLayout(periods=periods, days_per_period=days)
    for t in range(1, periods + 1):
        for j in range(1, days + 1):
            if (t, j) not in rows:
                raise CsvFormatError(f"{path}: missing row for period {t} day {j}")

    r = np.empty(layout.total, dtype=int)
    x = np.empty(layout.total)
    y = np.empty(layout.total)
    w = np.empty((layout.total, d_w))
    for t in range(periods):
        for j in range(days):
            rv, xv, yv, wv = rows[(t + 1, j + 1)]
            k = t * days + j
            r[k], x[k], y[k] = rv, xv, yv
            w[k] = wv
    return TrialSeries(
        layout=layout, r=r, x=x, y=y,
        w=w if d_w else None, participant_id=participant or "",
    )


def write_csv(series: TrialSeries, path: str | Path) -> None:
    path = Path(path)
    d_w = series.covariate_dim
    header = ["participant_id", "period", "day", "R", "X", "Y"]
    header += [f"w{j + 1}" for j in range(d_w)]

    def cell(v: float) -> str:
        return "" if np.isnan(v) else str(int(v))

    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        days = series.layout.days_per_period
        for k in range(series.layout.total):
            row = [
                series.participant_id,
                str(k // days + 1),
                str(k % days + 1),
                str(int(series.r[k])),
                cell(series.x[k]),
                cell(series.y[k]),
            ]
            row += [repr(float(v)) for v in series.w[k]]
            writer.writerow(row)


def write_json(payload: dict, path: str | Path) -> None:
    """Canonical JSON output: sorted keys, fixed separators, trailing newline.
    Identical payloads serialize byte-identically."""
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    )


def _coef_prior(entry: dict, fallback: CoefficientPrior) -> CoefficientPrior:
    return CoefficientPrior(
        mean=float(entry.get("mean", fallback.mean)),
        var=float(entry.get("var", fallback.var)),
        lower=float(entry.get("lower", fallback.lower)),
        upper=float(entry.get("upper", fallback.upper)),
    )


def load_priors(path: str | Path | None, covariate_dim: int = 0, **defaults) -> PriorSpec:
    """Prior config from JSON; missing entries fall back on the formal
    defaults.  Recognized keys: the coefficient names (each a
    mean/var/lower/upper object), rho_star_bounds, rho_u_bounds, slope_var,
    bound."""
    if path is None:
        return PriorSpec.defaults(covariate_dim=covariate_dim, **defaults)
    cfg = json.loads(Path(path).read_text())
    base = PriorSpec.defaults(
        covariate_dim=covariate_dim,
        slope_var=float(cfg.get("slope_var", defaults.get("slope_var", 1.0))),
        bound=float(cfg.get("bound", defaults.get("bound", 4.0))),
        alpha0_mean=defaults.get("alpha0_mean", 0.0),
        beta0_mean=defaults.get("beta0_mean", 0.0),
    )
    kwargs = {}
    for name in ("alpha0", "alpha1", "beta0", "beta1", "beta2"):
        if name in cfg:
            kwargs[name] = _coef_prior(cfg[name], getattr(base, name))
    if "alpha_w" in cfg:
        kwargs["alpha_w"] = tuple(_coef_prior(e, base.alpha_w[j]) for j, e in enumerate(cfg["alpha_w"]))
    if "beta_w" in cfg:
        kwargs["beta_w"] = tuple(_coef_prior(e, base.beta_w[j]) for j, e in enumerate(cfg["beta_w"]))
    for name in ("rho_star_bounds", "rho_u_bounds"):
        if name in cfg:
            kwargs[name] = tuple(float(v) for v in cfg[name])
    return PriorSpec(
        **{
            **{f: getattr(base, f) for f in (
                "alpha0", "alpha1", "beta0", "beta1", "beta2",
                "alpha_w", "beta_w", "rho_star_bounds", "rho_u_bounds",
            )},
            **kwargs,
        }
    )


def load_hyperpriors(path: str | Path | None, covariate_dim: int = 0, **defaults) -> HyperPriors:
    """Hyperprior config from JSON; same shape as the prior config plus
    ``sd_scale``."""
    if path is None:
        return HyperPriors.defaults(covariate_dim=covariate_dim, **defaults)
    cfg = json.loads(Path(path).read_text())
    base = HyperPriors.defaults(
        covariate_dim=covariate_dim,
        slope_var=float(cfg.get("slope_var", defaults.get("slope_var", 1.0))),
        bound=float(cfg.get("bound", defaults.get("bound", 4.0))),
        sd_scale=float(cfg.get("sd_scale", defaults.get("sd_scale", 0.4))),
        alpha0_mean=defaults.get("alpha0_mean", 0.0),
        beta0_mean=defaults.get("beta0_mean", 0.0),
    )
    kwargs = {}
    for name in ("alpha0", "alpha1", "beta0", "beta1", "beta2"):
        if name in cfg:
            kwargs[name] = _coef_prior(cfg[name], getattr(base, name))
    for name in ("rho_star_bounds", "rho_u_bounds"):
        if name in cfg:
            kwargs[name] = tuple(float(v) for v in cfg[name])
    fields = (
        "alpha0", "alpha1", "beta0", "beta1", "beta2",
        "alpha_w", "beta_w", "sd_scale", "rho_star_bounds", "rho_u_bounds",
    )
    return HyperPriors(**{**{f: getattr(base, f) for f in fields}, **kwargs})
