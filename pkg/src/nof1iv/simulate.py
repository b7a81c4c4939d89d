"""Synthetic N-of-1 trial generation, scenario catalog and truth oracles.

Data are generated from the rescaled latent model: the confounder path u is a
stationary AR(1) process with marginal variance rho and autocorrelation
rho_u, the two equation residuals are independent N(0, 1 - rho), and binary
exposure/outcome are zero-threshold indicators of the latent scores.
Randomization is blocked in pairs of periods so that on/off counts balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtr

from .model import (
    CO,
    NCO,
    ModelSpec,
    MonteCarloConfig,
    Params,
    TrialLayout,
    TrialSeries,
    UnscaledParams,
    estimand_dd,
    estimand_itt,
    estimand_ud,
    lagged_path,
    log_or,
)

__all__ = [
    "ScenarioSpec",
    "TruthRecord",
    "layout_for",
    "gen_randomization",
    "gen_ar1_u",
    "gen_trial",
    "true_estimand_oracle",
    "gen_scenario_ab_pair",
    "scenario_catalog",
    "get_scenario",
]

# Catalog rows never state the period structure, only total duration; five-day
# periods keep J near the weekly scale used in practice.
DEFAULT_DAYS_PER_PERIOD = 5


@dataclass(frozen=True)
class ScenarioSpec:
    """One row of the simulation design: true parameters plus bookkeeping.

    ``true_log_tau``/``true_log_theta`` are the published design values and
    are carried as metadata; oracle truths are computed independently by
    :func:`true_estimand_oracle`.
    """

    id: str
    duration: int
    rho: float
    rho_u: float
    alpha0: float
    alpha1: float
    beta0: float
    beta1: float
    beta2: float = 0.0
    variant: str = NCO
    iv_strength_label: str = ""
    true_log_tau: float = float("nan")
    true_log_theta: float = float("nan")
    replicates: int = 500

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if not -1.0 < self.rho_u < 1.0:
            raise ValueError("rho_u must lie in (-1, 1)")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @property
    def params(self) -> Params:
        return Params(
            alpha0=self.alpha0,
            alpha1=self.alpha1,
            beta0=self.beta0,
            beta1=self.beta1,
            beta2=self.beta2,
            rho=self.rho,
            rho_u=self.rho_u,
        )

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec(variant=self.variant)


@dataclass
class TruthRecord:
    """Hidden generation state kept beside a simulated series for white-box
    checks; never consumed by the fitting path."""

    scenario_id: str
    u: np.ndarray
    x_potential_r1: np.ndarray
    x_potential_r0: np.ndarray
    y_potential_x1: np.ndarray
    y_potential_x0: np.ndarray

    def as_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "u": self.u.tolist(),
            "x_potential_r1": self.x_potential_r1.astype(int).tolist(),
            "x_potential_r0": self.x_potential_r0.astype(int).tolist(),
            "y_potential_x1": self.y_potential_x1.astype(int).tolist(),
            "y_potential_x0": self.y_potential_x0.astype(int).tolist(),
        }


def layout_for(duration: int, days_per_period: int = DEFAULT_DAYS_PER_PERIOD) -> TrialLayout:
    """Layout for a catalog duration; periods must pair up for blocking."""
    if duration % days_per_period != 0:
        raise ValueError(f"duration {duration} not divisible by {days_per_period}-day periods")
    periods = duration // days_per_period
    if periods % 2 != 0:
        raise ValueError("period count must be even for block randomization")
    return TrialLayout(periods=periods, days_per_period=days_per_period)


def gen_randomization(periods: int, rng: np.random.Generator) -> np.ndarray:
    """Block randomization in pairs: the first period of each pair is
    Bernoulli(0.5) and the second its complement, so exactly half the periods
    are on-assignments."""
    if periods % 2 != 0:
        raise ValueError("periods must be even")
    first = (rng.random(periods // 2) < 0.5).astype(int)
    out = np.empty(periods, dtype=int)
    out[0::2] = first
    out[1::2] = 1 - first
    return out


def gen_ar1_u(
    total: int,
    rho: float,
    rho_u: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Stationary Gaussian AR(1) path with marginal variance ``rho`` and
    lag-k correlation ``rho_u ** k``."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if not -1.0 < rho_u < 1.0:
        raise ValueError("rho_u must lie in (-1, 1)")
    z = rng.standard_normal(total)
    innov = z * math.sqrt(rho * (1.0 - rho_u * rho_u))
    innov[0] = z[0] * math.sqrt(rho)
    return lfilter([1.0], [1.0, -rho_u], innov)


def _latent_outcome(
    s: ScenarioSpec, x: np.ndarray, u: np.ndarray, eta: np.ndarray
) -> np.ndarray:
    score = s.beta0 + s.beta1 * x
    if s.variant == CO:
        score = score + s.beta2 * lagged_path(x)
    return (score + u + eta > 0.0).astype(float)


def gen_trial(
    s: ScenarioSpec,
    layout: TrialLayout,
    rng: np.random.Generator,
    participant_id: str = "sim",
) -> tuple[TrialSeries, TruthRecord]:
    """Simulate one trial; returns the observed series plus its hidden truth.

    Potential exposure and outcome paths share the same (u, eps, eta) draws
    as the realized data, so the record is internally consistent.
    """
    total = layout.total
    r_periods = gen_randomization(layout.periods, rng)
    r_days = np.repeat(r_periods, layout.days_per_period)

    u = gen_ar1_u(total, s.rho, s.rho_u, rng)
    resid_sd = math.sqrt(1.0 - s.rho)
    eps = resid_sd * rng.standard_normal(total)
    eta = resid_sd * rng.standard_normal(total)

    x1 = (s.alpha0 + s.alpha1 + u + eps > 0.0).astype(float)
    x0 = (s.alpha0 + u + eps > 0.0).astype(float)
    x = np.where(r_days == 1, x1, x0)

    y = _latent_outcome(s, x, u, eta)
    y_pot_1 = _latent_outcome(s, np.ones(total), u, eta)
    y_pot_0 = _latent_outcome(s, np.zeros(total), u, eta)

    series = TrialSeries(
        layout=layout, r=r_days, x=x, y=y, participant_id=participant_id
    )
    truth = TruthRecord(
        scenario_id=s.id,
        u=u,
        x_potential_r1=x1,
        x_potential_r0=x0,
        y_potential_x1=y_pot_1,
        y_potential_x0=y_pot_0,
    )
    return series, truth


def true_estimand_oracle(
    s: ScenarioSpec,
    mc_paths: int = 100_000,
    rng: np.random.Generator | None = None,
    layout: TrialLayout | None = None,
    chunk: int = 20_000,
) -> tuple[float, float, float]:
    """Ground-truth (DD, UD, ITT) log odds ratios for a scenario.

    DD is closed form.  UD and ITT average the full generative process under
    forced randomization r = 1 and r = 0, drawing (u, eps, eta) jointly so
    that exposure selection and outcomes share the confounder path.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if layout is None:
        layout = layout_for(s.duration)
    dd = estimand_dd(s.params, s.model_spec)

    total = layout.total
    p_sel = [0.0, 0.0]  # event rates under forced r=0 / r=1
    done = 0
    while done < mc_paths:
        n = min(chunk, mc_paths - done)
        z = rng.standard_normal((n, total))
        innov = z * math.sqrt(s.rho * (1.0 - s.rho_u * s.rho_u))
        innov[:, 0] = z[:, 0] * math.sqrt(s.rho)
        u = lfilter([1.0], [1.0, -s.rho_u], innov, axis=1)
        resid_sd = math.sqrt(1.0 - s.rho)
        eps = resid_sd * rng.standard_normal((n, total))
        eta = resid_sd * rng.standard_normal((n, total))
        for arm in (0, 1):
            x = (s.alpha0 + s.alpha1 * arm + u + eps > 0.0).astype(float)
            score = s.beta0 + s.beta1 * x
            if s.variant == CO:
                lag = np.concatenate([np.zeros((n, 1)), x[:, :-1]], axis=1)
                score = score + s.beta2 * lag
            p_sel[arm] += float(np.sum(score + u + eta > 0.0))
        done += n
    n_days = mc_paths * total
    p1 = p_sel[1] / n_days
    p0_forced = float(ndtr(s.beta0))  # abstinence: u + eta is standard normal
    ud = log_or(p1, p0_forced)
    itt = log_or(p1, p_sel[0] / n_days)
    return dd, ud, itt


def gen_scenario_ab_pair(
    a: float,
    b: float,
    sigma_tilde_u_sq: float,
    base: UnscaledParams,
    layout: TrialLayout,
    rng: np.random.Generator,
) -> tuple[TrialSeries, TrialSeries]:
    """Generate one series under each of two equivalent confounding schemes.

    Scheme A gives the shared day-level confounder loadings (a, b); scheme B
    collapses them to (1, sgn(ab)) with confounder variance |ab| * sigma^2,
    pushing the leftover variance into the equation noise so the marginal
    variances (hence the joint law of the binary data) are unchanged.
    """
    if a * b == 0.0:
        raise ValueError("confounder loadings a and b must be nonzero")
    if sigma_tilde_u_sq <= 0.0:
        raise ValueError("sigma_tilde_u_sq must be positive")
    var_x_extra = (a * a - abs(a * b)) * sigma_tilde_u_sq
    var_y_extra = (b * b - abs(a * b)) * sigma_tilde_u_sq
    if 1.0 + var_x_extra <= 0.0 or 1.0 + var_y_extra <= 0.0:
        raise ValueError("variance reallocation produced a nonpositive noise variance")

    def build(load_x: float, load_y: float, var_u: float, vx: float, vy: float, pid: str):
        r_days = np.repeat(gen_randomization(layout.periods, rng), layout.days_per_period)
        u = math.sqrt(var_u) * rng.standard_normal(layout.total)
        x_lat = (
            base.alpha0
            + base.alpha1 * r_days
            + load_x * u
            + math.sqrt(vx) * rng.standard_normal(layout.total)
        )
        x = (x_lat > 0.0).astype(float)
        y_lat = (
            base.beta0
            + base.beta1 * x
            + load_y * u
            + math.sqrt(vy) * rng.standard_normal(layout.total)
        )
        y = (y_lat > 0.0).astype(float)
        return TrialSeries(layout=layout, r=r_days, x=x, y=y, participant_id=pid)

    series_a = build(a, b, sigma_tilde_u_sq, 1.0, 1.0, "scenario_a")
    sgn = 1.0 if a * b > 0 else -1.0
    series_b = build(
        1.0, sgn, abs(a * b) * sigma_tilde_u_sq, 1.0 + var_x_extra, 1.0 + var_y_extra, "scenario_b"
    )
    return series_a, series_b


_STRONG = {"alpha0": -0.85, "alpha1": 1.10, "iv_strength_label": "6.0 (strong)"}
_WEAK = {"alpha0": -0.25, "alpha1": 0.25, "iv_strength_label": "1.5 (weak)"}
_BIG_EFFECT = {"beta0": -1.00, "beta1": 0.50}
_SMALL_EFFECT = {"beta0": -0.25, "beta1": 0.25}


def _nco_rows(prefix: str, duration: int) -> list[ScenarioSpec]:
    rows = []
    for k, rho in enumerate(np.arange(0.1, 0.95, 0.1), start=1):
        rows.append(
            ScenarioSpec(
                id=f"{prefix}{k}", duration=duration, rho=round(float(rho), 1),
                rho_u=0.3, **_STRONG, **_BIG_EFFECT,
                true_log_tau=0.86, true_log_theta=0.60,
            )
        )
    for k, rho in zip((10, 11), (0.1, 0.5)):
        rows.append(
            ScenarioSpec(
                id=f"{prefix}{k}", duration=duration, rho=rho, rho_u=0.3,
                **_WEAK, **_BIG_EFFECT, true_log_tau=0.86, true_log_theta=0.50,
            )
        )
    for k, rho in zip((12, 13), (0.1, 0.5)):
        rows.append(
            ScenarioSpec(
                id=f"{prefix}{k}", duration=duration, rho=rho, rho_u=0.7,
                **_STRONG, **_BIG_EFFECT, true_log_tau=0.86, true_log_theta=0.60,
            )
        )
    for k, rho in zip((14, 15), (0.1, 0.5)):
        rows.append(
            ScenarioSpec(
                id=f"{prefix}{k}", duration=duration, rho=rho, rho_u=0.3,
                **_STRONG, **_SMALL_EFFECT, true_log_tau=0.40, true_log_theta=0.24,
            )
        )
    return rows


def _co_rows(prefix: str, duration: int) -> list[ScenarioSpec]:
    return [
        ScenarioSpec(
            id=f"{prefix}{k}", duration=duration, rho=rho, rho_u=0.3,
            **_STRONG, **_BIG_EFFECT, beta2=0.20, variant=CO,
            true_log_tau=1.19, true_log_theta=0.76,
        )
        for k, rho in zip((1, 3, 5, 7, 9), (0.1, 0.3, 0.5, 0.7, 0.9))
    ]


def scenario_catalog() -> list[ScenarioSpec]:
    """All 60 design rows: T/S/L 1-15 without carryover plus the CO grid."""
    rows: list[ScenarioSpec] = []
    for prefix, duration in (("T", 50), ("S", 200), ("L", 1000)):
        rows.extend(_nco_rows(prefix, duration))
    for prefix, duration in (("COT", 50), ("COS", 200), ("COL", 1000)):
        rows.extend(_co_rows(prefix, duration))
    return rows


def get_scenario(scenario_id: str) -> ScenarioSpec:
    for row in scenario_catalog():
        if row.id == scenario_id:
            return row
    raise KeyError(f"unknown scenario id {scenario_id!r}")
