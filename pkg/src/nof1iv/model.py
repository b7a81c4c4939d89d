"""Domain types and causal-estimand computations for the latent probit IV model.

Two model variants are supported: ``NCO`` (no carryover) and ``CO`` (one-day
carryover, an extra lagged-exposure coefficient in the outcome equation).
All quantities live on the rescaled probit scale where both latent equations
have unit marginal error variance and share a cross-equation correlation
``rho``; ``rho_u`` is the lag-one autocorrelation of the latent confounder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

__all__ = [
    "NCO",
    "CO",
    "TrialLayout",
    "TrialSeries",
    "ModelSpec",
    "Params",
    "UnscaledParams",
    "EstimandSummary",
    "MonteCarloConfig",
    "rescale",
    "unrescale",
    "lagged_path",
    "event_rate_bar",
    "log_or",
    "estimand_dd",
    "estimand_ud",
    "estimand_itt",
    "summarize_estimand",
]

NCO = "NCO"
CO = "CO"


@dataclass(frozen=True)
class TrialLayout:
    """Grid of an N-of-1 trial: T periods of J days each, day-major order."""

    periods: int
    days_per_period: int

    def __post_init__(self):
        if self.periods < 1 or self.days_per_period < 1:
            raise ValueError("periods and days_per_period must be >= 1")

    @property
    def total(self) -> int:
        return self.periods * self.days_per_period


def _as_binary_or_nan(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    ok = np.isnan(arr) | (arr == 0.0) | (arr == 1.0)
    if not np.all(ok):
        raise ValueError(f"{name} entries must be 0, 1, or missing")
    return arr


@dataclass
class TrialSeries:
    """One participant's observed randomization, exposure and outcome grid.

    ``r`` is the per-day randomization indicator (constant within a period),
    ``x`` the exposure and ``y`` the outcome; ``x`` and ``y`` use NaN for
    missing days.  ``w`` holds optional per-day covariates, shape (L, d_w).
    """

    layout: TrialLayout
    r: np.ndarray
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray | None = None
    participant_id: str = ""

    def __post_init__(self):
        total = self.layout.total
        self.r = np.asarray(self.r, dtype=int)
        self.x = _as_binary_or_nan(self.x, "x")
        self.y = _as_binary_or_nan(self.y, "y")
        if self.r.shape != (total,) or self.x.shape != (total,) or self.y.shape != (total,):
            raise ValueError("r, x, y must all have layout.total entries")
        if not np.isin(self.r, (0, 1)).all():
            raise ValueError("r entries must be 0 or 1")
        per_period = self.r.reshape(self.layout.periods, self.layout.days_per_period)
        varying = np.nonzero((per_period != per_period[:, :1]).any(axis=1))[0]
        if varying.size:
            raise ValueError(f"randomization varies within period {varying[0] + 1}")
        if self.w is None:
            self.w = np.zeros((total, 0))
        else:
            self.w = np.asarray(self.w, dtype=float)
            if self.w.ndim != 2 or self.w.shape[0] != total:
                raise ValueError("w must have shape (layout.total, d_w)")

    @property
    def covariate_dim(self) -> int:
        return self.w.shape[1]

    @property
    def period_assignments(self) -> np.ndarray:
        return self.r.reshape(self.layout.periods, self.layout.days_per_period)[:, 0]


@dataclass(frozen=True)
class ModelSpec:
    """Which structural variant is being used and the sign of the confounder
    loading in the outcome equation."""

    variant: str = NCO
    sign_s: int = 1
    covariate_dim: int = 0

    def __post_init__(self):
        if self.variant not in (NCO, CO):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.sign_s not in (1, -1):
            raise ValueError("sign_s must be +1 or -1")
        if self.covariate_dim < 0:
            raise ValueError("covariate_dim must be >= 0")

    @property
    def has_carryover(self) -> bool:
        return self.variant == CO


def _vec(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class Params:
    """Rescaled structural coefficients plus the two correlations.

    ``rho`` equals the variance of the rescaled latent confounder and lies in
    [0, 1); ``rho_u`` is its AR(1) autocorrelation in (-1, 1).  Under NCO the
    carryover coefficient ``beta2`` is identically zero.
    """

    alpha0: float
    alpha1: float
    beta0: float
    beta1: float
    beta2: float = 0.0
    alpha_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rho: float = 0.0
    rho_u: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha_w", _vec(self.alpha_w))
        object.__setattr__(self, "beta_w", _vec(self.beta_w))
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if not -1.0 < self.rho_u < 1.0:
            raise ValueError("rho_u must lie in (-1, 1)")
        if self.alpha_w.shape != self.beta_w.shape:
            raise ValueError("alpha_w and beta_w must have equal length")


@dataclass(frozen=True)
class UnscaledParams:
    """Structural coefficients on the original latent scale, where the
    confounder has variance ``sigma_u_sq`` and both residuals are standard
    normal."""

    alpha0: float = 0.0
    alpha1: float = 0.0
    beta0: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    sigma_u_sq: float = 0.0

    def __post_init__(self):
        if self.sigma_u_sq < 0.0:
            raise ValueError("sigma_u_sq must be nonnegative")


def rescale(u: UnscaledParams, rho_u: float = 0.0) -> Params:
    """Map unscaled coefficients to the unit-variance probit scale.

    Every coefficient is divided by c = sqrt(1 + sigma_u^2) and the residual
    confounding becomes rho = sigma_u^2 / (1 + sigma_u^2).  The AR(1)
    autocorrelation is untouched by rescaling and is passed through.
    """
    c = math.sqrt(1.0 + u.sigma_u_sq)
    rho = u.sigma_u_sq / (1.0 + u.sigma_u_sq)
    return Params(
        alpha0=u.alpha0 / c,
        alpha1=u.alpha1 / c,
        beta0=u.beta0 / c,
        beta1=u.beta1 / c,
        beta2=u.beta2 / c,
        rho=rho,
        rho_u=rho_u,
    )


def unrescale(p: Params) -> UnscaledParams:
    """Inverse of :func:`rescale`; recovers sigma_u^2 = rho / (1 - rho)."""
    sigma_u_sq = p.rho / (1.0 - p.rho)
    c = math.sqrt(1.0 + sigma_u_sq)
    return UnscaledParams(
        alpha0=p.alpha0 * c,
        alpha1=p.alpha1 * c,
        beta0=p.beta0 * c,
        beta1=p.beta1 * c,
        beta2=p.beta2 * c,
        sigma_u_sq=sigma_u_sq,
    )


def lagged_path(x: np.ndarray, first_lag: float = 0.0) -> np.ndarray:
    """Previous-day exposure in flat day-major order.

    Period boundaries carry over (day 1 of period t lags the last day of
    period t-1); the very first trial day has no predecessor and lags
    ``first_lag`` (0 by default: no pre-trial exposure).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[0] = first_lag
    out[1:] = x[:-1]
    return out


def _outcome_scores(
    p: Params,
    spec: ModelSpec,
    x_path: np.ndarray,
    x_lag_path: np.ndarray | None,
    w: np.ndarray | None,
) -> np.ndarray:
    x_path = np.asarray(x_path, dtype=float)
    score = p.beta0 + p.beta1 * x_path
    if spec.has_carryover:
        if x_lag_path is None:
            raise ValueError("CO model requires a lagged exposure path")
        x_lag_path = np.asarray(x_lag_path, dtype=float)
        if x_lag_path.shape != x_path.shape:
            raise ValueError("x_lag_path length does not match x_path")
        score = score + p.beta2 * x_lag_path
    if w is not None and np.size(w) > 0:
        w = np.asarray(w, dtype=float)
        if w.shape[0] != x_path.shape[0]:
            raise ValueError("w row count does not match path length")
        score = score + w @ p.beta_w
    return score


def _rate_pair(scores: np.ndarray) -> tuple[float, float]:
    # Averaging the complement separately keeps log odds finite when single
    # terms round to 1.0 in float64.
    p = float(np.mean(ndtr(scores)))
    q = float(np.mean(ndtr(-scores)))
    return p, q


def event_rate_bar(
    p: Params,
    spec: ModelSpec,
    x_path: np.ndarray,
    x_lag_path: np.ndarray | None = None,
    w: np.ndarray | None = None,
) -> float:
    """Average daily event rate Phi(outcome score) along an exposure path."""
    rate, _ = _rate_pair(_outcome_scores(p, spec, x_path, x_lag_path, w))
    return rate


def log_or(p1: float, p0: float) -> float:
    """Log odds ratio of two event rates, both strictly inside (0, 1)."""
    if not (0.0 < p1 < 1.0 and 0.0 < p0 < 1.0):
        raise ValueError("event rates must lie strictly in (0, 1)")
    return math.log(p1 / (1.0 - p1)) - math.log(p0 / (1.0 - p0))


def _log_odds(rate: float, comp: float) -> float:
    if rate <= 0.0 or comp <= 0.0:
        raise ValueError("degenerate event rate: log odds undefined")
    return math.log(rate) - math.log(comp)


@dataclass(frozen=True)
class MonteCarloConfig:
    """Size of the exposure-path Monte Carlo used for the behavioural
    estimands: ``samples`` independent paths of ``days`` days each."""

    samples: int = 100_000
    days: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.days < 1:
            raise ValueError("days must be >= 1")


def _scalar_log_odds(score: float) -> float:
    rate = float(ndtr(score))
    comp = float(ndtr(-score))
    return _log_odds(rate, comp)


def estimand_dd(p: Params, spec: ModelSpec, w: np.ndarray | None = None) -> float:
    """Log odds ratio of continuous exposure versus abstinence.

    Contrasts the all-ones exposure path (with an all-ones lag under CO)
    against the all-zeros path.
    """
    if w is None or np.size(w) == 0:
        exposed = p.beta0 + p.beta1 + (p.beta2 if spec.has_carryover else 0.0)
        return _scalar_log_odds(exposed) - _scalar_log_odds(p.beta0)
    n = w.shape[0]
    ones = np.ones(n)
    zeros = np.zeros(n)
    p1, q1 = _rate_pair(_outcome_scores(p, spec, ones, ones if spec.has_carryover else None, w))
    p0, q0 = _rate_pair(_outcome_scores(p, spec, zeros, zeros if spec.has_carryover else None, w))
    return _log_odds(p1, q1) - _log_odds(p0, q0)


def _selection_prob(p: Params, r: float, w: np.ndarray | None, n: int) -> np.ndarray:
    score = p.alpha0 + p.alpha1 * r
    if w is not None and np.size(w) > 0:
        return ndtr(score + np.asarray(w, dtype=float) @ p.alpha_w)
    return np.full(n, ndtr(score))


def _behaviour_rate(
    p: Params,
    spec: ModelSpec,
    w: np.ndarray | None,
    r: float,
    mc: MonteCarloConfig,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo average event rate under self-selected exposure at
    randomization level ``r`` (plug-in form: selection draws independent of
    the outcome residual)."""
    days = w.shape[0] if w is not None and np.size(w) else mc.days
    sel = _selection_prob(p, r, w, days)
    rate = 0.0
    comp = 0.0
    block = max(1, min(mc.samples, 200_000 // days))
    done = 0
    while done < mc.samples:
        n = min(block, mc.samples - done)
        paths = (rng.random((n, days)) < sel).astype(float)
        scores = p.beta0 + p.beta1 * paths
        if spec.has_carryover:
            lag = np.concatenate([np.zeros((n, 1)), paths[:, :-1]], axis=1)
            scores = scores + p.beta2 * lag
        if w is not None and np.size(w) > 0:
            scores = scores + np.asarray(w, dtype=float) @ p.beta_w
        rate += float(np.sum(ndtr(scores)))
        comp += float(np.sum(ndtr(-scores)))
        done += n
    n_total = mc.samples * days
    return rate / n_total, comp / n_total


def estimand_ud(
    p: Params,
    spec: ModelSpec,
    w: np.ndarray | None,
    mc: MonteCarloConfig,
    rng: np.random.Generator,
) -> float:
    """Log odds ratio of usual (self-selected, randomized-to-exposed)
    behaviour versus abstinence."""
    p1, q1 = _behaviour_rate(p, spec, w, 1.0, mc, rng)
    if w is None or np.size(w) == 0:
        return _log_odds(p1, q1) - _scalar_log_odds(p.beta0)
    zeros = np.zeros(w.shape[0])
    p0, q0 = _rate_pair(_outcome_scores(p, spec, zeros, zeros if spec.has_carryover else None, w))
    return _log_odds(p1, q1) - _log_odds(p0, q0)


def estimand_itt(
    p: Params,
    spec: ModelSpec,
    w: np.ndarray | None,
    mc: MonteCarloConfig,
    rng: np.random.Generator,
) -> float:
    """Log odds ratio contrasting self-selected behaviour under the two
    randomization arms (model-based intention-to-treat)."""
    p1, q1 = _behaviour_rate(p, spec, w, 1.0, mc, rng)
    p0, q0 = _behaviour_rate(p, spec, w, 0.0, mc, rng)
    return _log_odds(p1, q1) - _log_odds(p0, q0)


@dataclass(frozen=True)
class EstimandSummary:
    """Posterior summary of one log odds-ratio estimand."""

    name: str
    posterior_mean_log_or: float
    cri_low: float
    cri_high: float
    prob_or_gt_1: float

    def __post_init__(self):
        if self.cri_low > self.cri_high:
            raise ValueError("cri_low must not exceed cri_high")
        if not 0.0 <= self.prob_or_gt_1 <= 1.0:
            raise ValueError("prob_or_gt_1 must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "posterior_mean_log_or": self.posterior_mean_log_or,
            "cri_low": self.cri_low,
            "cri_high": self.cri_high,
            "prob_or_gt_1": self.prob_or_gt_1,
        }


def summarize_estimand(draw_values: np.ndarray, name: str = "") -> EstimandSummary:
    """Mean, equal-tailed 95% credible bounds and Pr(OR > 1) of log-OR draws."""
    values = np.asarray(draw_values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot summarize an empty draw vector")
    lo, hi = np.quantile(values, (0.025, 0.975))
    return EstimandSummary(
        name=name,
        posterior_mean_log_or=float(values.mean()),
        cri_low=float(lo),
        cri_high=float(hi),
        prob_or_gt_1=float(np.mean(values > 0.0)),
    )
