"""Hierarchical pooling of several single-participant models.

Participant-level structural coefficients get normal population distributions
whose means carry truncated-normal hyperpriors and whose standard deviations
carry Half-Cauchy priors.  The correlations rho and rho_u stay
participant-specific with independent priors.  One Gibbs sweep interleaves
the full single-participant updates (with priors replaced by the current
hyper draws) with conjugate hypermean updates and slice updates of the
Half-Cauchy scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .gibbs import (
    CoefficientPrior,
    LatentState,
    McmcConfig,
    PriorSpec,
    init_state,
    sample_coefficients,
    sample_latent_x,
    sample_latent_y,
    sample_rho,
    sample_rho_u,
    sample_u_path,
)
from .model import (
    EstimandSummary,
    ModelSpec,
    Params,
    TrialSeries,
    lagged_path,
    summarize_estimand,
)
from .samplers import sample_trunc_norm, slice_sample

__all__ = [
    "HyperPriors",
    "MetaDraws",
    "run_meta_chain",
    "pooled_event_rate",
    "pooled_estimands",
    "participant_dd_draws",
]

_FAMILIES = ("alpha0", "alpha1", "beta0", "beta1", "beta2")


@dataclass(frozen=True)
class HyperPriors:
    """Hyperpriors for the population model.

    Each coefficient family has a truncated-normal prior on its population
    mean (the truncation bounds double as the participant-level bounds) and a
    Half-Cauchy(sd_scale) prior on its population standard deviation.
    """

    alpha0: CoefficientPrior = CoefficientPrior()
    alpha1: CoefficientPrior = CoefficientPrior()
    beta0: CoefficientPrior = CoefficientPrior()
    beta1: CoefficientPrior = CoefficientPrior()
    beta2: CoefficientPrior = CoefficientPrior()
    alpha_w: tuple[CoefficientPrior, ...] = ()
    beta_w: tuple[CoefficientPrior, ...] = ()
    sd_scale: float = 0.4
    rho_star_bounds: tuple[float, float] = (-1.0, 1.0)
    rho_u_bounds: tuple[float, float] = (-0.99, 0.99)

    def __post_init__(self):
        if self.sd_scale <= 0.0:
            raise ValueError("sd_scale must be positive")
        if len(self.alpha_w) != len(self.beta_w):
            raise ValueError("alpha_w and beta_w hyperpriors must have equal length")

    @classmethod
    def defaults(
        cls,
        covariate_dim: int = 0,
        slope_var: float = 1.0,
        bound: float = 4.0,
        alpha0_mean: float = 0.0,
        beta0_mean: float = 0.0,
        sd_scale: float = 0.4,
    ) -> "HyperPriors":
        slope = CoefficientPrior(0.0, slope_var, -bound, bound)
        return cls(
            alpha0=CoefficientPrior(alpha0_mean, 1.0, -bound, bound),
            alpha1=slope,
            beta0=CoefficientPrior(beta0_mean, 1.0, -bound, bound),
            beta1=slope,
            beta2=slope,
            alpha_w=(slope,) * covariate_dim,
            beta_w=(slope,) * covariate_dim,
            sd_scale=sd_scale,
        )


@dataclass
class MetaDraws:
    """Hyperparameter, per-participant and pooled-estimand draws."""

    hyper_mean: dict[str, np.ndarray]  # family -> (chains, kept)
    hyper_sd: dict[str, np.ndarray]
    participant: dict[str, np.ndarray]  # family/rho/rho_u -> (chains, kept, N)
    pooled_dd: np.ndarray
    pooled_ud: np.ndarray
    pooled_itt: np.ndarray
    variant: str
    config: McmcConfig
    n_participants: int
    day_counts: np.ndarray

    def flat(self, kind: str, name: str) -> np.ndarray:
        source = {"hyper_mean": self.hyper_mean, "hyper_sd": self.hyper_sd}[kind]
        return source[name].reshape(-1)


def _participant_priors(
    means: dict[str, float], sds: dict[str, float], hp: HyperPriors, d_w: int
) -> PriorSpec:
    def prior(name: str, bounds: CoefficientPrior) -> CoefficientPrior:
        return CoefficientPrior(
            mean=means[name],
            var=sds[name] ** 2,
            lower=bounds.lower,
            upper=bounds.upper,
        )

    return PriorSpec(
        alpha0=prior("alpha0", hp.alpha0),
        alpha1=prior("alpha1", hp.alpha1),
        beta0=prior("beta0", hp.beta0),
        beta1=prior("beta1", hp.beta1),
        beta2=prior("beta2", hp.beta2),
        alpha_w=tuple(prior(f"alpha_w{j}", hp.alpha_w[j]) for j in range(d_w)),
        beta_w=tuple(prior(f"beta_w{j}", hp.beta_w[j]) for j in range(d_w)),
        rho_star_bounds=hp.rho_star_bounds,
        rho_u_bounds=hp.rho_u_bounds,
    )


def _halfcauchy_sd_update(
    rng: np.random.Generator, sd: float, values: np.ndarray, mean: float, scale: float
) -> float:
    n = values.shape[0]
    ssq = max(float(np.sum((values - mean) ** 2)), 1e-300)

    # Slice on log(sd): the Half-Cauchy right tail decays only polynomially
    # in sd, so stepping out is reliable only on the log scale.
    def log_target(t: float) -> float:
        s = math.exp(t)
        return (1.0 - n) * t - 0.5 * ssq / (s * s) - math.log1p((s / scale) ** 2)

    t_new = slice_sample(rng, math.log(sd), log_target, width=0.5, max_steps=100)
    return math.exp(t_new)


def _family_names(d_w: int) -> list[str]:
    names = list(_FAMILIES)
    names += [f"alpha_w{j}" for j in range(d_w)]
    names += [f"beta_w{j}" for j in range(d_w)]
    return names


def _hyper_bounds(hp: HyperPriors, name: str) -> CoefficientPrior:
    if name.startswith("alpha_w"):
        return hp.alpha_w[int(name[7:])]
    if name.startswith("beta_w"):
        return hp.beta_w[int(name[6:])]
    return getattr(hp, name)


def _coef_value(p: Params, name: str) -> float:
    if name.startswith("alpha_w"):
        return float(p.alpha_w[int(name[7:])])
    if name.startswith("beta_w"):
        return float(p.beta_w[int(name[6:])])
    return float(getattr(p, name))


def run_meta_chain(
    data: list[TrialSeries],
    spec: ModelSpec,
    hp: HyperPriors,
    cfg: McmcConfig,
) -> MetaDraws:
    """Fit the hierarchical model to N series; deterministic under the seed."""
    if not data:
        raise ValueError("need at least one participant series")
    d_w = data[0].covariate_dim
    if any(s.covariate_dim != d_w for s in data):
        raise ValueError("participants have inconsistent covariate dimensions")
    if len(hp.alpha_w) != d_w:
        raise ValueError("hyperprior covariate dimension does not match the data")

    n = len(data)
    kept = cfg.kept
    names = _family_names(d_w)
    active = [nm for nm in names if nm != "beta2" or spec.has_carryover]

    hyper_mean = {nm: np.empty((cfg.chains, kept)) for nm in names}
    hyper_sd = {nm: np.empty((cfg.chains, kept)) for nm in names}
    participant = {
        nm: np.empty((cfg.chains, kept, n)) for nm in names + ["rho", "rho_u"]
    }
    pooled = {nm: np.empty((cfg.chains, kept)) for nm in ("dd", "ud", "itt")}
    day_counts = np.array([s.layout.total for s in data])

    for chain in range(cfg.chains):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(chain,)))
        means = {nm: _hyper_bounds(hp, nm).clipped_mean for nm in names}
        sds = {nm: hp.sd_scale for nm in names}
        priors = _participant_priors(means, sds, hp, d_w)
        params: list[Params] = []
        states: list[LatentState] = []
        rho_stars: list[float] = []
        for series in data:
            p_i, st_i = init_state(series, spec, priors, rng)
            params.append(p_i)
            states.append(st_i)
            rho_stars.append(math.sqrt(p_i.rho))

        stored = 0
        for it in range(cfg.burn_in + cfg.draws):
            priors = _participant_priors(means, sds, hp, d_w)
            for i, series in enumerate(data):
                st, p_i = states[i], params[i]
                st.x_star = sample_latent_x(st, series, p_i, rng)
                st.y_star = sample_latent_y(st, series, p_i, spec, rng)
                st.u = sample_u_path(st, series, p_i, spec, rng)
                p_i = sample_coefficients(st, series, p_i, spec, priors, rng)
                rho_stars[i], p_i = sample_rho(
                    st, series, p_i, spec, priors, rng, rho_stars[i]
                )
                params[i] = sample_rho_u(st, p_i, priors, rng)

            for nm in active:
                values = np.array([_coef_value(p_i, nm) for p_i in params])
                bounds = _hyper_bounds(hp, nm)
                var = sds[nm] ** 2
                prec = 1.0 / bounds.var + n / var
                mean = (bounds.mean / bounds.var + values.sum() / var) / prec
                means[nm] = sample_trunc_norm(
                    rng, mean, math.sqrt(1.0 / prec), bounds.lower, bounds.upper
                )
                sds[nm] = _halfcauchy_sd_update(
                    rng, sds[nm], values, means[nm], hp.sd_scale
                )

            post = it - cfg.burn_in
            if post < 0 or post % cfg.thin != 0 or stored >= kept:
                continue
            for nm in names:
                hyper_mean[nm][chain, stored] = means[nm]
                hyper_sd[nm][chain, stored] = sds[nm]
                participant[nm][chain, stored] = [_coef_value(p_i, nm) for p_i in params]
            participant["rho"][chain, stored] = [p_i.rho for p_i in params]
            participant["rho_u"][chain, stored] = [p_i.rho_u for p_i in params]
            dd, ud, itt = _pooled_draw(params, data, spec, cfg.behaviour_mc, rng)
            pooled["dd"][chain, stored] = dd
            pooled["ud"][chain, stored] = ud
            pooled["itt"][chain, stored] = itt
            stored += 1

    return MetaDraws(
        hyper_mean=hyper_mean,
        hyper_sd=hyper_sd,
        participant=participant,
        pooled_dd=pooled["dd"],
        pooled_ud=pooled["ud"],
        pooled_itt=pooled["itt"],
        variant=spec.variant,
        config=cfg,
        n_participants=n,
        day_counts=day_counts,
    )


def _rates_for_path(
    p: Params, spec: ModelSpec, series: TrialSeries, path: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    score = p.beta0 + p.beta1 * path
    if spec.has_carryover:
        score = score + p.beta2 * lagged_path(path)
    if series.covariate_dim:
        score = score + series.w @ p.beta_w
    return ndtr(score), ndtr(-score)


def _pooled_draw(
    params: list[Params],
    data: list[TrialSeries],
    spec: ModelSpec,
    behaviour_mc: int,
    rng: np.random.Generator,
) -> tuple[float, float, float]:
    """Pooled DD/UD/ITT log odds ratios at the current parameter draw.

    Event rates are averaged over every participant-day (participants with
    longer series weigh more), matching the equal-length pooled formula when
    all series have the same duration.
    """
    total_days = sum(s.layout.total for s in data)
    acc = {key: [0.0, 0.0] for key in ("ones", "zeros", "sel1", "sel0")}
    for p_i, series in zip(params, data):
        total = series.layout.total
        ones = np.ones(total)
        zeros = np.zeros(total)
        for key, path in (("ones", ones), ("zeros", zeros)):
            rate, comp = _rates_for_path(p_i, spec, series, path)
            acc[key][0] += float(rate.sum())
            acc[key][1] += float(comp.sum())
        for key, r_level in (("sel1", 1.0), ("sel0", 0.0)):
            score = p_i.alpha0 + p_i.alpha1 * r_level
            if series.covariate_dim:
                sel = ndtr(score + series.w @ p_i.alpha_w)
            else:
                sel = np.full(total, ndtr(score))
            rate_sum = 0.0
            comp_sum = 0.0
            for _ in range(behaviour_mc):
                path = (rng.random(total) < sel).astype(float)
                rate, comp = _rates_for_path(p_i, spec, series, path)
                rate_sum += float(rate.sum())
                comp_sum += float(comp.sum())
            acc[key][0] += rate_sum / behaviour_mc
            acc[key][1] += comp_sum / behaviour_mc

    def log_odds(key: str) -> float:
        rate, comp = acc[key]
        if rate <= 0.0 or comp <= 0.0:
            raise ValueError("degenerate pooled event rate")
        return math.log(rate / total_days) - math.log(comp / total_days)

    dd = log_odds("ones") - log_odds("zeros")
    ud = log_odds("sel1") - log_odds("zeros")
    itt = log_odds("sel1") - log_odds("sel0")
    return dd, ud, itt


def pooled_event_rate(
    md: MetaDraws, x_path: float | np.ndarray, use_lag: bool = True
) -> np.ndarray:
    """Per-draw pooled event rate under a forced exposure path.

    ``x_path`` may be a scalar exposure level applied to every
    participant-day or a full path shared by all participants (requires equal
    durations).  Under the carryover variant the lag path follows the forced
    path with a zero first-day lag unless ``use_lag`` is disabled.
    """
    spec_has_co = md.variant == "CO"
    n_draws = md.pooled_dd.size
    b0 = md.participant["beta0"].reshape(n_draws, md.n_participants)
    b1 = md.participant["beta1"].reshape(n_draws, md.n_participants)
    b2 = md.participant["beta2"].reshape(n_draws, md.n_participants)
    weights = md.day_counts / md.day_counts.sum()

    if np.isscalar(x_path):
        level = float(x_path)
        out = np.zeros(n_draws)
        for i in range(md.n_participants):
            total = int(md.day_counts[i])
            score = b0[:, i] + b1[:, i] * level
            if spec_has_co and use_lag:
                # constant path: first day lags 0, the rest lag the level
                rate = (
                    ndtr(score + b2[:, i] * 0.0)
                    + (total - 1) * ndtr(score + b2[:, i] * level)
                ) / total
            else:
                rate = ndtr(score)
            out += weights[i] * rate
        return out

    path = np.asarray(x_path, dtype=float)
    if not np.all(md.day_counts == path.shape[0]):
        raise ValueError("shared forced path requires equal participant durations")
    lag = lagged_path(path)
    out = np.zeros(n_draws)
    for i in range(md.n_participants):
        score = b0[:, i, None] + b1[:, i, None] * path[None, :]
        if spec_has_co and use_lag:
            score = score + b2[:, i, None] * lag[None, :]
        out += weights[i] * ndtr(score).mean(axis=1)
    return out


def pooled_estimands(md: MetaDraws) -> tuple[EstimandSummary, EstimandSummary, EstimandSummary]:
    """Summaries of the pooled DD, UD and ITT log odds ratios."""
    return (
        summarize_estimand(md.pooled_dd.reshape(-1), name="DD"),
        summarize_estimand(md.pooled_ud.reshape(-1), name="UD"),
        summarize_estimand(md.pooled_itt.reshape(-1), name="ITT"),
    )


def participant_dd_draws(md: MetaDraws, index: int) -> np.ndarray:
    """Per-draw continuous-exposure log odds ratio for one participant."""
    n_draws = md.pooled_dd.size
    b0 = md.participant["beta0"].reshape(n_draws, -1)[:, index]
    b1 = md.participant["beta1"].reshape(n_draws, -1)[:, index]
    b2 = md.participant["beta2"].reshape(n_draws, -1)[:, index]
    exposed = b0 + b1 + (b2 if md.variant == "CO" else 0.0)
    p1, q1 = ndtr(exposed), ndtr(-exposed)
    p0, q0 = ndtr(b0), ndtr(-b0)
    return np.log(p1 / q1) - np.log(p0 / q0)
