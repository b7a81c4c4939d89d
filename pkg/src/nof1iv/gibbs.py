"""Single-participant data-augmentation Gibbs sampler for models NCO and CO.

The sampler works on the explicit-confounder parameterization: the latent
confounder path u is kept in the state with marginal variance rho (floored at
0.001 to avoid boundary degeneracies) and both latent equations have residual
variance 1 - rho around their u-shifted means.  Coefficients get univariate
Gaussian full conditionals against truncated-normal priors; rho (through its
signed square root) and rho_u are updated by stepping-out slice sampling.

Missing exposure and outcome days are handled by leaving the corresponding
latent draws unconstrained; a missing exposure enters the outcome equation
through the sign of its latent draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from .model import (
    ModelSpec,
    MonteCarloConfig,
    Params,
    TrialSeries,
    estimand_dd,
    estimand_itt,
    estimand_ud,
    lagged_path,
)
from .samplers import (
    SamplerError,
    sample_ar1_given_obs,
    sample_interval_censored,
    sample_trunc_norm,
    slice_sample,
)

__all__ = [
    "VAR_U_FLOOR",
    "CoefficientPrior",
    "PriorSpec",
    "McmcConfig",
    "LatentState",
    "PosteriorDraws",
    "empirical_intercept_means",
    "init_state",
    "sample_latent_x",
    "sample_latent_y",
    "sample_u_path",
    "sample_coefficients",
    "sample_rho",
    "sample_rho_u",
    "run_chain",
    "run_chains",
]

# Variance floor on the confounder path, mirroring the reference
# parameterization's guard against the rho = 0 boundary.
VAR_U_FLOOR = 1e-3


@dataclass(frozen=True)
class CoefficientPrior:
    """Truncated normal prior N(mean, var) restricted to [lower, upper]."""

    mean: float = 0.0
    var: float = 1.0
    lower: float = -4.0
    upper: float = 4.0

    def __post_init__(self):
        if self.var <= 0.0:
            raise ValueError("prior variance must be positive")
        if not self.lower < self.upper:
            raise ValueError("prior truncation bounds must satisfy lower < upper")

    @property
    def clipped_mean(self) -> float:
        return min(max(self.mean, self.lower), self.upper)


@dataclass(frozen=True)
class PriorSpec:
    """Per-coefficient truncated normals plus the correlation priors.

    ``rho`` is parameterized as rho_star**2 with rho_star uniform on
    ``rho_star_bounds``, which puts more prior mass on small rho; rho_u is
    uniform on ``rho_u_bounds``.
    """

    alpha0: CoefficientPrior = CoefficientPrior()
    alpha1: CoefficientPrior = CoefficientPrior()
    beta0: CoefficientPrior = CoefficientPrior()
    beta1: CoefficientPrior = CoefficientPrior()
    beta2: CoefficientPrior = CoefficientPrior()
    alpha_w: tuple[CoefficientPrior, ...] = ()
    beta_w: tuple[CoefficientPrior, ...] = ()
    rho_star_bounds: tuple[float, float] = (-1.0, 1.0)
    rho_u_bounds: tuple[float, float] = (-0.99, 0.99)

    def __post_init__(self):
        for name in ("rho_star_bounds", "rho_u_bounds"):
            lo, hi = getattr(self, name)
            if not -1.0 <= lo < hi <= 1.0:
                raise ValueError(f"{name} must be an interval inside [-1, 1]")
        if len(self.alpha_w) != len(self.beta_w):
            raise ValueError("alpha_w and beta_w priors must have equal length")

    @classmethod
    def defaults(
        cls,
        covariate_dim: int = 0,
        slope_var: float = 1.0,
        bound: float = 4.0,
        alpha0_mean: float = 0.0,
        beta0_mean: float = 0.0,
    ) -> "PriorSpec":
        """Formal-analysis defaults: N(., 1)[-4, 4] intercepts and
        N(0, slope_var)[-4, 4] slopes."""
        intercept = dict(var=1.0, lower=-bound, upper=bound)
        slope = CoefficientPrior(0.0, slope_var, -bound, bound)
        return cls(
            alpha0=CoefficientPrior(alpha0_mean, **intercept),
            alpha1=slope,
            beta0=CoefficientPrior(beta0_mean, **intercept),
            beta1=slope,
            beta2=slope,
            alpha_w=(slope,) * covariate_dim,
            beta_w=(slope,) * covariate_dim,
        )


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 3
    burn_in: int = 15_000
    draws: int = 5_000
    seed: int = 0
    thin: int = 1
    behaviour_mc: int = 1  # exposure-path draws per retained draw for UD/ITT

    def __post_init__(self):
        if self.chains < 1 or self.draws < 1 or self.thin < 1:
            raise ValueError("chains, draws and thin must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")

    @property
    def kept(self) -> int:
        return self.draws // self.thin


@dataclass
class LatentState:
    """Latent continuous paths: exposure/outcome scores and the confounder."""

    x_star: np.ndarray
    y_star: np.ndarray
    u: np.ndarray


def empirical_intercept_means(data: TrialSeries) -> tuple[float, float]:
    """Data-informed intercept prior means: the normal quantile of the
    exposure rate on off-assignment days and of the outcome rate on
    non-exposed days.  Rates are shrunk off the boundary by one pseudo-day."""

    def probit_of_rate(values: np.ndarray, mask: np.ndarray) -> float:
        sel = mask & ~np.isnan(values)
        n = int(sel.sum())
        if n == 0:
            return 0.0
        rate = float(values[sel].sum() + 0.5) / (n + 1.0)
        return float(ndtri(rate))

    a0 = probit_of_rate(data.x, data.r == 0)
    b0 = probit_of_rate(data.y, data.x == 0.0)
    return a0, b0


def _imputed_x(data: TrialSeries, state: LatentState) -> np.ndarray:
    missing = np.isnan(data.x)
    if not missing.any():
        return data.x
    return np.where(missing, (state.x_star > 0.0).astype(float), data.x)


def _selection_mean(data: TrialSeries, p: Params) -> np.ndarray:
    mean = p.alpha0 + p.alpha1 * data.r
    if data.covariate_dim:
        mean = mean + data.w @ p.alpha_w
    return mean


def _outcome_mean(
    data: TrialSeries, state: LatentState, p: Params, spec: ModelSpec
) -> np.ndarray:
    x = _imputed_x(data, state)
    mean = p.beta0 + p.beta1 * x
    if spec.has_carryover:
        mean = mean + p.beta2 * lagged_path(x)
    if data.covariate_dim:
        mean = mean + data.w @ p.beta_w
    return mean


def init_state(
    data: TrialSeries,
    spec: ModelSpec,
    priors: PriorSpec,
    rng: np.random.Generator,
) -> tuple[Params, LatentState]:
    """Deterministic-ish starting point: prior means for coefficients,
    rho = 0.25, rho_u = 0, signed half-unit latents, u = 0."""
    p = Params(
        alpha0=priors.alpha0.clipped_mean,
        alpha1=priors.alpha1.clipped_mean,
        beta0=priors.beta0.clipped_mean,
        beta1=priors.beta1.clipped_mean,
        beta2=priors.beta2.clipped_mean if spec.has_carryover else 0.0,
        alpha_w=np.array([c.clipped_mean for c in priors.alpha_w]),
        beta_w=np.array([c.clipped_mean for c in priors.beta_w]),
        rho=0.25,
        rho_u=0.0,
    )

    def seed_latent(obs: np.ndarray) -> np.ndarray:
        out = np.where(obs == 1.0, 0.5, -0.5)
        missing = np.isnan(obs)
        if missing.any():
            out = out.copy()
            out[missing] = rng.standard_normal(int(missing.sum()))
        return out

    state = LatentState(
        x_star=seed_latent(data.x),
        y_star=seed_latent(data.y),
        u=np.zeros(data.layout.total),
    )
    return p, state


def sample_latent_x(
    state: LatentState,
    data: TrialSeries,
    p: Params,
    rng: np.random.Generator,
) -> np.ndarray:
    """Interval-censored Gaussian redraw of the selection latents."""
    mean = _selection_mean(data, p) + state.u
    sd = math.sqrt(1.0 - p.rho)
    return sample_interval_censored(rng, mean, sd, data.x)


def sample_latent_y(
    state: LatentState,
    data: TrialSeries,
    p: Params,
    spec: ModelSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Interval-censored Gaussian redraw of the outcome latents."""
    mean = _outcome_mean(data, state, p, spec) + spec.sign_s * state.u
    sd = math.sqrt(1.0 - p.rho)
    return sample_interval_censored(rng, mean, sd, data.y)


def sample_u_path(
    state: LatentState,
    data: TrialSeries,
    p: Params,
    spec: ModelSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Joint draw of the confounder path from its Gaussian full conditional.

    Each day contributes two conditionally independent observations of u_k
    with noise variance 1 - rho: the selection residual and the sign-adjusted
    outcome residual.
    """
    resid_x = state.x_star - _selection_mean(data, p)
    resid_y = spec.sign_s * (state.y_star - _outcome_mean(data, state, p, spec))
    return sample_ar1_given_obs(
        rng,
        obs_sum=resid_x + resid_y,
        n_obs=2,
        obs_var=1.0 - p.rho,
        var_marg=p.rho + VAR_U_FLOOR,
        phi=p.rho_u,
    )


def _conjugate_draw(
    rng: np.random.Generator,
    prior: CoefficientPrior,
    cross: float,
    col_ss: float,
    noise_var: float,
) -> float:
    prec = 1.0 / prior.var + col_ss / noise_var
    mean = (prior.mean / prior.var + cross / noise_var) / prec
    return sample_trunc_norm(rng, mean, math.sqrt(1.0 / prec), prior.lower, prior.upper)


def sample_coefficients(
    state: LatentState,
    data: TrialSeries,
    p: Params,
    spec: ModelSpec,
    priors: PriorSpec,
    rng: np.random.Generator,
) -> Params:
    """One systematic scan of univariate conjugate updates, in fixed order
    alpha0, alpha1, alpha_w, beta0, beta1, beta2, beta_w."""
    total = data.layout.total
    noise_var = 1.0 - p.rho
    r = data.r.astype(float)

    target_x = state.x_star - state.u
    w = data.w
    d_w = data.covariate_dim

    alpha_w = p.alpha_w.copy()
    base = target_x - (w @ alpha_w if d_w else 0.0)
    alpha0 = _conjugate_draw(
        rng, priors.alpha0, float(np.sum(base - p.alpha1 * r)), total, noise_var
    )
    resid = base - alpha0
    alpha1 = _conjugate_draw(
        rng, priors.alpha1, float(resid @ r), float(r @ r), noise_var
    )
    for j in range(d_w):
        col = w[:, j]
        resid = target_x - alpha0 - alpha1 * r - w @ alpha_w + alpha_w[j] * col
        alpha_w[j] = _conjugate_draw(
            rng, priors.alpha_w[j], float(resid @ col), float(col @ col), noise_var
        )

    x = _imputed_x(data, state)
    x_lag = lagged_path(x) if spec.has_carryover else None
    target_y = state.y_star - spec.sign_s * state.u

    beta_w = p.beta_w.copy()
    base = target_y - (w @ beta_w if d_w else 0.0)
    lag_term = p.beta2 * x_lag if spec.has_carryover else 0.0
    beta0 = _conjugate_draw(
        rng, priors.beta0, float(np.sum(base - p.beta1 * x - lag_term)), total, noise_var
    )
    resid = base - beta0 - (lag_term if spec.has_carryover else 0.0)
    beta1 = _conjugate_draw(rng, priors.beta1, float(resid @ x), float(x @ x), noise_var)
    if spec.has_carryover:
        resid = base - beta0 - beta1 * x
        beta2 = _conjugate_draw(
            rng, priors.beta2, float(resid @ x_lag), float(x_lag @ x_lag), noise_var
        )
    else:
        beta2 = 0.0
    for j in range(d_w):
        col = w[:, j]
        resid = (
            target_y - beta0 - beta1 * x
            - (beta2 * x_lag if spec.has_carryover else 0.0)
            - w @ beta_w + beta_w[j] * col
        )
        beta_w[j] = _conjugate_draw(
            rng, priors.beta_w[j], float(resid @ col), float(col @ col), noise_var
        )

    return replace(
        p, alpha0=alpha0, alpha1=alpha1, alpha_w=alpha_w,
        beta0=beta0, beta1=beta1, beta2=beta2, beta_w=beta_w,
    )


def _latent_quads(
    state: LatentState, data: TrialSeries, p: Params, spec: ModelSpec
) -> tuple[float, float]:
    resid_x = state.x_star - _selection_mean(data, p) - state.u
    resid_y = state.y_star - _outcome_mean(data, state, p, spec) - spec.sign_s * state.u
    return float(resid_x @ resid_x), float(resid_y @ resid_y)


def sample_rho(
    state: LatentState,
    data: TrialSeries,
    p: Params,
    spec: ModelSpec,
    priors: PriorSpec,
    rng: np.random.Generator,
    rho_star: float | None = None,
) -> tuple[float, Params]:
    """Slice update of rho through its signed square root.

    The target is the joint density of (x_star, y_star, u) given the
    coefficients: rho enters both the residual variance 1 - rho and the
    confounder marginal variance rho + floor.
    """
    if rho_star is None:
        rho_star = math.sqrt(p.rho)
    ssr_x, ssr_y = _latent_quads(state, data, p, spec)
    u = state.u
    total = u.shape[0]
    u1_sq = float(u[0] * u[0])
    quad_u = float(np.sum((u[1:] - p.rho_u * u[:-1]) ** 2)) if total > 1 else 0.0
    one_minus_phi_sq = 1.0 - p.rho_u * p.rho_u

    def log_target(rs: float) -> float:
        rho = rs * rs
        noise_var = 1.0 - rho
        if noise_var <= 0.0:
            return -np.inf
        var_u = rho + VAR_U_FLOOR
        val = -total * math.log(noise_var) - 0.5 * (ssr_x + ssr_y) / noise_var
        val += -0.5 * (math.log(var_u) + u1_sq / var_u)
        if total > 1:
            innov_var = var_u * one_minus_phi_sq
            val += -0.5 * ((total - 1) * math.log(innov_var) + quad_u / innov_var)
        return val

    lo, hi = priors.rho_star_bounds
    new_star = slice_sample(rng, rho_star, log_target, width=0.2, max_steps=100,
                            lower=lo, upper=hi)
    return new_star, replace(p, rho=new_star * new_star)


def sample_rho_u(
    state: LatentState,
    p: Params,
    priors: PriorSpec,
    rng: np.random.Generator,
) -> Params:
    """Slice update of the AR(1) autocorrelation given the confounder path."""
    u = state.u
    total = u.shape[0]
    var_u = p.rho + VAR_U_FLOOR
    if total > 1:
        sq_head = float(u[1:] @ u[1:])
        cross = float(u[1:] @ u[:-1])
        sq_tail = float(u[:-1] @ u[:-1])

        def log_target(phi: float) -> float:
            innov_var = var_u * (1.0 - phi * phi)
            quad = sq_head - 2.0 * phi * cross + phi * phi * sq_tail
            return -0.5 * ((total - 1) * math.log(innov_var) + quad / innov_var)

    else:
        # A single day carries no autocorrelation information.
        def log_target(phi: float) -> float:
            return 0.0

    lo, hi = priors.rho_u_bounds
    new_phi = slice_sample(rng, p.rho_u, log_target, width=0.2, max_steps=100,
                           lower=lo, upper=hi)
    return replace(p, rho_u=new_phi)


@dataclass
class PosteriorDraws:
    """Retained posterior draws, one row block per chain, plus the per-draw
    derived log odds-ratio estimands."""

    alpha0: np.ndarray
    alpha1: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    rho: np.ndarray
    rho_u: np.ndarray
    alpha_w: np.ndarray  # (chains, kept, d_w)
    beta_w: np.ndarray
    u: np.ndarray  # (chains, kept, L) retained confounder paths
    log_or_dd: np.ndarray
    log_or_ud: np.ndarray
    log_or_itt: np.ndarray
    variant: str
    config: McmcConfig

    @property
    def n_chains(self) -> int:
        return self.alpha0.shape[0]

    def parameter_names(self) -> list[str]:
        names = ["alpha0", "alpha1", "beta0", "beta1"]
        if self.variant == "CO":
            names.append("beta2")
        names += [f"alpha_w{j + 1}" for j in range(self.alpha_w.shape[2])]
        names += [f"beta_w{j + 1}" for j in range(self.beta_w.shape[2])]
        names += ["rho", "rho_u"]
        return names

    def chain_matrix(self, name: str) -> np.ndarray:
        """Draws for one monitored quantity, shape (chains, kept)."""
        if name.startswith("alpha_w") and name != "alpha_w":
            return self.alpha_w[:, :, int(name[7:]) - 1]
        if name.startswith("beta_w") and name != "beta_w":
            return self.beta_w[:, :, int(name[6:]) - 1]
        return getattr(self, name)

    def flat(self, name: str) -> np.ndarray:
        return self.chain_matrix(name).reshape(-1)


def run_chain(
    data: TrialSeries,
    spec: ModelSpec,
    priors: PriorSpec,
    cfg: McmcConfig,
    chain_index: int = 0,
) -> dict[str, np.ndarray]:
    """One MCMC chain; the RNG stream is derived from (seed, chain_index).

    Sweep order per iteration: latent x_star, latent y_star, confounder path,
    coefficient scan, rho, rho_u.  Derived estimands are computed on every
    retained draw.  Identical inputs give bit-identical output.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(chain_index,)))
    p, state = init_state(data, spec, priors, rng)
    rho_star = math.sqrt(p.rho)
    kept = cfg.kept
    d_w = data.covariate_dim
    w_arg = data.w if d_w else None
    mc = MonteCarloConfig(samples=cfg.behaviour_mc, days=data.layout.total)

    out = {
        name: np.empty(kept)
        for name in ("alpha0", "alpha1", "beta0", "beta1", "beta2", "rho", "rho_u",
                     "log_or_dd", "log_or_ud", "log_or_itt")
    }
    out["alpha_w"] = np.empty((kept, d_w))
    out["beta_w"] = np.empty((kept, d_w))
    out["u"] = np.empty((kept, data.layout.total))

    stored = 0
    total_iters = cfg.burn_in + cfg.draws
    for it in range(total_iters):
        try:
            state.x_star = sample_latent_x(state, data, p, rng)
            state.y_star = sample_latent_y(state, data, p, spec, rng)
            state.u = sample_u_path(state, data, p, spec, rng)
            p = sample_coefficients(state, data, p, spec, priors, rng)
            rho_star, p = sample_rho(state, data, p, spec, priors, rng, rho_star)
            p = sample_rho_u(state, p, priors, rng)
        except SamplerError as err:
            raise SamplerError(
                f"chain {chain_index} aborted at iteration {it}: {err}; "
                f"params={p!r}, |u|max={float(np.max(np.abs(state.u))):.3g}"
            ) from err

        post = it - cfg.burn_in
        if post < 0 or post % cfg.thin != 0 or stored >= kept:
            continue
        out["alpha0"][stored] = p.alpha0
        out["alpha1"][stored] = p.alpha1
        out["beta0"][stored] = p.beta0
        out["beta1"][stored] = p.beta1
        out["beta2"][stored] = p.beta2
        out["rho"][stored] = p.rho
        out["rho_u"][stored] = p.rho_u
        if d_w:
            out["alpha_w"][stored] = p.alpha_w
            out["beta_w"][stored] = p.beta_w
        out["u"][stored] = state.u
        out["log_or_dd"][stored] = estimand_dd(p, spec, w_arg)
        out["log_or_ud"][stored] = estimand_ud(p, spec, w_arg, mc, rng)
        out["log_or_itt"][stored] = estimand_itt(p, spec, w_arg, mc, rng)
        stored += 1
    return out


def run_chains(
    data: TrialSeries,
    spec: ModelSpec,
    priors: PriorSpec,
    cfg: McmcConfig,
) -> PosteriorDraws:
    """Run all chains and merge draws keyed by (chain index, iteration)."""
    per_chain = [run_chain(data, spec, priors, cfg, c) for c in range(cfg.chains)]
    stacked = {k: np.stack([ch[k] for ch in per_chain]) for k in per_chain[0]}
    return PosteriorDraws(variant=spec.variant, config=cfg, **stacked)
