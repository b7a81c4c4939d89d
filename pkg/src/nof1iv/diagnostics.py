"""Convergence diagnostics and posterior predictive checking."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtr

from .gibbs import VAR_U_FLOOR, PosteriorDraws
from .model import ModelSpec, TrialSeries, lagged_path

__all__ = [
    "gelman_rubin",
    "ppc_replicate",
    "stat_deviance",
    "stat_num_events",
    "stat_num_changes",
    "bayesian_p",
    "PpcReport",
    "posterior_predictive_check",
]


def gelman_rubin(chains: np.ndarray, split: bool = False) -> float:
    """Potential scale reduction factor for one monitored quantity.

    ``chains`` has shape (n_chains, n_draws).  The classic (non-split)
    statistic is the default; ``split=True`` halves each chain first.
    Identical chains return 1.0 by convention.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise ValueError("need at least two chains of draws")
    if chains.shape[1] < 10:
        raise ValueError("need at least ten draws per chain")
    if split:
        half = chains.shape[1] // 2
        chains = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    n = chains.shape[1]
    chain_means = chains.mean(axis=1)
    between = n * chain_means.var(ddof=1)
    within = chains.var(axis=1, ddof=1).mean()
    if between == 0.0:
        return 1.0
    if within == 0.0:
        return math.inf
    var_plus = (n - 1) / n * within + between / n
    return math.sqrt(var_plus / within)


def gelman_rubin_table(draws: PosteriorDraws, split: bool = False) -> dict[str, float]:
    """R-hat for every monitored parameter and derived estimand."""
    names = draws.parameter_names() + ["log_or_dd", "log_or_ud", "log_or_itt"]
    return {name: gelman_rubin(draws.chain_matrix(name), split=split) for name in names}


def _regen_u(rng: np.random.Generator, total: int, rho: float, rho_u: float) -> np.ndarray:
    z = rng.standard_normal(total)
    var_u = rho + VAR_U_FLOOR
    innov = z * math.sqrt(var_u * (1.0 - rho_u * rho_u))
    innov[0] = z[0] * math.sqrt(var_u)
    return lfilter([1.0], [1.0, -rho_u], innov)


def ppc_replicate(
    draws: PosteriorDraws,
    data: TrialSeries,
    spec: ModelSpec,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior predictive outcome sequences conditional on the exposures.

    For each retained draw a fresh outcome sequence is thresholded from the
    latent model at that draw's stored confounder path (regenerated from the
    draw's (rho, rho_u) only when no path was retained; posterior paths are
    what keep the deviance check calibrated).  Missing exposure days are
    imputed from the selection equation under the same confounder path.
    Returns (y_rep, pi_hat), both of shape (n_draws, L), where pi_hat is the
    per-day plug-in event probability at that draw.
    """
    total = data.layout.total
    n = draws.flat("alpha0").shape[0]
    y_rep = np.empty((n, total))
    pi_hat = np.empty((n, total))
    fields = {
        name: draws.flat(name)
        for name in ("alpha0", "alpha1", "beta0", "beta1", "beta2", "rho", "rho_u")
    }
    u_paths = None
    if draws.u is not None and draws.u.size:
        u_paths = draws.u.reshape(n, -1)
    missing_x = np.isnan(data.x)
    for s in range(n):
        rho = fields["rho"][s]
        if u_paths is None:
            u = _regen_u(rng, total, rho, fields["rho_u"][s])
        else:
            u = u_paths[s]
        resid_sd = math.sqrt(1.0 - rho)
        x = data.x
        if missing_x.any():
            sel = fields["alpha0"][s] + fields["alpha1"][s] * data.r + u
            x_draw = (sel + resid_sd * rng.standard_normal(total) > 0.0).astype(float)
            x = np.where(missing_x, x_draw, data.x)
        score = fields["beta0"][s] + fields["beta1"][s] * x
        if spec.has_carryover:
            score = score + fields["beta2"][s] * lagged_path(x)
        score = score + u
        pi_hat[s] = ndtr(score)
        y_rep[s] = (score + resid_sd * rng.standard_normal(total) > 0.0).astype(float)
    return y_rep, pi_hat


def stat_deviance(y: np.ndarray, pi_hat: np.ndarray) -> float:
    """-2 log likelihood of a binary sequence under per-day probabilities.

    Missing outcome days are skipped; probabilities must be strictly inside
    (0, 1).
    """
    y = np.asarray(y, dtype=float)
    pi_hat = np.asarray(pi_hat, dtype=float)
    keep = ~np.isnan(y)
    y, pi_hat = y[keep], pi_hat[keep]
    if np.any(pi_hat <= 0.0) or np.any(pi_hat >= 1.0):
        raise ValueError("pi_hat must lie strictly in (0, 1)")
    return float(-2.0 * np.sum(y * np.log(pi_hat) + (1.0 - y) * np.log1p(-pi_hat)))


def stat_num_events(y: np.ndarray) -> int:
    y = np.asarray(y, dtype=float)
    return int(np.nansum(y))


def stat_num_changes(y: np.ndarray) -> int:
    """Number of flips between adjacent non-missing days."""
    y = np.asarray(y, dtype=float)
    y = y[~np.isnan(y)]
    if y.size < 2:
        return 0
    return int(np.sum(y[1:] != y[:-1]))


def bayesian_p(t_rep: np.ndarray, t_obs: np.ndarray) -> float:
    """Tail probability of the replicated statistic with half credit for ties."""
    t_rep = np.asarray(t_rep, dtype=float)
    t_obs = np.asarray(t_obs, dtype=float)
    if t_rep.shape != t_obs.shape:
        raise ValueError("t_rep and t_obs must be paired draw-by-draw")
    return float(np.mean(t_rep > t_obs) + 0.5 * np.mean(t_rep == t_obs))


@dataclass(frozen=True)
class PpcReport:
    p_deviance: float
    p_events: float
    p_changes: float
    summaries: dict

    def __post_init__(self):
        for v in (self.p_deviance, self.p_events, self.p_changes):
            if not 0.0 <= v <= 1.0:
                raise ValueError("Bayesian p-values must lie in [0, 1]")

    def as_dict(self) -> dict:
        return {
            "p_deviance": self.p_deviance,
            "p_events": self.p_events,
            "p_changes": self.p_changes,
            "summaries": self.summaries,
        }


def posterior_predictive_check(
    draws: PosteriorDraws,
    data: TrialSeries,
    spec: ModelSpec,
    rng: np.random.Generator,
) -> PpcReport:
    """Run the three-statistic posterior predictive check.

    Statistics: overall deviance against the per-draw plug-in probabilities,
    the event count, and the count of outcome changes.  Missing outcome days
    are excluded from both the observed and replicated statistics.
    """
    y_rep, pi_hat = ppc_replicate(draws, data, spec, rng)
    observed = ~np.isnan(data.y)
    n = y_rep.shape[0]
    dev_rep = np.empty(n)
    dev_obs = np.empty(n)
    ev_rep = np.empty(n)
    ch_rep = np.empty(n)
    for s in range(n):
        y_s = np.where(observed, y_rep[s], np.nan)
        dev_rep[s] = stat_deviance(y_s, pi_hat[s])
        dev_obs[s] = stat_deviance(data.y, pi_hat[s])
        ev_rep[s] = stat_num_events(y_s)
        ch_rep[s] = stat_num_changes(y_s)
    ev_obs = float(stat_num_events(data.y))
    ch_obs = float(stat_num_changes(data.y))

    def summary(rep: np.ndarray, obs) -> dict:
        return {
            "rep_mean": float(np.mean(rep)),
            "rep_sd": float(np.std(rep)),
            "obs_mean": float(np.mean(obs)),
        }

    return PpcReport(
        p_deviance=bayesian_p(dev_rep, dev_obs),
        p_events=bayesian_p(ev_rep, np.full(n, ev_obs)),
        p_changes=bayesian_p(ch_rep, np.full(n, ch_obs)),
        summaries={
            "deviance": summary(dev_rep, dev_obs),
            "num_events": summary(ev_rep, ev_obs),
            "num_changes": summary(ch_rep, ch_obs),
        },
    )
