"""Low-level sampling primitives shared by the Gibbs machinery.

Everything here takes an explicit ``numpy.random.Generator`` and is
deterministic given the generator state, which is what makes whole-chain
reproducibility possible.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded
from scipy.special import ndtr, ndtri

__all__ = [
    "SamplerError",
    "sample_trunc_norm",
    "sample_interval_censored",
    "slice_sample",
    "sample_ar1_given_obs",
    "ar1_log_density",
]

# Below this tail mass the inverse-CDF route loses all precision and we switch
# to exponential-rejection sampling of the tail.
_TAIL_MASS_FLOOR = 1e-290
_TINY = np.finfo(float).tiny


class SamplerError(RuntimeError):
    """An MCMC update failed in a way that must not be silently ignored."""


def _tail_draw(rng: np.random.Generator, a: float) -> float:
    # Robert (1995) exponential rejection for N(0,1) restricted to (a, inf).
    # Only reached for a >> 0 where inverse-CDF sampling underflows.
    alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a - math.log1p(-rng.random()) / alpha
        if math.log1p(-rng.random()) <= -0.5 * (z - alpha) ** 2:
            return z


def _lower_trunc_std(rng: np.random.Generator, a: np.ndarray) -> np.ndarray:
    """Vector of standard-normal draws restricted to (a[k], inf)."""
    a = np.asarray(a, dtype=float)
    p = ndtr(-a)  # upper-tail mass, exact for any a
    # u in (0, 1]; u * p stays strictly positive so ndtri is finite
    u = 1.0 - rng.random(a.shape[0])
    z = -ndtri(u * p)
    if p.size and p.min() <= _TAIL_MASS_FLOOR:
        for idx in np.flatnonzero(p <= _TAIL_MASS_FLOOR):
            z[idx] = _tail_draw(rng, float(a[idx]))
    return np.maximum(z, a)


def sample_interval_censored(
    rng: np.random.Generator,
    mean: np.ndarray,
    sd: float,
    indicator: np.ndarray,
) -> np.ndarray:
    """Draw z[k] ~ N(mean[k], sd^2) censored against zero by a binary flag.

    indicator 1 forces z > 0, indicator 0 forces z <= 0, NaN leaves the draw
    unconstrained.  This is the latent-variable step of probit data
    augmentation; the sign contract is enforced exactly.
    """
    mean = np.asarray(mean, dtype=float)
    indicator = np.asarray(indicator, dtype=float)

    free = np.isnan(indicator)
    if free.any():
        z = np.empty_like(mean)
        obs = ~free
        if obs.any():
            z[obs] = sample_interval_censored(rng, mean[obs], sd, indicator[obs])
        z[free] = mean[free] + sd * rng.standard_normal(int(free.sum()))
        return z

    # All observed: reflect indicator-0 sites so every draw is lower-truncated.
    sign = np.where(indicator == 1.0, 1.0, -1.0)
    signed_mean = sign * mean
    z = signed_mean + sd * _lower_trunc_std(rng, -signed_mean / sd)
    # Guard against rounding right at the boundary: the sign of the latent
    # must always agree with the observed indicator.
    return sign * np.maximum(z, _TINY)


def sample_trunc_norm(
    rng: np.random.Generator,
    mean: float,
    sd: float,
    lower: float,
    upper: float,
) -> float:
    """One draw from N(mean, sd^2) restricted to [lower, upper]."""
    if not lower < upper:
        raise ValueError(f"empty truncation interval [{lower}, {upper}]")
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    u = 1.0 - rng.random()
    if a >= 0.0:  # entire interval in the right tail: work with survival mass
        sf_a, sf_b = ndtr(-a), ndtr(-b)
        if sf_a - sf_b > 0.0:
            z = -ndtri(sf_b + u * (sf_a - sf_b))
        else:
            z = _reject_interval(rng, a, b)
    elif b <= 0.0:  # left tail: CDF values are small and exact there
        cdf_a, cdf_b = ndtr(a), ndtr(b)
        if cdf_b - cdf_a > 0.0:
            z = ndtri(cdf_a + u * (cdf_b - cdf_a))
        else:
            z = -_reject_interval(rng, -b, -a)
    else:
        cdf_a, cdf_b = ndtr(a), ndtr(b)
        z = ndtri(cdf_a + u * (cdf_b - cdf_a))
    z = min(max(z, a), b)
    return float(min(max(mean + sd * z, lower), upper))


def _reject_interval(rng: np.random.Generator, a: float, b: float) -> float:
    # Right-tail interval [a, b], 0 <= a < b, whose mass underflows float64.
    for _ in range(10_000):
        z = _tail_draw(rng, a)
        if z <= b:
            return z
    # Interval so improbable that rejection stalls; pin to the likelier edge.
    return a


def slice_sample(
    rng: np.random.Generator,
    x0: float,
    log_density,
    width: float = 0.2,
    max_steps: int = 100,
    lower: float = -np.inf,
    upper: float = np.inf,
) -> float:
    """Univariate slice sampling with stepping out (Neal 2003).

    ``log_density`` may return -inf outside its support; NaN aborts the chain
    because it means the target itself is broken, not merely zero.
    """

    def logf(x: float) -> float:
        if x <= lower or x >= upper:
            return -np.inf
        v = float(log_density(x))
        if np.isnan(v):
            raise SamplerError(f"non-finite log density at x={x!r}")
        return v

    f0 = logf(x0)
    if not np.isfinite(f0):
        raise SamplerError(f"non-finite log density at current state x={x0!r}")
    log_y = f0 + math.log(1.0 - rng.random())

    left = x0 - width * rng.random()
    right = left + width
    steps = max_steps
    while left > lower and logf(left) > log_y:
        left -= width
        steps -= 1
        if steps < 0:
            raise SamplerError("slice bracket failed to step out (left)")
    left = max(left, lower)
    steps = max_steps
    while right < upper and logf(right) > log_y:
        right += width
        steps -= 1
        if steps < 0:
            raise SamplerError("slice bracket failed to step out (right)")
    right = min(right, upper)

    for _ in range(1000):
        x1 = left + (right - left) * rng.random()
        if logf(x1) > log_y:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    raise SamplerError("slice shrinkage failed to find an acceptable point")


def _ar1_precision_banded(n: int, var_marg: float, phi: float) -> np.ndarray:
    """Upper-banded (2, n) precision of a stationary AR(1) path."""
    innov_var = var_marg * (1.0 - phi * phi)
    ab = np.zeros((2, n))
    ab[1, :] = (1.0 + phi * phi) / innov_var
    ab[1, 0] = 1.0 / innov_var
    ab[1, n - 1] = 1.0 / innov_var
    ab[0, 1:] = -phi / innov_var
    return ab


def sample_ar1_given_obs(
    rng: np.random.Generator,
    obs_sum: np.ndarray,
    n_obs: int,
    obs_var: float,
    var_marg: float,
    phi: float,
) -> np.ndarray:
    """Exact joint draw of a stationary AR(1) path given site-wise Gaussian data.

    Site k carries ``n_obs`` independent observations of u_k with common
    variance ``obs_var``; ``obs_sum[k]`` is their sum.  The posterior is a
    Gaussian with tridiagonal precision, so the forward filter / backward
    sampler is realised through the banded Cholesky factor: factorising the
    precision is the information-form forward pass and back-substituting a
    standard-normal vector is the backward sampling pass.
    """
    obs_sum = np.asarray(obs_sum, dtype=float)
    n = obs_sum.shape[0]
    if n == 1:
        post_var = 1.0 / (1.0 / var_marg + n_obs / obs_var)
        post_mean = post_var * obs_sum[0] / obs_var
        return np.array([post_mean + math.sqrt(post_var) * rng.standard_normal()])

    ab = _ar1_precision_banded(n, var_marg, phi)
    ab[1, :] += n_obs / obs_var
    chol = cholesky_banded(ab, lower=False, check_finite=False)
    mean = cho_solve_banded((chol, False), obs_sum / obs_var, check_finite=False)
    noise = solve_banded((0, 1), chol, rng.standard_normal(n), check_finite=False)
    return mean + noise


def ar1_log_density(u: np.ndarray, var_marg: float, phi: float) -> float:
    """Log density of a stationary AR(1) path (up to the 2*pi constant)."""
    n = u.shape[0]
    innov_var = var_marg * (1.0 - phi * phi)
    quad = u[0] * u[0] / var_marg
    logdet = math.log(var_marg)
    if n > 1:
        diff = u[1:] - phi * u[:-1]
        quad += float(diff @ diff) / innov_var
        logdet += (n - 1) * math.log(innov_var)
    return -0.5 * (logdet + quad)
